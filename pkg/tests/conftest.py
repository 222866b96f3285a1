import functools

import pytest

from dsrmilp.ieee37 import builtin_ieee37

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def ieee37():
    return builtin_ieee37()


@functools.lru_cache(maxsize=None)
def default_batch(seed: int = 2019):
    """The 5 x 200 random-outage batch, run once per session."""
    from dsrmilp.harness import BatchSpec, run_batch

    return run_batch(BatchSpec(builtin_ieee37(), seed=seed))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, note = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {note}")
