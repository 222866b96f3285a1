"""Seeded random-outage batches: build, solve, validate and tabulate.

Every scenario draws from its own Philox stream keyed by (seed, k, index),
so a record does not depend on which other scenarios ran or in what order.
"""
from __future__ import annotations

import csv
import io
import json
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .builder import build
from .feeder import Feeder, FeederError, OutageScenario, derive_post_outage
from .graph import enumerate_bs_paths, enumerate_cycles, enumerate_nbs_paths
from .solver.bnb import solve_milp
from .validator import RestorationPlan, extract_plan, validate

RECORD_COLUMNS = ("k", "scenario_index", "failed_edges", "restored_pct", "objective",
                  "switch_changes", "wall_ms", "status", "valid")
AGGREGATE_COLUMNS = ("k", "n", "max_ms", "median_ms", "mean_restored_pct")


class BatchAborted(RuntimeError):
    """A plan failed validation or a scenario was infeasible."""

    def __init__(self, message: str, scenario: dict | None = None):
        super().__init__(message)
        self.scenario = scenario


@dataclass(frozen=True)
class BatchSpec:
    feeder: Feeder
    k_values: tuple[int, ...] = (1, 2, 3, 4, 5)
    n_per_k: int = 200
    seed: int = 2019
    lam: float | None = None
    gap_tol: float = 1e-6
    time_limit: float = 300.0
    node_limit: int | None = None
    tight: bool = False
    widen_eligibility: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.n_per_k < 1:
            raise ValueError("n_per_k must be at least 1")
        n_elig = len(eligible_edges(self.feeder, self.widen_eligibility))
        for k in self.k_values:
            if not 0 <= k <= n_elig:
                raise ValueError(f"k={k} outside [0, {n_elig}] outage-eligible edges")


@dataclass
class ScenarioRecord:
    k: int
    index: int
    failed_edges: tuple[int, ...]
    restored_pct: float
    objective: float
    switch_changes: int
    wall_ms: float
    status: str
    valid: bool
    nodes: int = 0
    served_kw: float = 0.0
    floor_pct: float = 0.0
    scenario: OutageScenario | None = field(default=None, repr=False)
    plan: RestorationPlan | None = field(default=None, repr=False)


@dataclass
class BatchResult:
    records: list[ScenarioRecord]
    aggregates: list[dict]

    def records_csv(self, mask_timing: bool = False) -> str:
        return records_csv(self.records, mask_timing)

    def aggregates_csv(self, mask_timing: bool = False) -> str:
        return aggregates_csv(self.aggregates, mask_timing)


def eligible_edges(feeder: Feeder, widen: bool = False) -> list[int]:
    """Lines that may fail; `widen` also admits switches and regulators."""
    kinds = ("in_service", "switch", "regulator") if widen else ("in_service",)
    return [e.id for e in feeder.edges if e.kind in kinds and e.outage_eligible]


def scenario_rng(seed: int, k: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k, index))))


def sample_scenario(feeder: Feeder, k: int, rng: np.random.Generator, widen: bool = False,
                    seed: int | None = None) -> OutageScenario:
    """k distinct eligible lines fail; solar availability is uniform on [0, rating]."""
    pool = eligible_edges(feeder, widen)
    if not 0 <= k <= len(pool):
        raise FeederError(f"cannot fail {k} lines: only {len(pool)} are eligible")
    failed = sorted(int(e) for e in rng.choice(pool, size=k, replace=False)) if k else []
    solar = {i: float(rng.uniform(0.0, feeder.buses[i].p_max)) for i in feeder.non_black_start}
    return derive_post_outage(feeder, failed, solar_avail=solar, seed=seed)


def restored_load_pct(feeder: Feeder, scenario: OutageScenario, plan: RestorationPlan) -> float:
    """Served load magnitude over total nominal load, in percent."""
    total = feeder.total_load
    if total <= 0:
        return 100.0
    served = sum(abs(plan.p[i]) for i in feeder.load_buses if plan.x[i])
    return float(np.clip(100.0 * served / total, 0.0, 100.0))


def floor_load_pct(feeder: Feeder, scenario: OutageScenario) -> float:
    """Least restorable percentage once x0 buses must stay energized."""
    total = feeder.total_load
    if total <= 0:
        return 100.0
    least = sum(abs(feeder.buses[i].p_max) for i in feeder.load_buses if scenario.x0[i])
    return 100.0 * least / total


class _Context:
    """Graph families are a property of the feeder, shared by all scenarios."""

    def __init__(self, spec: BatchSpec):
        self.spec = spec
        f = spec.feeder
        self.cycles = enumerate_cycles(f)
        self.nbs = enumerate_nbs_paths(f)
        self.bs = enumerate_bs_paths(f)

    def run(self, k: int, index: int) -> ScenarioRecord:
        spec, f = self.spec, self.spec.feeder
        scenario = sample_scenario(f, k, scenario_rng(spec.seed, k, index),
                                   spec.widen_eligibility, seed=spec.seed)
        lam = f.lam if spec.lam is None else spec.lam
        start = time.perf_counter()
        model = build(f, scenario, self.cycles, self.nbs, self.bs, lam=lam, tight=spec.tight)
        report = solve_milp(model, gap_tol=spec.gap_tol, time_limit=spec.time_limit,
                            node_limit=spec.node_limit)
        wall_ms = 1000.0 * (time.perf_counter() - start)
        replay = {"k": k, "scenario_index": index, "seed": spec.seed, **scenario.to_dict()}
        if report.status == "infeasible":
            raise BatchAborted(f"scenario (k={k}, index={index}) is infeasible, "
                               "which the formulation rules out", replay)
        if not report.has_solution:
            return ScenarioRecord(k, index, tuple(sorted(scenario.failed_edges)), float("nan"),
                                  float("nan"), 0, wall_ms, report.status, False, report.nodes,
                                  scenario=scenario)
        plan = extract_plan(f, scenario, model, report.values, report.objective, lam)
        check = validate(f, scenario, plan)
        if not check.passed:
            replay["violations"] = [str(v) for v in check.violations]
            raise BatchAborted(f"plan for scenario (k={k}, index={index}) failed validation: "
                               + "; ".join(str(v) for v in check.violations[:5]), replay)
        changes = sum(abs(plan.y[e] - scenario.y0[e]) for e in f.switches)
        served = -sum(plan.p[i] for i in f.load_buses)
        return ScenarioRecord(
            k, index, tuple(sorted(scenario.failed_edges)), restored_load_pct(f, scenario, plan),
            report.objective, changes, wall_ms, report.status, True, report.nodes, served,
            floor_load_pct(f, scenario), scenario, plan,
        )


_worker_ctx: _Context | None = None


def _init_worker(spec: BatchSpec):
    global _worker_ctx
    _worker_ctx = _Context(spec)


def _run_task(task):
    rec = _worker_ctx.run(*task)
    return rec


def run_batch(spec: BatchSpec, progress: Callable[[ScenarioRecord], None] | None = None
              ) -> BatchResult:
    tasks = [(k, idx) for k in spec.k_values for idx in range(spec.n_per_k)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers, initializer=_init_worker, initargs=(spec,)) as pool:
            records = []
            for rec in pool.map(_run_task, tasks, chunksize=4):
                records.append(rec)
                if progress:
                    progress(rec)
    else:
        ctx = _Context(spec)
        records = []
        for task in tasks:
            rec = ctx.run(*task)
            records.append(rec)
            if progress:
                progress(rec)
    records.sort(key=lambda r: (r.k, r.index))
    return BatchResult(records, aggregate(records))


def aggregate(records: Sequence[ScenarioRecord]) -> list[dict]:
    out = []
    for k in sorted({r.k for r in records}):
        group = [r for r in records if r.k == k]
        times = [r.wall_ms for r in group]
        pcts = [r.restored_pct for r in group if r.valid]
        out.append({
            "k": k,
            "n": len(group),
            "max_ms": max(times),
            "median_ms": statistics.median(times),
            "mean_restored_pct": statistics.fmean(pcts) if pcts else float("nan"),
        })
    return out


def _ms(value: float, mask: bool) -> str:
    return "NA" if mask else f"{value:.3f}"


def records_csv(records: Sequence[ScenarioRecord], mask_timing: bool = False) -> str:
    """Per-scenario table; `mask_timing` blanks the wall-clock column so that
    repeated runs can be compared byte for byte."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow([r.k, r.index, ";".join(map(str, r.failed_edges)), f"{r.restored_pct:.6f}",
                    f"{r.objective:.6f}", r.switch_changes, _ms(r.wall_ms, mask_timing),
                    r.status, int(r.valid)])
    return buf.getvalue()


def aggregates_csv(aggregates: Sequence[dict], mask_timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_COLUMNS)
    for a in aggregates:
        w.writerow([a["k"], a["n"], _ms(a["max_ms"], mask_timing), _ms(a["median_ms"], mask_timing),
                    f"{a['mean_restored_pct']:.6f}"])
    return buf.getvalue()


def with_lambda(spec: BatchSpec, lam: float) -> BatchSpec:
    return replace(spec, lam=lam)


def dump_replay(exc: BatchAborted) -> str:
    return json.dumps(exc.scenario, indent=2, sort_keys=True)
