import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsrmilp.builder import build_for
from dsrmilp.feeder import derive_post_outage
from dsrmilp.model import MilpModel
from dsrmilp.solver.bnb import relative_gap, solve_milp
from oracles import brute_force_milp, highs_milp, model_from_arrays, random_feeder, toy_feeder


def random_milp(rng):
    nb = int(rng.integers(1, 9))
    nc = int(rng.integers(0, 4))
    n = nb + nc
    m = int(rng.integers(1, 7))
    A = np.round(rng.normal(size=(m, n)), 2)
    lb = np.zeros(n)
    ub = np.ones(n)
    ub[nb:] = rng.integers(1, 5, size=nc)
    lb[nb:] = -rng.integers(0, 3, size=nc)
    x0 = np.concatenate([rng.integers(0, 2, size=nb), lb[nb:] + rng.random(nc) * (ub[nb:] - lb[nb:])])
    hi = A @ x0 + rng.uniform(0, 1.5, size=m)
    lo = np.full(m, -np.inf)
    c = np.round(rng.normal(size=n), 2)
    is_bin = np.arange(n) < nb
    return model_from_arrays(c, A, lo, hi, lb, ub, is_bin)


def test_toy_outage_closes_the_switch():
    f = toy_feeder()
    s = derive_post_outage(f, {0})
    m = build_for(f, s)
    rep = solve_milp(m)
    assert rep.status == "optimal"
    assert round(rep.values[m.var("y[1]")]) == 1
    assert rep.objective == pytest.approx(-100.0 + f.lam, abs=1e-9)
    assert rep.objective == pytest.approx(brute_force_milp(m), abs=1e-6)


def test_all_binaries_fixed_is_solved_at_the_root():
    m = MilpModel()
    a = m.add_var("a", 1, 1, binary=True)
    b = m.add_var("b", 0, 0, binary=True)
    x = m.add_var("x", 0, 10)
    m.add_row([(x, 1.0), (a, -3.0), (b, 1.0)], "<=", 0.0)
    m.set_objective([(x, -1.0)])
    rep = solve_milp(m)
    assert rep.status == "optimal" and rep.nodes == 1
    assert rep.objective == pytest.approx(-3.0)


def test_infeasible_model():
    m = MilpModel()
    x = m.add_var("x", 0, 1, binary=True)
    m.add_row([(x, 1.0)], ">=", 0.3)
    m.add_row([(x, 1.0)], "<=", 0.7)
    m.set_objective([(x, 1.0)])
    rep = solve_milp(m)
    assert rep.status == "infeasible" and not rep.has_solution


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_milps_match_enumeration(seed):
    m = random_milp(np.random.default_rng(seed))
    expected = brute_force_milp(m)
    rep = solve_milp(m)
    if np.isinf(expected):
        assert rep.status == "infeasible"
        return
    assert rep.status == "optimal"
    assert rep.objective == pytest.approx(expected, abs=1e-6 * max(1.0, abs(expected)))
    _check_report(m, rep)


def _check_report(m, rep):
    assert m.max_violation(rep.values) <= 1e-7
    for j in m.binaries():
        assert abs(rep.values[j] - round(rep.values[j])) <= 1e-6
    assert rep.gap == relative_gap(rep.objective, rep.bound) >= 0
    assert rep.gap <= 1e-6
    trace = np.array(rep.bound_trace)
    assert np.all(np.diff(trace) >= 0)
    inc = rep.incumbent_trace
    assert all(b < a for a, b in zip(inc, inc[1:]))


def test_random_toy_feeders_match_enumeration():
    used = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        f = random_feeder(rng)
        lines = [e.id for e in f.edges if e.kind == "in_service"]
        failed = [int(rng.choice(lines))] if lines and rng.random() < 0.6 else []
        m = build_for(f, derive_post_outage(f, failed))
        _, _, _, _, lb, ub, is_bin = m.arrays()
        if (is_bin & (lb < ub)).sum() > 12:
            continue
        used += 1
        expected = brute_force_milp(m)
        rep = solve_milp(m)
        if np.isinf(expected):
            assert rep.status == "infeasible"
        else:
            assert rep.objective == pytest.approx(expected, abs=1e-6 * max(1.0, abs(expected)))
            _check_report(m, rep)
        if used == 60:
            break
    assert used == 60


def test_limits_are_reported(ieee37):
    m = build_for(ieee37, derive_post_outage(ieee37, {10, 14, 25}))
    rep = solve_milp(m, node_limit=2)
    assert rep.status == "node_limit" and rep.nodes == 2
    rep = solve_milp(m, time_limit=0.0)
    assert rep.status == "time_limit"


def test_deterministic_reports(ieee37):
    m = build_for(ieee37, derive_post_outage(ieee37, {10, 14, 25}))
    a, b = solve_milp(m), solve_milp(m)
    assert (a.nodes, a.objective, a.lp_iterations) == (b.nodes, b.objective, b.lp_iterations)
    assert np.array_equal(a.values, b.values)


def test_three_line_outage(ieee37):
    failed = {ieee37.edge_between(a, b).id for a, b in (("705", "712"), ("708", "733"), ("720", "706"))}
    m = build_for(ieee37, derive_post_outage(ieee37, failed))
    rep = solve_milp(m)
    assert rep.status == "optimal"
    _check_report(m, rep)
    assert rep.objective == pytest.approx(highs_milp(m), abs=1e-6)
    # 706 and 725 stay dark; the tie 712-713 closes
    for name in ("706", "725"):
        assert round(rep.values[m.var(f"x[{ieee37.bus_by_name(name).id}]")]) == 0
    assert round(rep.values[m.var(f"y[{ieee37.edge_between('712', '713').id}]")]) == 1
