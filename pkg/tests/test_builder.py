import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsrmilp.builder import BuildError, add_mccormick, build, build_for, tap_ratio_table
from dsrmilp.feeder import Bus, Edge, Feeder, OutageScenario, derive_post_outage
from dsrmilp.model import MilpModel
from dsrmilp.solver.bnb import solve_milp
from dsrmilp.solver.lp import LpRelaxation
from oracles import toy_feeder

FAMILIES = {"x", "y", "v", "p", "q", "P", "Q", "t", "delta", "eps_path", "eps_mode", "z", "s"}


def test_tap_ratios():
    c = tap_ratio_table()
    assert len(c) == 33
    assert c[16] == 1.0
    assert np.isclose(c[32], 1.21)
    assert np.isclose(c[0], 0.81)
    assert np.all(np.diff(c) > 0)


def _envelope_interval(model, z, b_val, y_val, b, y):
    """Feasible z range once b and y are fixed, read off the model rows."""
    lo, hi = model.variables[z].lower, model.variables[z].upper
    for con in model.constraints:
        coefs = dict(con.coefs)
        if z not in coefs:
            continue
        a = coefs.pop(z)
        rest = con.rhs - coefs.get(b, 0.0) * b_val - coefs.get(y, 0.0) * y_val
        bound = rest / a
        upper = (con.sense == "<=") == (a > 0)
        if con.sense == "=":
            lo, hi = max(lo, bound), min(hi, bound)
        elif upper:
            hi = min(hi, bound)
        else:
            lo = max(lo, bound)
    return lo, hi


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(0, 60), st.sampled_from([0, 1]), st.floats(0, 1))
def test_mccormick_collapses_to_product(lo, width, b_val, frac):
    m = MilpModel()
    b = m.add_var("b", 0, 1, binary=True)
    y = m.add_var("y", lo, lo + width)
    z = add_mccormick(m, b, y, "z")
    y_val = lo + frac * width
    zlo, zhi = _envelope_interval(m, z, b_val, y_val, b, y)
    assert zhi - zlo <= 1e-9 * max(1.0, abs(lo) + width)
    assert zlo - 1e-9 <= b_val * y_val <= zhi + 1e-9


def test_mccormick_errors():
    m = MilpModel()
    b = m.add_var("b", 0, 1, binary=True)
    c = m.add_var("c", 0, 1)
    free = m.add_var("f", -np.inf, np.inf)
    with pytest.raises(BuildError, match="unbounded"):
        add_mccormick(m, b, free, "z1")
    with pytest.raises(BuildError, match="not binary"):
        add_mccormick(m, c, c, "z2")


def test_mccormick_relaxation_reaches_envelope_floor():
    # with b relaxed and y fixed, minimizing z lands on the envelope's lower face
    m = MilpModel()
    b = m.add_var("b", 0, 1, binary=True)
    y = m.add_var("y", 0.5, 0.5)
    z = add_mccormick(m, b, y, "z")
    m.set_objective([(z, 1.0)])
    sol = LpRelaxation(m).solve()
    assert sol.status == "optimal"
    assert abs(sol.objective - 0.0) < 1e-12


def test_toy_binary_inventory():
    f = toy_feeder()
    m = build_for(f, derive_post_outage(f))
    names = sorted(m.variables[i].name for i in m.binaries())
    # x for 3 buses, y for 2 edges, one black-start path to the root, one mode
    assert names == sorted(["x[0]", "x[1]", "x[2]", "y[0]", "y[1]", "eps_path[2,1]", "eps_mode[2]"])
    free = [m.variables[i].name for i in m.binaries()
            if m.variables[i].lower < m.variables[i].upper]
    assert sorted(free) == sorted(["x[1]", "x[2]", "y[1]", "eps_path[2,1]", "eps_mode[2]"])


def test_fixed_radial_feeder_is_an_lp():
    buses = (Bus(0, "root", -500, 500, -500, 500, 1.0, 1.0),
             Bus(1, "load_fixed", -50, -50, -20, -20), Bus(2, "load_fixed", -30, -30, -10, -10))
    edges = (Edge(0, 0, 1, "in_service", 0.01, 0.01), Edge(1, 1, 2, "in_service", 0.01, 0.01))
    f = Feeder(buses, edges)
    m = build_for(f, derive_post_outage(f))
    relax = LpRelaxation(m)
    assert not relax.is_binary.any()
    rep = solve_milp(m)
    assert rep.status == "optimal" and rep.nodes == 1
    assert np.isclose(rep.objective, -80.0)


def test_builtin_row_families(ieee37):
    m = build_for(ieee37, derive_post_outage(ieee37))
    tags = [c.tag for c in m.constraints]
    assert sum(t.startswith("cycle") for t in tags) == 2
    assert sum(t.startswith("nbs path") for t in tags) == 21
    assert sum(t.startswith("bs open path") for t in tags) == 8
    assert sum(t.startswith("bs closed path") for t in tags) == 8
    fams = {v.family for v in m.variables}
    assert fams == FAMILIES
    assert sum(v.family == "t" for v in m.variables) == 33
    assert sum(v.family == "delta" for v in m.variables) == 21
    assert sum(v.family == "eps_path" for v in m.variables) == 8


def test_build_is_deterministic(ieee37):
    s = derive_post_outage(ieee37, {10, 14})
    assert build_for(ieee37, s).dump() == build_for(ieee37, s).dump()


def test_drop_rows_by_edge_status(ieee37):
    failed = ieee37.edge_between("705", "712").id
    m = build_for(ieee37, derive_post_outage(ieee37, {failed}))
    drop = {c.tag: c for c in m.constraints if c.tag.startswith("drop")}
    assert f"drop edge {failed}" not in drop
    line = ieee37.edge_between("701", "702").id
    assert not any(m.variables[v].family == "z" for v, _ in drop[f"drop edge {line}"].coefs)
    sw = ieee37.switches[0]
    assert {m.variables[v].name for v, _ in drop[f"drop edge {sw}"].coefs} == \
        {f"z[yvi,{sw}]", f"z[yvj,{sw}]", f"z[yP,{sw}]", f"z[yQ,{sw}]"}
    assert f"drop edge {ieee37.regulators[0]}" not in drop


def test_tight_variant_matches(ieee37):
    s = derive_post_outage(ieee37, {ieee37.edge_between("705", "712").id,
                                    ieee37.edge_between("708", "733").id})
    loose, tight = build_for(ieee37, s), build_for(ieee37, s, tight=True)
    assert tight.n_vars < loose.n_vars
    assert abs(solve_milp(loose).objective - solve_milp(tight).objective) < 1e-6


def test_gating_holds_at_solutions(ieee37):
    s = derive_post_outage(ieee37, {ieee37.edge_between("720", "706").id, 2})
    m = build_for(ieee37, s)
    rep = solve_milp(m)
    x = rep.values
    for e in ieee37.edges:
        if round(x[m.var(f"y[{e.id}]")]) == 0:
            assert abs(x[m.var(f"P[{e.id}]")]) < 1e-7 and abs(x[m.var(f"Q[{e.id}]")]) < 1e-7
    for b in ieee37.buses:
        if round(x[m.var(f"x[{b.id}]")]) == 0:
            for fam in "vpq":
                assert abs(x[m.var(f"{fam}[{b.id}]")]) < 1e-7


def test_dead_black_start_unit_is_feasible():
    # the PV row carries x_i, so a de-energized black-start bus can sit at v = 0
    f = toy_feeder()
    m = build_for(f, derive_post_outage(f, {1}))
    m.add_row([(m.var("x[2]"), 1.0)], "<=", 0.0, "keep bus 2 dead")
    rep = solve_milp(m)
    assert rep.status == "optimal"
    assert abs(rep.values[m.var("v[2]")]) < 1e-9


def test_solar_override_caps_injection():
    f = toy_feeder(nbs=True)
    m = build_for(f, derive_post_outage(f, solar_avail={1: 12.5}))
    row = next(c for c in m.constraints if c.tag == "injection p upper bus 1")
    assert dict(row.coefs)[m.var("x[1]")] == -12.5


def test_input_errors(ieee37):
    f = toy_feeder()
    with pytest.raises(BuildError, match="dimensions"):
        build_for(f, derive_post_outage(ieee37))
    bad = OutageScenario(frozenset({0}), (1, 1, 0), (1, 0))
    with pytest.raises(BuildError, match="in service"):
        build_for(f, bad)


def test_switch_change_rows_and_objective():
    f = toy_feeder()
    s = derive_post_outage(f)
    m = build(f, s, [], [], [], lam=0.25)
    assert m.objective[m.var("s[1]")] == 0.25
    assert m.objective[m.var("p[1]")] == 1.0
    assert m.var("p[2]") not in m.objective and m.var("p[0]") not in m.objective
