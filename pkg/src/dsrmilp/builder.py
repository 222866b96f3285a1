"""Assemble the restoration MILP for a feeder and an outage scenario."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .feeder import Feeder, OutageScenario
from .graph import EdgeIndicator, group_by_source
from .model import MilpModel


class BuildError(ValueError):
    pass


def tap_ratio_table(count: int = 33, step: float = 0.00625) -> np.ndarray:
    """Squared voltage ratios of the regulator tap positions, lowest tap first."""
    mid = (count + 1) // 2
    k = np.arange(1, count + 1)
    return (1.0 + step * (k - mid)) ** 2


def add_mccormick(model: MilpModel, b: int, y: int, name: str, tag: str = "") -> int:
    """Add z = b*y for binary b and bounded continuous y via four rows."""
    var_b = model.variables[b]
    var_y = model.variables[y]
    if not var_b.binary:
        raise BuildError(f"{var_b.name} is not binary")
    lo, hi = var_y.lower, var_y.upper
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise BuildError(f"{var_y.name} is unbounded; McCormick needs finite bounds")
    z = model.add_var(name, min(0.0, lo), max(0.0, hi))
    tag = tag or name
    model.add_row([(b, lo), (z, -1.0)], "<=", 0.0, f"{tag} b*lo<=z")
    model.add_row([(z, 1.0), (b, -hi)], "<=", 0.0, f"{tag} z<=b*hi")
    model.add_row([(y, 1.0), (b, hi), (z, -1.0)], "<=", hi, f"{tag} y+(b-1)hi<=z")
    model.add_row([(z, 1.0), (y, -1.0), (b, -lo)], "<=", -lo, f"{tag} z<=y+(b-1)lo")
    return z


def _check_inputs(feeder: Feeder, scenario: OutageScenario):
    if len(scenario.x0) != feeder.n_buses or len(scenario.y0) != feeder.n_edges:
        raise BuildError("scenario does not match the feeder dimensions")
    for eid in scenario.failed_edges:
        if scenario.y0[eid]:
            raise BuildError(f"failed edge {eid} is listed as in service")
    if not scenario.x0[0]:
        raise BuildError("root must be energized in x0")


def build(
    feeder: Feeder,
    scenario: OutageScenario,
    cycles: Sequence[EdgeIndicator],
    nbs_paths: Sequence[EdgeIndicator],
    bs_paths: Sequence[EdgeIndicator],
    lam: float | None = None,
    tight: bool = False,
) -> MilpModel:
    _check_inputs(feeder, scenario)
    lam = feeder.lam if lam is None else lam
    failed = scenario.failed_edges
    m = MilpModel(feeder.name or "dsr")
    v0 = feeder.v0

    # bus variables and gating
    x, v, p, q = {}, {}, {}, {}
    for b in feeder.buses:
        i = b.id
        x[i] = m.add_var(f"x[{i}]", 1.0 if i == 0 else 0.0, 1.0, binary=True)
        p_max = scenario.solar_avail.get(i, b.p_max)
        v[i] = m.add_var(f"v[{i}]", min(0.0, b.v_min), max(0.0, b.v_max))
        p[i] = m.add_var(f"p[{i}]", min(0.0, b.p_min), max(0.0, p_max))
        q[i] = m.add_var(f"q[{i}]", min(0.0, b.q_min), max(0.0, b.q_max))
        for var, lo, hi, label in ((v[i], b.v_min, b.v_max, "v"),
                                   (p[i], b.p_min, p_max, "p"),
                                   (q[i], b.q_min, b.q_max, "q")):
            m.add_row([(x[i], lo), (var, -1.0)], "<=", 0.0, f"injection {label} lower bus {i}")
            m.add_row([(var, 1.0), (x[i], -hi)], "<=", 0.0, f"injection {label} upper bus {i}")
        if b.fix_power_factor and b.kind == "load_elastic" and b.p_min != 0:
            m.add_row([(q[i], 1.0), (p[i], -b.q_min / b.p_min)], "=", 0.0, f"pf bus {i}")
        m.add_row([(x[i], 1.0)], ">=", float(scenario.x0[i]), f"x>=x0 bus {i}")

    # edge statuses and flow gating
    y, P, Q = {}, {}, {}
    for e in feeder.edges:
        k = e.id
        if k in failed or e.kind == "out_of_service":
            lo, hi = 0.0, 0.0
        elif e.kind == "switch":
            lo, hi = 0.0, 1.0
        else:
            lo, hi = 1.0, 1.0
        y[k] = m.add_var(f"y[{k}]", lo, hi, binary=True)
        P[k] = m.add_var(f"P[{k}]", min(0.0, e.P_min), max(0.0, e.P_max))
        Q[k] = m.add_var(f"Q[{k}]", min(0.0, e.Q_min), max(0.0, e.Q_max))
        for var, flo, fhi, label in ((P[k], e.P_min, e.P_max, "P"), (Q[k], e.Q_min, e.Q_max, "Q")):
            m.add_row([(y[k], flo), (var, -1.0)], "<=", 0.0, f"flow {label} lower edge {k}")
            m.add_row([(var, 1.0), (y[k], -fhi)], "<=", 0.0, f"flow {label} upper edge {k}")

    # nodal balance
    out_edges = {i: [] for i in range(feeder.n_buses)}
    in_edges = {i: [] for i in range(feeder.n_buses)}
    for e in feeder.edges:
        out_edges[e.from_bus].append(e.id)
        in_edges[e.to_bus].append(e.id)
    for i in range(feeder.n_buses):
        for inj, flow, label in ((p, P, "active"), (q, Q, "reactive")):
            row = [(inj[i], 1.0)]
            row += [(flow[k], -1.0) for k in out_edges[i]]
            row += [(flow[k], 1.0) for k in in_edges[i]]
            m.add_row(row, "=", 0.0, f"{label} balance bus {i}")

    # voltage drop on lines
    scale = 2.0 / feeder.base_kva
    for e in feeder.edges:
        k, i, j = e.id, e.from_bus, e.to_bus
        if e.kind == "regulator":
            continue
        lo, hi = m.variables[y[k]].lower, m.variables[y[k]].upper
        if hi == 0.0:
            continue
        if lo == 1.0:
            m.add_row([(v[i], 1.0), (v[j], -1.0), (P[k], -scale * e.r), (Q[k], -scale * e.x)],
                      "=", 0.0, f"drop edge {k}")
            continue
        zi = add_mccormick(m, y[k], v[i], f"z[yvi,{k}]", f"envelope y*v_from edge {k}")
        zj = add_mccormick(m, y[k], v[j], f"z[yvj,{k}]", f"envelope y*v_to edge {k}")
        if tight:
            zP, zQ = P[k], Q[k]
        else:
            zP = add_mccormick(m, y[k], P[k], f"z[yP,{k}]", f"envelope y*P edge {k}")
            zQ = add_mccormick(m, y[k], Q[k], f"z[yQ,{k}]", f"envelope y*Q edge {k}")
        m.add_row([(zi, 1.0), (zj, -1.0), (zP, -scale * e.r), (zQ, -scale * e.x)],
                  "=", 0.0, f"drop edge {k}")

    # regulators
    ratios = tap_ratio_table(feeder.tap_count, feeder.tap_step)
    for r in feeder.regulators:
        if r in failed:
            continue
        e = feeder.edges[r]
        i, j = e.from_bus, e.to_bus
        taps = [m.add_var(f"t[{r},{k + 1}]", 0.0, 1.0, binary=True) for k in range(len(ratios))]
        m.add_row([(t, 1.0) for t in taps], "=", 1.0, f"one tap regulator {r}")
        zs = [add_mccormick(m, t, v[i], f"z[tv,{r},{k + 1}]", f"envelope t*v regulator {r} tap {k + 1}")
              for k, t in enumerate(taps)]
        m.add_row([(v[j], 1.0)] + [(z, -c) for z, c in zip(zs, ratios)], "=", 0.0,
                  f"ratio regulator {r}")

    # radiality
    for n, cyc in enumerate(cycles):
        m.add_row([(y[k], 1.0) for k in cyc.edges], "<=", cyc.length - 1.0, f"cycle {n}")

    # status propagation
    for e in feeder.edges:
        k, i, j = e.id, e.from_bus, e.to_bus
        m.add_row([(x[i], 1.0), (x[j], -1.0), (y[k], 1.0)], "<=", 1.0, f"propagation edge {k} a")
        m.add_row([(x[j], 1.0), (x[i], -1.0), (y[k], 1.0)], "<=", 1.0, f"propagation edge {k} b")

    # non-black-start reachability
    nbs_groups = group_by_source(nbs_paths)
    for i in feeder.non_black_start:
        deltas = []
        for k, path in enumerate(nbs_groups.get(i, []), start=1):
            d = m.add_var(f"delta[{i},{k}]", 0.0, 1.0, binary=True)
            deltas.append(d)
            m.add_row([(d, float(path.length))] + [(y[e], -1.0) for e in path.edges], "<=", 0.0,
                      f"nbs path {k} gen {i}")
        m.add_row([(x[i], 1.0)] + [(d, -1.0) for d in deltas], "<=", 0.0, f"nbs gen {i}")

    # black-start coordination
    bs_groups = group_by_source(bs_paths)
    for i in feeder.black_start:
        eps_paths = []
        for l, path in enumerate(bs_groups.get(i, []), start=1):
            ep = m.add_var(f"eps_path[{i},{l}]", 0.0, 1.0, binary=True)
            eps_paths.append(ep)
            m.add_row([(y[e], 1.0) for e in path.edges] + [(ep, -1.0)], "<=", path.length - 1.0,
                      f"bs closed path {l} gen {i}")
            m.add_row([(ep, float(path.length))] + [(y[e], -1.0) for e in path.edges], "<=", 0.0,
                      f"bs open path {l} gen {i}")
        mode = m.add_var(f"eps_mode[{i}]", 0.0, 1.0, binary=True)
        for l, ep in enumerate(eps_paths, start=1):
            m.add_row([(ep, 1.0), (mode, -1.0)], "<=", 0.0, f"mode max path {l} gen {i}")
        m.add_row([(mode, 1.0)] + [(ep, -1.0) for ep in eps_paths], "<=", 0.0, f"mode sum gen {i}")
        m.add_row([(v[i], 1.0), (x[i], -v0), (mode, -v0)], "<=", 0.0, f"pv upper gen {i}")
        m.add_row([(v[i], -1.0), (x[i], v0), (mode, -v0)], "<=", 0.0, f"pv lower gen {i}")

    # switching changes and objective
    objective = [(p[i], 1.0) for i in feeder.objective_buses]
    for k in feeder.switches:
        if k in failed:
            continue
        s = m.add_var(f"s[{k}]", 0.0, 1.0)
        y0 = float(scenario.y0[k])
        m.add_row([(s, 1.0), (y[k], -1.0)], ">=", -y0, f"change edge {k} a")
        m.add_row([(s, 1.0), (y[k], 1.0)], ">=", y0, f"change edge {k} b")
        objective.append((s, lam))
    m.set_objective(objective)
    return m


def build_for(feeder: Feeder, scenario: OutageScenario, lam: float | None = None,
              tight: bool = False) -> MilpModel:
    """Enumerate the graph families and build in one call."""
    from .graph import enumerate_bs_paths, enumerate_cycles, enumerate_nbs_paths

    return build(feeder, scenario, enumerate_cycles(feeder), enumerate_nbs_paths(feeder),
                 enumerate_bs_paths(feeder), lam=lam, tight=tight)
