"""Restoration plans and an independent check of their physical semantics.

The checks here are written against the feeder data and graph searches, not
against the MILP rows, so a modelling slip in the builder shows up as a
violation instead of being validated by the same code that produced it.
"""
from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .feeder import Feeder, OutageScenario
from .graph import energized_components, is_forest

INT_TOL = 1e-6
CHECKS = (
    "bounds", "balance", "voltage_drop", "regulator", "radiality",
    "propagation", "nbs_reachability", "coordination", "no_deenergization", "objective",
)


class PlanError(ValueError):
    """The solver output cannot be read as a plan (e.g. fractional binaries)."""


@dataclass
class RestorationPlan:
    x: list[int]
    y: list[int]
    v: list[float]
    p: list[float]
    q: list[float]
    P: list[float]
    Q: list[float]
    taps: dict[int, int] = field(default_factory=dict)
    modes: dict[int, str] = field(default_factory=dict)  # energized black-start buses only
    objective: float | None = None
    lam: float | None = None
    cleared: list[int] = field(default_factory=list)  # buses of source-less islands set dead

    def to_dict(self) -> dict:
        d = asdict(self)
        d["taps"] = {str(k): t for k, t in self.taps.items()}
        d["modes"] = {str(k): m for k, m in self.modes.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RestorationPlan":
        try:
            return cls(
                x=[int(a) for a in d["x"]], y=[int(a) for a in d["y"]],
                v=[float(a) for a in d["v"]], p=[float(a) for a in d["p"]],
                q=[float(a) for a in d["q"]], P=[float(a) for a in d["P"]],
                Q=[float(a) for a in d["Q"]],
                taps={int(k): int(t) for k, t in d.get("taps", {}).items()},
                modes={int(k): str(m) for k, m in d.get("modes", {}).items()},
                objective=d.get("objective"), lam=d.get("lam"),
                cleared=[int(a) for a in d.get("cleared", [])],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise PlanError(f"malformed plan: {exc}") from exc


@dataclass
class Violation:
    check: str
    entity: str
    magnitude: float

    def __str__(self) -> str:
        return f"{self.check}: {self.entity} ({self.magnitude:.3g})"


@dataclass
class ValidationReport:
    violations: list[Violation]

    @property
    def passed(self) -> bool:
        return not self.violations

    def failed_checks(self) -> set[str]:
        return {v.check for v in self.violations}

    def to_dict(self) -> dict:
        return {"pass": self.passed, "violations": [asdict(v) for v in self.violations]}


# -- extraction ------------------------------------------------------------

def _as_bit(name: str, val: float) -> int:
    r = round(val)
    if abs(val - r) > INT_TOL or r not in (0, 1):
        raise PlanError(f"{name} = {val!r} is not within {INT_TOL} of 0 or 1")
    return int(r)


def extract_plan(feeder: Feeder, scenario: OutageScenario, model, values,
                 objective: float | None = None, lam: float | None = None) -> RestorationPlan:
    """Read a plan off a MILP solution vector through the symbol table."""
    values = np.asarray(values, dtype=float)
    for var in model.variables:
        if var.binary:
            _as_bit(var.name, values[var.id])
    sym = model.symbols

    def get(name):
        return float(values[sym[name]])

    nb, ne = feeder.n_buses, feeder.n_edges
    x = [_as_bit(f"x[{i}]", get(f"x[{i}]")) for i in range(nb)]
    y = [_as_bit(f"y[{k}]", get(f"y[{k}]")) for k in range(ne)]
    taps = {}
    tap_name = re.compile(r"t\[(\d+),(\d+)\]")
    for name, vid in sym.items():
        m = tap_name.fullmatch(name)
        if m and round(values[vid]) == 1:
            r = int(m.group(1))
            if r in taps:
                raise PlanError(f"regulator {r} has more than one active tap")
            taps[r] = int(m.group(2))
    modes = {}
    for i in feeder.black_start:
        if x[i] and f"eps_mode[{i}]" in sym:
            modes[i] = "PQ" if round(get(f"eps_mode[{i}]")) == 1 else "PV"
    plan = RestorationPlan(
        x=x, y=y,
        v=[get(f"v[{i}]") for i in range(nb)], p=[get(f"p[{i}]") for i in range(nb)],
        q=[get(f"q[{i}]") for i in range(nb)], P=[get(f"P[{k}]") for k in range(ne)],
        Q=[get(f"Q[{k}]") for k in range(ne)], taps=taps, modes=modes,
        objective=objective, lam=feeder.lam if lam is None else lam,
    )
    clear_sourceless_islands(feeder, scenario, plan)
    return plan


def clear_sourceless_islands(feeder: Feeder, scenario: OutageScenario, plan: RestorationPlan,
                             tol: float = 1e-6) -> list[int]:
    """De-energize islands that hold no root and no black-start unit.

    Such an island can only balance if every injection in it is zero, so the
    MILP is indifferent to its status; the physical reading is a dead island.
    Islands containing a bus energized before restoration are left alone.
    """
    bs = set(feeder.black_start)
    cleared = []
    for island in energized_components(feeder, plan.x, plan.y):
        if 0 in island or bs.intersection(island):
            continue
        if any(scenario.x0[i] for i in island):
            continue
        if any(abs(plan.p[i]) > tol or abs(plan.q[i]) > tol for i in island):
            continue
        for i in island:
            plan.x[i] = 0
            plan.v[i] = plan.p[i] = plan.q[i] = 0.0
        cleared.extend(island)
    plan.cleared = sorted(plan.cleared + cleared)
    return cleared


# -- checks ----------------------------------------------------------------

def _squared_ratio(feeder: Feeder, k: int) -> float:
    mid = (feeder.tap_count + 1) // 2
    return (1.0 + feeder.tap_step * (k - mid)) ** 2


def _closed_reach(feeder: Feeder, y, start: int) -> set[int]:
    adj: dict[int, list[int]] = {}
    for e in feeder.edges:
        if y[e.id]:
            adj.setdefault(e.from_bus, []).append(e.to_bus)
            adj.setdefault(e.to_bus, []).append(e.from_bus)
    seen = {start}
    todo = deque([start])
    while todo:
        u = todo.popleft()
        for w in adj.get(u, ()):
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return seen


def plan_objective(feeder: Feeder, scenario: OutageScenario, plan: RestorationPlan,
                   lam: float | None = None) -> float:
    """Served-load objective with the switching penalty, from plan values."""
    lam = (plan.lam if plan.lam is not None else feeder.lam) if lam is None else lam
    load = sum(plan.p[i] for i in range(feeder.n_buses)
               if feeder.buses[i].kind in ("load_fixed", "load_elastic"))
    changes = sum(abs(plan.y[k] - scenario.y0[k]) for k in feeder.switches)
    return load + lam * changes


def validate(feeder: Feeder, scenario: OutageScenario, plan: RestorationPlan,
             tol: float = 1e-6) -> ValidationReport:
    nb, ne = feeder.n_buses, feeder.n_edges
    for name, arr, size in (("x", plan.x, nb), ("v", plan.v, nb), ("p", plan.p, nb),
                            ("q", plan.q, nb), ("y", plan.y, ne), ("P", plan.P, ne),
                            ("Q", plan.Q, ne)):
        if len(arr) != size:
            raise PlanError(f"plan.{name} has length {len(arr)}, expected {size}")
    for name, arr in (("x", plan.x), ("y", plan.y)):
        if any(a not in (0, 1) for a in arr):
            raise PlanError(f"plan.{name} is not a 0/1 vector")

    out: list[Violation] = []

    def flag(check, entity, mag):
        out.append(Violation(check, entity, float(mag)))

    def outside(val, lo, hi):
        return max(lo - val, val - hi, 0.0)

    x, y = plan.x, plan.y
    # 1. bounds and gating
    if not x[0]:
        flag("bounds", "root de-energized", 1.0)
    for b in feeder.buses:
        i = b.id
        p_hi = scenario.solar_avail.get(i, b.p_max)
        if x[i]:
            limits = (("v", plan.v[i], b.v_min, b.v_max), ("p", plan.p[i], b.p_min, p_hi),
                      ("q", plan.q[i], b.q_min, b.q_max))
        else:
            limits = (("v", plan.v[i], 0.0, 0.0), ("p", plan.p[i], 0.0, 0.0),
                      ("q", plan.q[i], 0.0, 0.0))
        for label, val, lo, hi in limits:
            gap = outside(val, lo, hi)
            if gap > tol * max(1.0, abs(lo), abs(hi)):
                flag("bounds", f"{label} at bus {b.label}", gap)
        if b.fix_power_factor and b.kind == "load_elastic" and b.p_min != 0 and x[i]:
            gap = abs(plan.q[i] - b.q_min / b.p_min * plan.p[i])
            if gap > tol * max(1.0, abs(plan.q[i])):
                flag("bounds", f"power factor at bus {b.label}", gap)
    for e in feeder.edges:
        k = e.id
        if k in scenario.failed_edges or e.kind == "out_of_service":
            if y[k]:
                flag("bounds", f"failed edge {e.label} closed", 1.0)
        elif e.kind in ("in_service", "regulator") and not y[k]:
            flag("bounds", f"fixed-closed edge {e.label} open", 1.0)
        if y[k]:
            flows = (("P", plan.P[k], e.P_min, e.P_max), ("Q", plan.Q[k], e.Q_min, e.Q_max))
        else:
            flows = (("P", plan.P[k], 0.0, 0.0), ("Q", plan.Q[k], 0.0, 0.0))
        for label, val, lo, hi in flows:
            gap = outside(val, lo, hi)
            if gap > tol * max(1.0, abs(lo), abs(hi)):
                flag("bounds", f"{label} on edge {e.label}", gap)

    # 2. power balance
    net_p = np.zeros(nb)
    net_q = np.zeros(nb)
    for e in feeder.edges:
        net_p[e.from_bus] += plan.P[e.id]
        net_p[e.to_bus] -= plan.P[e.id]
        net_q[e.from_bus] += plan.Q[e.id]
        net_q[e.to_bus] -= plan.Q[e.id]
    for i in range(nb):
        for label, inj, net in (("active", plan.p[i], net_p[i]), ("reactive", plan.q[i], net_q[i])):
            if abs(inj - net) > tol * max(1.0, abs(inj)):
                flag("balance", f"{label} at bus {feeder.buses[i].label}", abs(inj - net))

    # 3. voltage drop on closed lines
    for e in feeder.edges:
        if e.kind == "regulator" or not y[e.id]:
            continue
        drop = 2.0 * (e.r * plan.P[e.id] + e.x * plan.Q[e.id]) / feeder.base_kva
        res = plan.v[e.from_bus] - plan.v[e.to_bus] - drop
        if abs(res) > tol:
            flag("voltage_drop", f"edge {e.label}", abs(res))

    # 4. regulator law
    for r in feeder.regulators:
        e = feeder.edges[r]
        if not y[r]:
            continue
        k = plan.taps.get(r)
        if k is None or not 1 <= k <= feeder.tap_count:
            flag("regulator", f"regulator {e.label} has no valid tap", 1.0)
            continue
        res = plan.v[e.to_bus] - _squared_ratio(feeder, k) * plan.v[e.from_bus]
        if abs(res) > tol:
            flag("regulator", f"regulator {e.label} tap {k}", abs(res))

    # 5. radiality
    if not is_forest(feeder, y):
        flag("radiality", "closed edges contain a cycle", 1.0)

    # 6. status propagation
    for e in feeder.edges:
        if y[e.id] and x[e.from_bus] != x[e.to_bus]:
            flag("propagation", f"edge {e.label}", 1.0)

    # 7. non-black-start reachability
    bs = set(feeder.black_start)
    for i in feeder.non_black_start:
        if not x[i]:
            continue
        reach = _closed_reach(feeder, y, i)
        if 0 not in reach and not any(x[j] for j in reach & bs):
            flag("nbs_reachability", f"generator {feeder.buses[i].label}", 1.0)

    # 8. island coordination
    for island in energized_components(feeder, x, y):
        gens = sorted((i for i in island if i in bs), key=feeder.rank_key)
        names = ",".join(feeder.buses[i].label for i in island[:4])
        if 0 in island:
            for i in gens:
                if plan.modes.get(i) != "PQ":
                    flag("coordination", f"generator {feeder.buses[i].label} not PQ in root island", 1.0)
            continue
        if not gens:
            flag("coordination", f"island {{{names}}} has no source", 1.0)
            continue
        lead, *rest = gens
        pv = [i for i in gens if plan.modes.get(i) == "PV"]
        if pv != [lead]:
            flag("coordination", f"island {{{names}}} PV set {pv}, expected [{lead}]", 1.0)
        if abs(plan.v[lead] - feeder.v0) > tol:
            flag("coordination", f"reference {feeder.buses[lead].label} voltage", abs(plan.v[lead] - feeder.v0))

    # 9. no de-energization
    for i in range(nb):
        if scenario.x0[i] and not x[i]:
            flag("no_deenergization", f"bus {feeder.buses[i].label}", 1.0)

    # 10. objective audit
    if plan.objective is not None:
        recomputed = plan_objective(feeder, scenario, plan)
        if abs(recomputed - plan.objective) > tol * max(1.0, abs(plan.objective)):
            flag("objective", "reported vs recomputed", abs(recomputed - plan.objective))

    return ValidationReport(out)


def mccormick_residuals(feeder: Feeder, model, values) -> dict[str, float]:
    """|z - b*y| for every product auxiliary, keyed by auxiliary name."""
    sym = model.symbols
    out = {}
    pattern = re.compile(r"z\[(yvi|yvj|yP|yQ|tv),(\d+)(?:,(\d+))?\]")
    for name, vid in sym.items():
        m = pattern.fullmatch(name)
        if not m:
            continue
        kind, a = m.group(1), int(m.group(2))
        if kind == "tv":
            b = values[sym[f"t[{a},{m.group(3)}]"]]
            c = values[sym[f"v[{feeder.edges[a].from_bus}]"]]
        else:
            b = values[sym[f"y[{a}]"]]
            e = feeder.edges[a]
            other = {"yvi": f"v[{e.from_bus}]", "yvj": f"v[{e.to_bus}]",
                     "yP": f"P[{a}]", "yQ": f"Q[{a}]"}[kind]
            c = values[sym[other]]
        out[name] = abs(values[vid] - b * c)
    return out


def load_plan(path) -> tuple[RestorationPlan, dict]:
    """Plan plus the raw document (which may carry the scenario)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PlanError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    body = doc.get("plan", doc)
    return RestorationPlan.from_dict(body), doc

