"""Feeder data model, JSON ingestion and post-outage state derivation."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

BUS_KINDS = (
    "root",
    "load_fixed",
    "load_elastic",
    "gen_black_start",
    "gen_non_black_start",
    "junction",
)
EDGE_KINDS = ("in_service", "out_of_service", "switch", "regulator")
LOAD_KINDS = ("load_fixed", "load_elastic")
GEN_KINDS = ("gen_black_start", "gen_non_black_start")


class FeederError(ValueError):
    """Raised for malformed feeder or scenario input."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    p_min: float = 0.0
    p_max: float = 0.0
    q_min: float = 0.0
    q_max: float = 0.0
    v_min: float = 0.9409
    v_max: float = 1.0609
    rating: float = 0.0
    name: str = ""
    fix_power_factor: bool = False

    @property
    def label(self) -> str:
        return self.name or str(self.id)

    @property
    def is_load(self) -> bool:
        return self.kind in LOAD_KINDS

    @property
    def nominal_p(self) -> float:
        """Load magnitude at full service (kW); zero for non-loads."""
        return -self.p_min if self.is_load else 0.0


@dataclass(frozen=True)
class Edge:
    id: int
    from_bus: int
    to_bus: int
    kind: str
    r: float = 0.0
    x: float = 0.0
    P_min: float = -1e4
    P_max: float = 1e4
    Q_min: float = -1e4
    Q_max: float = 1e4
    normally_closed: bool = True
    outage_eligible: bool = True
    name: str = ""

    @property
    def ends(self) -> tuple[int, int]:
        return self.from_bus, self.to_bus

    @property
    def label(self) -> str:
        return self.name or str(self.id)


@dataclass(frozen=True)
class Feeder:
    buses: tuple[Bus, ...]
    edges: tuple[Edge, ...]
    v0: float = 1.0
    lam: float = 1e-3
    base_kva: float = 1000.0
    base_kv: float = 4.8
    tap_count: int = 33
    tap_step: float = 0.00625
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "edges", tuple(self.edges))
        _check_feeder(self)

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edges_of_kind(self, kind: str) -> list[Edge]:
        return [e for e in self.edges if e.kind == kind]

    @cached_property
    def switches(self) -> tuple[int, ...]:
        return tuple(e.id for e in self.edges if e.kind == "switch")

    @cached_property
    def regulators(self) -> tuple[int, ...]:
        return tuple(e.id for e in self.edges if e.kind == "regulator")

    @cached_property
    def black_start(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.kind == "gen_black_start")

    @cached_property
    def non_black_start(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.kind == "gen_non_black_start")

    @cached_property
    def load_buses(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.is_load)

    @cached_property
    def objective_buses(self) -> tuple[int, ...]:
        """Buses whose injection enters the served-load objective."""
        skip = {"root", *GEN_KINDS}
        return tuple(b.id for b in self.buses if b.kind not in skip)

    @cached_property
    def total_load(self) -> float:
        return sum(b.nominal_p for b in self.buses)

    def bus_by_name(self, name: str) -> Bus:
        for b in self.buses:
            if b.name == name:
                return b
        raise KeyError(name)

    def edge_between(self, a: str | int, b: str | int) -> Edge:
        """First edge joining two buses given by id or name."""
        ia = a if isinstance(a, int) else self.bus_by_name(a).id
        ib = b if isinstance(b, int) else self.bus_by_name(b).id
        for e in self.edges:
            if {e.from_bus, e.to_bus} == {ia, ib}:
                return e
        raise KeyError((a, b))

    def rank_key(self, bus: int) -> tuple[float, int]:
        """Sort key: larger rating first, ties to the smaller bus id."""
        return (-self.buses[bus].rating, bus)


@dataclass(frozen=True)
class OutageScenario:
    failed_edges: frozenset[int]
    x0: tuple[int, ...]
    y0: tuple[int, ...]
    solar_avail: Mapping[int, float] = field(default_factory=dict)
    switch_state: Mapping[int, int] = field(default_factory=dict)
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "failed_edges": sorted(self.failed_edges),
            "switch_state": {str(k): int(v) for k, v in sorted(self.switch_state.items())},
            "solar_avail": {str(k): float(v) for k, v in sorted(self.solar_avail.items())},
            "seed": self.seed,
        }


def _check_feeder(f: Feeder) -> None:
    ids = [b.id for b in f.buses]
    if ids != list(range(len(ids))):
        raise FeederError("bus ids must be unique and contiguous from 0")
    eids = [e.id for e in f.edges]
    if eids != list(range(len(eids))):
        raise FeederError("edge ids must be unique and contiguous from 0")
    roots = [b for b in f.buses if b.kind == "root"]
    if len(roots) > 1:
        raise FeederError("multiple root buses; substations must be merged into bus 0")
    if not roots:
        raise FeederError("no root bus")
    if f.lam < 0:
        raise FeederError("lambda must be non-negative")
    for b in f.buses:
        where = f"bus {b.label}"
        if b.kind not in BUS_KINDS:
            raise FeederError(f"{where}: unknown kind {b.kind!r}")
        if (b.kind == "root") != (b.id == 0):
            raise FeederError(f"{where}: the root must be bus 0 and bus 0 must be the root")
        if b.p_min > b.p_max or b.q_min > b.q_max:
            raise FeederError(f"{where}: injection bounds inverted")
        if not 0 < b.v_min <= b.v_max:
            raise FeederError(f"{where}: voltage bounds must satisfy 0 < v_min <= v_max")
        if b.kind == "root" and not (b.v_min == b.v_max == f.v0):
            raise FeederError(f"{where}: root voltage must be fixed at v0={f.v0}")
        if b.is_load and b.p_max > 0:
            raise FeederError(f"{where}: load with positive p_max")
        if b.kind in GEN_KINDS and b.p_min < 0:
            raise FeederError(f"{where}: generator with negative p_min")
        if b.kind == "junction" and any((b.p_min, b.p_max, b.q_min, b.q_max)):
            raise FeederError(f"{where}: junction must carry no injection")
    n = len(f.buses)
    for e in f.edges:
        where = f"edge {e.label}"
        if e.kind not in EDGE_KINDS:
            raise FeederError(f"{where}: unknown kind {e.kind!r}")
        if e.from_bus == e.to_bus:
            raise FeederError(f"{where}: self loop")
        if not (0 <= e.from_bus < n and 0 <= e.to_bus < n):
            raise FeederError(f"{where}: unknown endpoint")
        if e.P_min > e.P_max or e.Q_min > e.Q_max:
            raise FeederError(f"{where}: flow bounds inverted")
        if e.kind == "regulator" and (e.r != 0 or e.x != 0):
            raise FeederError(f"{where}: regulators are ideal (r = x = 0)")
    if not _connected(n, [e.ends for e in f.edges]):
        raise FeederError("feeder graph is not connected")
    fixed = [e for e in f.edges if e.kind in ("in_service", "regulator")]
    if _has_cycle(n, [e.ends for e in fixed]):
        raise FeederError("structural cycle of non-switchable closed edges")


def _connected(n: int, pairs: Iterable[tuple[int, int]]) -> bool:
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in pairs:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == n


def _has_cycle(n: int, pairs: Iterable[tuple[int, int]]) -> bool:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra == rb:
            return True
        parent[ra] = rb
    return False


# -- serialization -----------------------------------------------------------

_BUS_FIELDS = ("p_min", "p_max", "q_min", "q_max", "v_min", "v_max", "rating")


def feeder_to_dict(f: Feeder) -> dict:
    buses = []
    for b in f.buses:
        d = {"id": b.id, "kind": b.kind}
        d.update({k: getattr(b, k) for k in _BUS_FIELDS})
        if b.name:
            d["name"] = b.name
        if b.fix_power_factor:
            d["fix_power_factor"] = True
        buses.append(d)
    edges = []
    for e in f.edges:
        d = {
            "id": e.id, "from": e.from_bus, "to": e.to_bus, "kind": e.kind,
            "r": e.r, "x": e.x,
            "P_min": e.P_min, "P_max": e.P_max, "Q_min": e.Q_min, "Q_max": e.Q_max,
        }
        if e.kind == "switch":
            d["normally_closed"] = e.normally_closed
        if not e.outage_eligible:
            d["outage_eligible"] = False
        if e.name:
            d["name"] = e.name
        edges.append(d)
    return {
        "name": f.name,
        "base_kva": f.base_kva,
        "base_kv": f.base_kv,
        "v0": f.v0,
        "lambda": f.lam,
        "tap_count": f.tap_count,
        "tap_step": f.tap_step,
        "buses": buses,
        "edges": edges,
    }


def dump_feeder(f: Feeder) -> str:
    return json.dumps(feeder_to_dict(f), indent=1) + "\n"


def _field(obj: Mapping, key: str, where: str, cast=float, default=None):
    if key not in obj:
        if default is None:
            raise FeederError(f"{where}.{key}: missing")
        return default
    try:
        return cast(obj[key])
    except (TypeError, ValueError) as exc:
        raise FeederError(f"{where}.{key}: bad value {obj[key]!r}") from exc


def feeder_from_dict(data: Mapping) -> Feeder:
    if not isinstance(data, Mapping):
        raise FeederError("feeder document must be a JSON object")
    for key in ("buses", "edges"):
        if not isinstance(data.get(key), list):
            raise FeederError(f"{key}: missing or not a list")
    buses = []
    for i, raw in enumerate(data["buses"]):
        where = f"buses[{i}]"
        buses.append(Bus(
            id=_field(raw, "id", where, int),
            kind=_field(raw, "kind", where, str),
            p_min=_field(raw, "p_min", where, default=0.0),
            p_max=_field(raw, "p_max", where, default=0.0),
            q_min=_field(raw, "q_min", where, default=0.0),
            q_max=_field(raw, "q_max", where, default=0.0),
            v_min=_field(raw, "v_min", where),
            v_max=_field(raw, "v_max", where),
            rating=_field(raw, "rating", where, default=0.0),
            name=str(raw.get("name", "")),
            fix_power_factor=bool(raw.get("fix_power_factor", False)),
        ))
    edges = []
    for i, raw in enumerate(data["edges"]):
        where = f"edges[{i}]"
        P_max = _field(raw, "P_max", where)
        Q_max = _field(raw, "Q_max", where)
        edges.append(Edge(
            id=_field(raw, "id", where, int),
            from_bus=_field(raw, "from", where, int),
            to_bus=_field(raw, "to", where, int),
            kind=_field(raw, "kind", where, str),
            r=_field(raw, "r", where, default=0.0),
            x=_field(raw, "x", where, default=0.0),
            P_min=_field(raw, "P_min", where, default=-P_max),
            P_max=P_max,
            Q_min=_field(raw, "Q_min", where, default=-Q_max),
            Q_max=Q_max,
            normally_closed=bool(raw.get("normally_closed", True)),
            outage_eligible=bool(raw.get("outage_eligible", True)),
            name=str(raw.get("name", "")),
        ))
    return Feeder(
        buses=tuple(buses),
        edges=tuple(edges),
        v0=_field(data, "v0", "header"),
        lam=_field(data, "lambda", "header", default=1e-3),
        base_kva=_field(data, "base_kva", "header"),
        base_kv=_field(data, "base_kv", "header"),
        tap_count=_field(data, "tap_count", "header", int, default=33),
        tap_step=_field(data, "tap_step", "header", default=0.00625),
        name=str(data.get("name", "")),
    )


def load_feeder(text: str) -> Feeder:
    """Parse and validate a feeder JSON document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FeederError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return feeder_from_dict(data)


# -- post-outage state -------------------------------------------------------

def default_switch_state(feeder: Feeder) -> dict[int, int]:
    return {e.id: int(e.normally_closed) for e in feeder.edges if e.kind == "switch"}


def derive_post_outage(
    feeder: Feeder,
    failed: Iterable[int] = (),
    switch_state: Mapping[int, int] | None = None,
    solar_avail: Mapping[int, float] | None = None,
    seed: int | None = None,
) -> OutageScenario:
    """Post-fault statuses: failed edges open, switches per `switch_state`,
    and a bus energized iff it reaches the root over closed edges."""
    failed = frozenset(int(e) for e in failed)
    for eid in failed:
        if not 0 <= eid < feeder.n_edges:
            raise FeederError(f"failed edge {eid} does not exist")
        if feeder.edges[eid].kind == "out_of_service":
            raise FeederError(f"failed edge {eid} is already out of service")
    state = default_switch_state(feeder)
    for k, v in (switch_state or {}).items():
        k = int(k)
        if k not in state:
            raise FeederError(f"switch_state names edge {k}, which is not a switch")
        state[k] = int(v)
    y0 = []
    for e in feeder.edges:
        if e.id in failed or e.kind == "out_of_service":
            y0.append(0)
        elif e.kind == "switch":
            y0.append(state[e.id])
        else:
            y0.append(1)
    adj: list[list[int]] = [[] for _ in feeder.buses]
    for e in feeder.edges:
        if y0[e.id]:
            adj[e.from_bus].append(e.to_bus)
            adj[e.to_bus].append(e.from_bus)
    x0 = [0] * feeder.n_buses
    x0[0] = 1
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if not x0[w]:
                x0[w] = 1
                queue.append(w)
    avail = {}
    for k, v in (solar_avail or {}).items():
        k, v = int(k), float(v)
        if k not in feeder.non_black_start:
            raise FeederError(f"solar_avail names bus {k}, which is not a non-black-start generator")
        if not 0.0 <= v <= feeder.buses[k].p_max + 1e-9:
            raise FeederError(f"solar_avail[{k}]={v} outside [0, {feeder.buses[k].p_max}]")
        avail[k] = min(v, feeder.buses[k].p_max)
    return OutageScenario(
        failed_edges=failed,
        x0=tuple(x0),
        y0=tuple(y0),
        solar_avail=avail,
        switch_state=state,
        seed=seed,
    )


def scenario_from_dict(feeder: Feeder, data: Mapping) -> OutageScenario:
    return derive_post_outage(
        feeder,
        failed=data.get("failed_edges", []),
        switch_state=data.get("switch_state") or None,
        solar_avail=data.get("solar_avail") or None,
        seed=data.get("seed"),
    )


def load_scenario(feeder: Feeder, text: str) -> OutageScenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FeederError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(feeder, data)
