"""Cycle and path enumeration over the undirected infrastructure graph."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .feeder import Feeder

DEFAULT_CYCLE_CAP = 10_000
DEFAULT_PATH_CAP = 100_000


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class EdgeIndicator:
    """Membership of edges in a cycle or a path, ignoring edge direction.

    ``edges`` is sorted by id; ``sequence`` keeps the traversal order (for a
    path it starts at ``endpoints[0]``).
    """

    kind: str
    edges: tuple[int, ...]
    sequence: tuple[int, ...]
    n_edges: int
    endpoints: tuple[int, int] | None = None

    @property
    def bits(self) -> tuple[int, ...]:
        member = set(self.edges)
        return tuple(int(e in member) for e in range(self.n_edges))

    @property
    def length(self) -> int:
        return len(self.edges)

    @property
    def source(self) -> int:
        return self.endpoints[0]

    @property
    def target(self) -> int:
        return self.endpoints[1]

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "edges": list(self.sequence)}
        if self.endpoints is not None:
            d["from"], d["to"] = self.endpoints
        return d


def adjacency(n: int, edges: Iterable[tuple[int, int, int]]) -> list[list[tuple[int, int]]]:
    """Sorted (neighbor, edge id) lists from (edge id, a, b) triples."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for eid, a, b in edges:
        adj[a].append((b, eid))
        adj[b].append((a, eid))
    for lst in adj:
        lst.sort(key=lambda t: (t[1], t[0]))
    return adj


def _feeder_adjacency(feeder: Feeder):
    return adjacency(feeder.n_buses, ((e.id, e.from_bus, e.to_bus) for e in feeder.edges))


def simple_cycles(n: int, edges: Sequence[tuple[int, int, int]], cap: int = DEFAULT_CYCLE_CAP
                  ) -> list[tuple[int, ...]]:
    """All simple cycles of an undirected multigraph as edge-id sequences.

    Each cycle is reported once, rooted at its smallest node; the search from
    node s only walks through nodes larger than s, so every cycle is met
    exactly twice (once per orientation) and deduplicated by edge set.
    """
    adj = adjacency(n, edges)
    found: dict[frozenset[int], tuple[int, ...]] = {}
    for s in range(n):
        on_path = {s}
        stack_edges: list[int] = []

        def walk(u: int) -> None:
            for w, eid in adj[u]:
                if stack_edges and eid == stack_edges[-1]:
                    continue
                if w == s and stack_edges:
                    key = frozenset(stack_edges) | {eid}
                    if key not in found:
                        found[key] = tuple(stack_edges) + (eid,)
                        if len(found) > cap:
                            raise BudgetExceeded(f"cycle budget exceeded ({cap})")
                elif w > s and w not in on_path:
                    on_path.add(w)
                    stack_edges.append(eid)
                    walk(w)
                    stack_edges.pop()
                    on_path.discard(w)

        walk(s)
    return sorted(found.values(), key=lambda seq: sorted(seq))


def simple_paths(adj: list[list[tuple[int, int]]], source: int, target: int,
                 cap: int = DEFAULT_PATH_CAP) -> list[tuple[int, ...]]:
    """Edge-id sequences of all node-simple paths from source to target."""
    out: list[tuple[int, ...]] = []
    if source == target:
        return out
    on_path = {source}
    seq: list[int] = []

    def walk(u: int) -> None:
        for w, eid in adj[u]:
            if w in on_path:
                continue
            seq.append(eid)
            if w == target:
                out.append(tuple(seq))
                if len(out) > cap:
                    raise BudgetExceeded(f"path budget exceeded ({cap})")
            else:
                on_path.add(w)
                walk(w)
                on_path.discard(w)
            seq.pop()

    walk(source)
    return out


def enumerate_cycles(feeder: Feeder, cap: int = DEFAULT_CYCLE_CAP) -> list[EdgeIndicator]:
    triples = [(e.id, e.from_bus, e.to_bus) for e in feeder.edges]
    return [
        EdgeIndicator("cycle", tuple(sorted(seq)), seq, feeder.n_edges)
        for seq in simple_cycles(feeder.n_buses, triples, cap)
    ]


def _paths_to_targets(feeder: Feeder, pairs: list[tuple[int, list[int]]], cap: int
                      ) -> list[EdgeIndicator]:
    adj = _feeder_adjacency(feeder)
    out: list[EdgeIndicator] = []
    for src, targets in pairs:
        group = []
        for t in sorted(targets):
            for seq in simple_paths(adj, src, t, cap - len(out)):
                group.append(EdgeIndicator("path", tuple(sorted(seq)), seq,
                                           feeder.n_edges, (src, t)))
        group.sort(key=lambda p: (p.target, p.edges))
        out.extend(group)
        if len(out) > cap:
            raise BudgetExceeded(f"path budget exceeded ({cap})")
    return out


def enumerate_nbs_paths(feeder: Feeder, cap: int = DEFAULT_PATH_CAP) -> list[EdgeIndicator]:
    """Paths from every non-black-start generator to the root and to every
    black-start generator, grouped by source bus."""
    targets = [0, *feeder.black_start]
    return _paths_to_targets(feeder, [(i, targets) for i in feeder.non_black_start], cap)


def enumerate_bs_paths(feeder: Feeder, cap: int = DEFAULT_PATH_CAP) -> list[EdgeIndicator]:
    """Paths from every black-start generator to the root and to every
    higher-ranked black-start generator, grouped by source bus."""
    pairs = []
    for i in feeder.black_start:
        higher = [j for j in feeder.black_start if feeder.rank_key(j) < feeder.rank_key(i)]
        pairs.append((i, [0, *higher]))
    return _paths_to_targets(feeder, pairs, cap)


def group_by_source(paths: Iterable[EdgeIndicator]) -> dict[int, list[EdgeIndicator]]:
    groups: dict[int, list[EdgeIndicator]] = {}
    for p in paths:
        groups.setdefault(p.source, []).append(p)
    return groups


def is_forest(feeder: Feeder, y: Sequence[int]) -> bool:
    """True iff the closed edges form no cycle (union-find)."""
    parent = list(range(feeder.n_buses))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in feeder.edges:
        if not y[e.id]:
            continue
        ra, rb = find(e.from_bus), find(e.to_bus)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


def energized_components(feeder: Feeder, x: Sequence[int], y: Sequence[int]) -> list[list[int]]:
    """Islands: connected components of energized buses over closed edges."""
    adj: list[list[int]] = [[] for _ in range(feeder.n_buses)]
    for e in feeder.edges:
        if y[e.id] and x[e.from_bus] and x[e.to_bus]:
            adj[e.from_bus].append(e.to_bus)
            adj[e.to_bus].append(e.from_bus)
    seen: set[int] = set()
    islands = []
    for s in range(feeder.n_buses):
        if not x[s] or s in seen:
            continue
        comp = [s]
        seen.add(s)
        stack = [s]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    comp.append(w)
                    stack.append(w)
        islands.append(sorted(comp))
    return islands
