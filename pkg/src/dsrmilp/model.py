"""Container for a mixed-integer linear program in sparse row form."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp

SENSES = ("<=", "=", ">=")


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    lower: float
    upper: float
    binary: bool = False

    @property
    def family(self) -> str:
        return self.name.split("[", 1)[0]


@dataclass(frozen=True)
class LinearConstraint:
    coefs: tuple[tuple[int, float], ...]
    sense: str
    rhs: float
    tag: str = ""


class MilpModel:
    """Minimization MILP: variables, linear rows, objective and a symbol table.

    Rows are appended through :meth:`add_row`; once handed to a solver the
    model is treated as read-only.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[LinearConstraint] = []
        self.objective: dict[int, float] = {}
        self.symbols: dict[str, int] = {}
        self.objective_offset = 0.0

    def __len__(self) -> int:
        return len(self.variables)

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_rows(self) -> int:
        return len(self.constraints)

    def add_var(self, name: str, lower: float, upper: float, binary: bool = False) -> int:
        if name in self.symbols:
            raise ValueError(f"duplicate variable name {name}")
        if not lower <= upper:
            raise ValueError(f"{name}: lower bound {lower} above upper bound {upper}")
        if binary and (lower < 0 or upper > 1):
            raise ValueError(f"{name}: binary bounds must lie in [0, 1]")
        vid = len(self.variables)
        self.variables.append(Variable(vid, name, float(lower), float(upper), binary))
        self.symbols[name] = vid
        return vid

    def var(self, name: str) -> int:
        return self.symbols[name]

    def add_row(self, coefs: Iterable[tuple[int, float]], sense: str, rhs: float, tag: str = ""):
        if sense not in SENSES:
            raise ValueError(f"bad sense {sense!r}")
        merged: dict[int, float] = {}
        for vid, a in coefs:
            if not 0 <= vid < len(self.variables):
                raise ValueError(f"{tag}: unknown variable id {vid}")
            merged[vid] = merged.get(vid, 0.0) + float(a)
        if not all(math.isfinite(a) for a in merged.values()) or not math.isfinite(rhs):
            raise ValueError(f"{tag}: non-finite coefficient")
        row = LinearConstraint(tuple((k, v) for k, v in merged.items() if v != 0.0),
                               sense, float(rhs), tag)
        self.constraints.append(row)
        return row

    def set_objective(self, coefs: Iterable[tuple[int, float]]):
        self.objective = {}
        for vid, a in coefs:
            self.objective[vid] = self.objective.get(vid, 0.0) + float(a)

    def binaries(self) -> list[int]:
        return [v.id for v in self.variables if v.binary]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lb = np.array([v.lower for v in self.variables], dtype=float)
        ub = np.array([v.upper for v in self.variables], dtype=float)
        return lb, ub

    def arrays(self):
        """(c, A csr, row_lo, row_hi, lb, ub, is_binary) in model order."""
        n, m = self.n_vars, self.n_rows
        c = np.zeros(n)
        for vid, a in self.objective.items():
            c[vid] = a
        rows, cols, vals = [], [], []
        lo = np.full(m, -np.inf)
        hi = np.full(m, np.inf)
        for i, con in enumerate(self.constraints):
            for vid, a in con.coefs:
                rows.append(i)
                cols.append(vid)
                vals.append(a)
            if con.sense in ("<=", "="):
                hi[i] = con.rhs
            if con.sense in (">=", "="):
                lo[i] = con.rhs
        A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        lb, ub = self.bounds()
        is_bin = np.array([v.binary for v in self.variables], dtype=bool)
        return c, A, lo, hi, lb, ub, is_bin

    def evaluate(self, values) -> float:
        return self.objective_offset + sum(a * values[vid] for vid, a in self.objective.items())

    def max_violation(self, values) -> float:
        """Largest absolute row or bound violation at a point."""
        worst = 0.0
        for con in self.constraints:
            act = sum(a * values[vid] for vid, a in con.coefs)
            if con.sense == "<=":
                worst = max(worst, act - con.rhs)
            elif con.sense == ">=":
                worst = max(worst, con.rhs - act)
            else:
                worst = max(worst, abs(act - con.rhs))
        for v in self.variables:
            worst = max(worst, v.lower - values[v.id], values[v.id] - v.upper)
        return worst

    def dump(self) -> str:
        """Human-readable listing with row tags."""
        names = [v.name for v in self.variables]

        def term(vid, a):
            return f"{a:+.10g} {names[vid]}"

        lines = [f"\\ model {self.name}: {self.n_vars} variables, {self.n_rows} rows"]
        obj = " ".join(term(v, a) for v, a in sorted(self.objective.items()))
        lines.append(f"minimize: {obj}")
        lines.append("subject to:")
        for con in self.constraints:
            body = " ".join(term(v, a) for v, a in con.coefs)
            lines.append(f"  [{con.tag}] {body} {con.sense} {con.rhs:.10g}")
        lines.append("bounds:")
        for v in self.variables:
            kind = " binary" if v.binary else ""
            lines.append(f"  {v.lower:.10g} <= {v.name} <= {v.upper:.10g}{kind}")
        return "\n".join(lines) + "\n"
