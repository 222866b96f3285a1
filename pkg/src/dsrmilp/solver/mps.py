"""Free-format MPS export of a MilpModel."""
from __future__ import annotations

import math
import re

_UNSAFE = re.compile(r"[^A-Za-z0-9_\[\],.:+\-]")
ROW_SENSE = {"<=": "L", ">=": "G", "=": "E"}
OBJ_ROW = "obj"


class MpsNameError(ValueError):
    pass


def mps_name(name: str, max_len: int = 64) -> str:
    """Whitespace-free token; characters outside a conservative set become '_'."""
    token = _UNSAFE.sub("_", name) or "_"
    return token[:max_len]


def _fmt(a: float) -> str:
    return repr(float(a))


def column_names(model, max_len: int = 64) -> list[str]:
    names = [mps_name(v.name, max_len) for v in model.variables]
    seen: dict[str, int] = {}
    for vid, nm in enumerate(names):
        if nm in seen or nm == OBJ_ROW:
            other = model.variables[seen[nm]].name if nm in seen else OBJ_ROW
            raise MpsNameError(f"column name collision after truncation: "
                               f"{model.variables[vid].name!r} and {other!r} -> {nm!r}")
        seen[nm] = vid
    return names


def export_mps(model, max_len: int = 64) -> str:
    """Minimization MPS text with rows named ``c<index>`` and columns named
    after the symbol table. Free binaries are declared ``BV``; binaries fixed
    by their bounds are written ``FX``."""
    cols = column_names(model, max_len)
    rows = [f"c{i}" for i in range(model.n_rows)]
    lines = [f"NAME {mps_name(model.name, max_len)}", "OBJSENSE", "    MIN", "ROWS", f" N  {OBJ_ROW}"]
    for name, con in zip(rows, model.constraints):
        lines.append(f" {ROW_SENSE[con.sense]}  {name}")

    by_col: list[list[tuple[str, float]]] = [[] for _ in model.variables]
    for vid, a in sorted(model.objective.items()):
        if a != 0.0:
            by_col[vid].append((OBJ_ROW, a))
    for name, con in zip(rows, model.constraints):
        for vid, a in con.coefs:
            by_col[vid].append((name, a))
    lines.append("COLUMNS")
    for vid, entries in enumerate(by_col):
        if not entries:
            # keep the column declared even if it appears nowhere
            entries = [(OBJ_ROW, 0.0)]
        for row, a in entries:
            lines.append(f"    {cols[vid]}  {row}  {_fmt(a)}")

    lines.append("RHS")
    if model.objective_offset:
        lines.append(f"    RHS  {OBJ_ROW}  {_fmt(-model.objective_offset)}")
    for name, con in zip(rows, model.constraints):
        if con.rhs != 0.0:
            lines.append(f"    RHS  {name}  {_fmt(con.rhs)}")
    lines.append("RANGES")

    lines.append("BOUNDS")
    for v, nm in zip(model.variables, cols):
        lo, hi = v.lower, v.upper
        if v.binary and lo == 0.0 and hi == 1.0:
            lines.append(f" BV BND  {nm}")
        elif lo == hi:
            lines.append(f" FX BND  {nm}  {_fmt(lo)}")
        elif math.isinf(lo) and math.isinf(hi):
            lines.append(f" FR BND  {nm}")
        else:
            lines.append(f" MI BND  {nm}" if math.isinf(lo) else f" LO BND  {nm}  {_fmt(lo)}")
            if not math.isinf(hi):
                lines.append(f" UP BND  {nm}  {_fmt(hi)}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"
