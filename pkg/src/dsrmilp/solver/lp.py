"""Bounded-variable dual simplex for the LP relaxations of a MilpModel.

The problem is held in computational form ``[A, -I] (x, r) = 0`` with one
logical ``r_i`` per row carrying the row bounds. Every structural column is
boxed (infinite bounds are replaced by ``BIG``), so the all-logical basis with
nonbasics parked at the bound matching the sign of their cost is dual
feasible and no phase one is needed. B^-1 is kept explicitly and refreshed by
a full inverse every ``refactor_every`` pivots.

Most columns carry no cost, so the dual is heavily degenerate and the ratio
test can stall on zero-length steps. A solve that makes no dual progress for
``stall_window`` pivots is restarted on deterministically perturbed costs and
finished by a few bounded primal simplex pivots on the true costs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg.blas import dger

BIG = 1e9
AT_LOWER, AT_UPPER, BASIC = 0, 1, -1


class LpNumericalError(RuntimeError):
    pass


class LpStall(LpNumericalError):
    """No dual objective progress within the stall window."""


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    status: str  # optimal | infeasible | unbounded
    iterations: int = 0
    basis: tuple | None = None


@dataclass
class Reduction:
    """Columns fixed by their bounds are folded into the row bounds and rows
    left with a single free column become bounds on that column."""

    keep_cols: np.ndarray
    keep_rows: np.ndarray
    fixed_values: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    row_lo: np.ndarray
    row_hi: np.ndarray
    infeasible: bool = False


def reduce_problem(A, row_lo, row_hi, lb, ub, integer=None, tol=1e-9) -> Reduction:
    A = A.tocsc()
    m, n = A.shape
    lb = lb.astype(float).copy()
    ub = ub.astype(float).copy()
    lo = row_lo.astype(float).copy()
    hi = row_hi.astype(float).copy()
    integer = np.zeros(n, bool) if integer is None else integer
    col_alive = np.ones(n, bool)
    row_alive = np.ones(m, bool)
    Ar = A.tocsr()
    count = np.diff(Ar.indptr).astype(int)
    fixed_values = np.zeros(n)
    infeasible = False

    pending = [j for j in range(n) if ub[j] - lb[j] <= tol]
    while True:
        while pending:
            j = pending.pop()
            if not col_alive[j]:
                continue
            col_alive[j] = False
            val = lb[j] if ub[j] - lb[j] <= tol else ub[j]
            fixed_values[j] = val
            for ptr in range(A.indptr[j], A.indptr[j + 1]):
                i = A.indices[ptr]
                if not row_alive[i]:
                    continue
                lo[i] -= A.data[ptr] * val
                hi[i] -= A.data[ptr] * val
                count[i] -= 1
        changed = False
        for i in np.flatnonzero(row_alive & (count <= 1)):
            if count[i] == 0:
                slack = max(1.0, abs(lo[i]) if np.isfinite(lo[i]) else 1.0,
                            abs(hi[i]) if np.isfinite(hi[i]) else 1.0)
                if lo[i] > 1e-9 * slack or hi[i] < -1e-9 * slack:
                    infeasible = True
                row_alive[i] = False
                continue
            ptrs = range(Ar.indptr[i], Ar.indptr[i + 1])
            j, a = next((Ar.indices[p], Ar.data[p]) for p in ptrs if col_alive[Ar.indices[p]])
            new_lo, new_hi = (lo[i] / a, hi[i] / a) if a > 0 else (hi[i] / a, lo[i] / a)
            if integer[j]:
                new_lo = np.ceil(new_lo - 1e-6)
                new_hi = np.floor(new_hi + 1e-6)
            lb[j] = max(lb[j], new_lo)
            ub[j] = min(ub[j], new_hi)
            row_alive[i] = False
            if lb[j] > ub[j] + 1e-9 * max(1.0, abs(lb[j])):
                infeasible = True
                ub[j] = lb[j]
            if ub[j] - lb[j] <= tol:
                ub[j] = lb[j]
                pending.append(j)
            changed = True
        if not changed and not pending:
            break
    return Reduction(np.flatnonzero(col_alive), np.flatnonzero(row_alive), fixed_values,
                     lb, ub, lo, hi, infeasible)


class DualSimplex:
    """Dense bounded dual simplex over ``min c.x, lo <= A x <= hi, lb <= x <= ub``."""

    def __init__(self, c, A, row_lo, row_hi, *, refactor_every=80, bland_after=None,
                 primal_tol=1e-9, dual_tol=1e-9, pivot_tol=1e-9, max_iter=None,
                 stall_window=None, perturbation=1e-6):
        self.A = np.asarray(A, dtype=float)
        self.m, self.n = self.A.shape
        self.A_csr = sp.csr_matrix(self.A)
        self.A_csc = sp.csc_matrix(self.A)
        self.AT = sp.csr_matrix(self.A.T)
        m, n = self.m, self.n
        self.cost = np.concatenate([np.asarray(c, float), np.zeros(m)])
        self.row_lo = np.asarray(row_lo, float)
        self.row_hi = np.asarray(row_hi, float)
        self.refactor_every = refactor_every
        self.bland_after = bland_after if bland_after is not None else 10 * (m + n) + 1000
        self.max_iter = max_iter if max_iter is not None else 50 * (m + n) + 5000
        self.primal_tol = primal_tol
        self.dual_tol = dual_tol
        self.pivot_tol = pivot_tol
        self.stall_window = stall_window if stall_window is not None else 50 + (m + n) // 2
        # fixed draw so perturbed solves repeat exactly
        u = np.random.default_rng(0).uniform(0.5, 1.0, n)
        self.perturb = perturbation * (1.0 + np.abs(self.cost[:n])) * u

    # -- helpers ---------------------------------------------------------
    def _column(self, j):
        if j < self.n:
            return self.A[:, j]
        col = np.zeros(self.m)
        col[j - self.n] = -1.0
        return col

    def _basis_matrix(self, basic):
        B = np.zeros((self.m, self.m))
        struct = basic < self.n
        B[:, struct] = self.A[:, basic[struct]]
        log_pos = np.flatnonzero(~struct)
        B[basic[log_pos] - self.n, log_pos] = -1.0
        return B

    def _ftran_column(self, Binv, j):
        """B^-1 times column j, touching only the nonzeros of the column."""
        if j >= self.n:
            return -Binv[:, j - self.n]
        lo, hi = self.A_csc.indptr[j], self.A_csc.indptr[j + 1]
        return Binv[:, self.A_csc.indices[lo:hi]] @ self.A_csc.data[lo:hi]

    def _inverse(self, basic):
        """B^-1 from the structural kernel: logical columns are unit vectors,
        so only the block of structural columns on uncovered rows is inverted."""
        n, m = self.n, self.m
        spos = np.flatnonzero(basic < n)
        lpos = np.flatnonzero(basic >= n)
        cols = basic[spos]
        lrows = basic[lpos] - n
        uncovered = np.ones(m, bool)
        uncovered[lrows] = False
        rrows = np.flatnonzero(uncovered)
        if len(rrows) != len(cols):
            raise LpNumericalError("basis has duplicate logical columns")
        Binv = np.zeros((m, m), order="F")
        if len(cols):
            Kinv = np.linalg.inv(self.A[np.ix_(rrows, cols)])
            Binv[np.ix_(spos, rrows)] = Kinv
            Binv[np.ix_(lpos, rrows)] = self.A_csr[lrows][:, cols] @ Kinv
        Binv[lpos, lrows] = -1.0
        return Binv

    def _primal_basic(self, Binv, basic, status, xval):
        nb = status != BASIC
        xs = np.where(nb[: self.n], xval[: self.n], 0.0)
        xl = np.where(nb[self.n:], xval[self.n:], 0.0)
        rhs = -(self.A @ xs) + xl
        return Binv @ rhs

    def _duals(self, Binv, basic, cost):
        y = Binv.T @ cost[basic]
        d = np.empty(self.n + self.m)
        d[: self.n] = cost[: self.n] - self.AT @ y
        d[self.n:] = y
        d[basic] = 0.0
        return d

    # -- main ------------------------------------------------------------
    def solve(self, lb, ub, warm=None) -> LpSolution:
        n, m = self.n, self.m
        lo = np.concatenate([np.maximum(lb, -BIG), self.row_lo])
        hi = np.concatenate([np.minimum(ub, BIG), self.row_hi])
        if np.any(lo > hi + 1e-9 * np.maximum(1.0, np.abs(lo))):
            return LpSolution(np.zeros(n), np.inf, "infeasible")
        hi = np.maximum(hi, lo)
        fixed = hi - lo <= 0.0
        if warm is not None:
            try:
                sol = self._run(lo, hi, fixed, warm)
                if sol is not None:
                    return sol
            except (np.linalg.LinAlgError, LpNumericalError):
                pass
        try:
            return self._run(lo, hi, fixed, None)
        except (np.linalg.LinAlgError, LpNumericalError):
            pass
        cost = self.cost.copy()
        basic, status = self._cold_start(lo, hi)
        # push each cost away from zero on the side its cold-start bound needs
        cost[:n] += np.where(status[:n] == AT_LOWER, self.perturb, -self.perturb)
        sol = self._run(lo, hi, fixed, None, cost=cost, stall_window=0)
        if sol.status != "optimal":
            return sol
        clean = self._primal_cleanup(lo, hi, fixed, sol.basis[0], sol.basis[1])
        clean.iterations += sol.iterations
        return clean

    def _cold_start(self, lo, hi):
        n, m = self.n, self.m
        basic = np.arange(n, n + m)
        status = np.full(n + m, BASIC, dtype=int)
        status[:n] = np.where(self.cost[:n] >= 0.0, AT_LOWER, AT_UPPER)
        return basic, status

    def _run(self, lo, hi, fixed, warm, cost=None, stall_window=None):
        n, m = self.n, self.m
        cost = self.cost if cost is None else cost
        window = self.stall_window if stall_window is None else stall_window
        if warm is None:
            basic, status = self._cold_start(lo, hi)
            Binv = np.asfortranarray(-np.eye(m))
        else:
            basic = np.array(warm[0], dtype=int)
            status = np.array(warm[1], dtype=int)
            if len(warm) > 2 and warm[2] is not None:
                Binv = np.array(warm[2], order="F")
            else:
                Binv = self._inverse(basic)
        d = self._duals(Binv, basic, cost)
        if warm is not None:
            # boxed nonbasics flip to the bound that matches their dual sign
            nb = status != BASIC
            flip_up = nb & (status == AT_LOWER) & (d < -self.dual_tol) & np.isfinite(hi)
            flip_dn = nb & (status == AT_UPPER) & (d > self.dual_tol) & np.isfinite(lo)
            status[flip_up] = AT_UPPER
            status[flip_dn] = AT_LOWER
            bad = nb & ~fixed & (((status == AT_LOWER) & (d < -self.dual_tol))
                                 | ((status == AT_UPPER) & (d > self.dual_tol)))
            if bad.any():
                return None
        # nonbasic logicals must sit on a finite bound
        nb_log = np.flatnonzero(status[n:] != BASIC) + n
        for j in nb_log:
            if status[j] == AT_LOWER and not np.isfinite(lo[j]):
                status[j] = AT_UPPER
            elif status[j] == AT_UPPER and not np.isfinite(hi[j]):
                status[j] = AT_LOWER
        xval = np.where(status == AT_UPPER, hi, lo)
        xval = np.where(np.isfinite(xval), xval, 0.0)
        xB = self._primal_basic(Binv, basic, status, xval)

        best_obj = -np.inf
        last_progress = 0
        it = 0
        since_refactor = warm[3] if warm is not None and len(warm) > 3 and warm[2] is not None else 0
        tol_p = self.primal_tol
        while True:
            if since_refactor >= self.refactor_every:
                Binv = self._inverse(basic)
                xB = self._primal_basic(Binv, basic, status, xval)
                d = self._duals(Binv, basic, cost)
                since_refactor = 0
            lB, uB = lo[basic], hi[basic]
            scale_l = tol_p * np.maximum(1.0, np.abs(np.where(np.isfinite(lB), lB, 0.0)))
            scale_u = tol_p * np.maximum(1.0, np.abs(np.where(np.isfinite(uB), uB, 0.0)))
            below = lB - xB
            above = xB - uB
            infeas = np.maximum(np.where(below > scale_l, below, 0.0),
                                np.where(above > scale_u, above, 0.0))
            bland = it >= self.bland_after
            if not infeas.any():
                break
            if it >= self.max_iter:
                raise LpNumericalError(f"iteration limit {self.max_iter} reached (m={m}, n={n})")
            if window:
                obj = cost[basic] @ xB + cost @ xval - cost[basic] @ xval[basic]
                if obj > best_obj + 1e-9 * max(1.0, abs(obj)):
                    best_obj, last_progress = obj, it
                elif it - last_progress > window:
                    raise LpStall(f"no dual progress in {window} pivots")
            if bland:
                cand = np.flatnonzero(infeas > 0)
                r = cand[np.argmin(basic[cand])]
            else:
                r = int(np.argmax(infeas))
            leave = basic[r]
            to_lower = below[r] > 0
            target = lB[r] if to_lower else uB[r]

            rho = Binv[r]
            alpha = np.empty(n + m)
            alpha[:n] = self.AT @ rho
            alpha[n:] = -rho
            alpha[basic] = 0.0
            eligible = (status != BASIC) & ~fixed
            if to_lower:
                ok = eligible & (((status == AT_LOWER) & (alpha < -self.pivot_tol))
                                 | ((status == AT_UPPER) & (alpha > self.pivot_tol)))
            else:
                ok = eligible & (((status == AT_LOWER) & (alpha > self.pivot_tol))
                                 | ((status == AT_UPPER) & (alpha < -self.pivot_tol)))
            cand = np.flatnonzero(ok)
            if cand.size == 0:
                return LpSolution(np.zeros(n), np.inf, "infeasible", it)
            ad = np.abs(d[cand])
            aa = np.abs(alpha[cand])
            ratios = ad / aa
            if bland:
                best = ratios.min()
                ties = cand[ratios <= best + 1e-12 * max(1.0, best)]
                q = int(ties.min())
            else:
                theta_max = ((ad + self.dual_tol) / aa).min()
                pool = ratios <= theta_max
                q = int(cand[pool][np.argmax(aa[pool])])

            col = self._ftran_column(Binv, q)
            piv = col[r]
            if abs(piv) < self.pivot_tol or abs(piv - alpha[q]) > 1e-6 * max(1.0, abs(piv)):
                if since_refactor == 0:
                    raise LpNumericalError(f"unstable pivot {piv:.3e} at iteration {it}")
                since_refactor = self.refactor_every
                continue

            theta_d = d[q] / alpha[q]
            d -= theta_d * alpha
            d[leave] = -theta_d
            d[q] = 0.0

            step = (xB[r] - target) / piv
            xB -= step * col
            entering_value = xval[q] + step
            xval[leave] = target
            status[leave] = AT_LOWER if to_lower else AT_UPPER
            xB[r] = entering_value
            basic[r] = q
            status[q] = BASIC

            prow = Binv[r] / piv
            Binv = dger(-1.0, col, prow, a=Binv, overwrite_a=True)
            Binv[r] = prow
            it += 1
            since_refactor += 1

        return self._finish(basic, status, xval, xB, Binv, since_refactor, it)

    def _finish(self, basic, status, xval, xB, Binv, since_refactor, it):
        xval[basic] = xB
        x = xval[: self.n].copy()
        obj = float(self.cost[: self.n] @ x)
        # the factor travels with the basis so children skip a refactorization
        return LpSolution(x, obj, "optimal", it, (basic.copy(), status.copy(), Binv, since_refactor))

    def _primal_cleanup(self, lo, hi, fixed, basic, status):
        """Bounded primal simplex from a primal feasible basis, true costs."""
        basic, status = basic.copy(), status.copy()
        n, m = self.n, self.m
        Binv = self._inverse(basic)
        xval = np.where(status == AT_UPPER, hi, lo)
        xval = np.where(np.isfinite(xval), xval, 0.0)
        xB = self._primal_basic(Binv, basic, status, xval)
        d = self._duals(Binv, basic, self.cost)
        it = since_refactor = 0
        while True:
            if since_refactor >= self.refactor_every:
                Binv = self._inverse(basic)
                xB = self._primal_basic(Binv, basic, status, xval)
                d = self._duals(Binv, basic, self.cost)
                since_refactor = 0
            movable = (status != BASIC) & ~fixed
            wrong = np.where(movable & (status == AT_LOWER), -d, 0.0)
            wrong = np.maximum(wrong, np.where(movable & (status == AT_UPPER), d, 0.0))
            cand = np.flatnonzero(wrong > self.dual_tol)
            if cand.size == 0:
                break
            if it >= self.max_iter:
                raise LpNumericalError(f"primal cleanup did not finish in {self.max_iter} pivots")
            bland = it >= self.bland_after
            q = int(cand[0]) if bland else int(cand[np.argmax(wrong[cand])])
            dirn = 1.0 if status[q] == AT_LOWER else -1.0
            col = self._ftran_column(Binv, q)
            delta = -dirn * col  # change of xB per unit step
            lB, uB = lo[basic], hi[basic]
            down = delta < -self.pivot_tol
            up = delta > self.pivot_tol
            room = np.full(m, np.inf)
            room[down] = (xB[down] - lB[down]) / -delta[down]
            room[up] = (uB[up] - xB[up]) / delta[up]
            room = np.maximum(room, 0.0)
            flip = hi[q] - lo[q]
            r = -1
            if np.isfinite(room).any():
                if bland:
                    best = room.min()
                    ties = np.flatnonzero(room <= best + 1e-12 * max(1.0, best))
                    r = int(ties[np.argmin(basic[ties])])
                else:
                    slack = np.full(m, np.inf)
                    tol = self.primal_tol * np.maximum(1.0, np.abs(np.where(down, lB, uB)))
                    slack[down | up] = room[down | up] + tol[down | up] / np.abs(delta[down | up])
                    pool = np.flatnonzero(room <= slack.min())
                    r = int(pool[np.argmax(np.abs(delta[pool]))])
            if r < 0 or flip <= room[r]:
                if not np.isfinite(flip):
                    return LpSolution(np.zeros(n), -np.inf, "unbounded", it)
                status[q] = AT_UPPER if dirn > 0 else AT_LOWER
                xval[q] = hi[q] if dirn > 0 else lo[q]
                xB += flip * delta
                it += 1
                continue
            t = room[r]
            piv = col[r]
            leave = basic[r]
            rho = Binv[r]
            alpha = np.empty(n + m)
            alpha[:n] = self.AT @ rho
            alpha[n:] = -rho
            alpha[basic] = 0.0
            theta_d = d[q] / piv
            d -= theta_d * alpha
            d[leave] = -theta_d
            d[q] = 0.0
            to_lower = delta[r] < 0
            xB += t * delta
            xval[leave] = lB[r] if to_lower else uB[r]
            status[leave] = AT_LOWER if to_lower else AT_UPPER
            xB[r] = xval[q] + dirn * t
            basic[r] = q
            status[q] = BASIC
            prow = rho / piv
            Binv = dger(-1.0, col, prow, a=Binv, overwrite_a=True)
            Binv[r] = prow
            it += 1
            since_refactor += 1
        return self._finish(basic, status, xval, xB, Binv, since_refactor, it)


class LpRelaxation:
    """LP relaxation of a MilpModel, reduced once and re-solved under
    tightened variable bounds (branch-and-bound nodes)."""

    def __init__(self, model, **simplex_opts):
        c, A, lo, hi, lb, ub, is_bin = model.arrays()
        self.model = model
        self.c_full = c
        self.is_binary_full = is_bin
        self.lb_full, self.ub_full = lb, ub
        red = reduce_problem(A, lo, hi, lb, ub, integer=is_bin)
        self.red = red
        self.infeasible = red.infeasible
        cols, rows = red.keep_cols, red.keep_rows
        self.cols = cols
        self.offset = float(c @ red.fixed_values) + model.objective_offset
        A_dense = A[rows][:, cols].toarray() if len(rows) and len(cols) else np.zeros((len(rows), len(cols)))
        self.lb = red.lb[cols]
        self.ub = red.ub[cols]
        self.is_binary = is_bin[cols]
        self.simplex = DualSimplex(c[cols], A_dense, red.row_lo[rows], red.row_hi[rows],
                                   **simplex_opts)

    def expand(self, xr: np.ndarray) -> np.ndarray:
        x = self.red.fixed_values.copy()
        x[self.cols] = xr
        return x

    def solve(self, lb=None, ub=None, warm=None) -> LpSolution:
        lb = self.lb if lb is None else lb
        ub = self.ub if ub is None else ub
        if self.infeasible:
            return LpSolution(np.zeros(len(self.cols)), np.inf, "infeasible")
        sol = self.simplex.solve(lb, ub, warm)
        if sol.status == "optimal" and np.any(np.abs(sol.x) >= BIG * (1 - 1e-12)):
            sol.status = "unbounded"
            sol.objective = -np.inf
        if sol.status == "optimal":
            sol.objective += self.offset
        return sol


def solve_lp(model) -> LpSolution:
    """Solve the LP relaxation of `model` (binaries relaxed to their bounds)."""
    relax = LpRelaxation(model)
    sol = relax.solve()
    full = relax.expand(sol.x)
    if sol.status == "optimal":
        viol = model.max_violation(full)
        if viol > 1e-7:
            raise LpNumericalError(f"LP numerical error: residual {viol:.3e} exceeds 1e-7")
        sol.objective = model.evaluate(full)
    return LpSolution(full, sol.objective, sol.status, sol.iterations, sol.basis)
