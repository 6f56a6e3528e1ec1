"""Single entry point for the small linear programs used across the package."""
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

FEAS_TOL = 1e-9


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    status: str  # "optimal" | "infeasible" | "numerical"
    message: str = ""


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=(0, None)):
    """Minimize ``c @ x`` with HiGHS dual simplex.

    The solver runs single-threaded with fixed options, so repeated calls on the
    same data return the same vertex.
    """
    c = np.asarray(c, dtype=np.float64)
    opts = {
        "presolve": True,
        "primal_feasibility_tolerance": 1e-10,
        "dual_feasibility_tolerance": 1e-10,
    }
    res = linprog(
        c,
        A_ub=None if A_ub is None else sparse.csr_matrix(A_ub),
        b_ub=b_ub,
        A_eq=None if A_eq is None else sparse.csr_matrix(A_eq),
        b_eq=b_eq,
        bounds=bounds,
        method="highs-ds",
        options=opts,
    )
    if res.status == 0:
        status = "optimal"
    elif res.status == 2:
        status = "infeasible"
    else:
        status = "numerical"
    x = res.x if res.x is not None else np.full(c.shape, np.nan)
    fun = float(res.fun) if res.fun is not None else float("nan")
    return LPResult(x, fun, status, res.message)


class Builder:
    """Incremental sparse constraint assembly in COO form."""

    def __init__(self, n_vars):
        self.n = n_vars
        self._ub = ([], [], [], [])  # rows, cols, vals, rhs
        self._eq = ([], [], [], [])

    def _add(self, store, cols, vals, rhs):
        rows, cc, vv, bb = store
        r = len(bb)
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.broadcast_to(np.asarray(vals, dtype=np.float64), cols.shape).ravel()
        rows.append(np.full(cols.shape, r, dtype=np.int64))
        cc.append(cols)
        vv.append(vals)
        bb.append(float(rhs))

    def le(self, cols, vals, rhs):
        self._add(self._ub, cols, vals, rhs)

    def eq(self, cols, vals, rhs):
        self._add(self._eq, cols, vals, rhs)

    def le_block(self, cols, vals, rhs):
        """Many ``<=`` rows at once: cols/vals shaped (rows, k), rhs shaped (rows,)."""
        cols = np.atleast_2d(np.asarray(cols, dtype=np.int64))
        vals = np.broadcast_to(np.asarray(vals, dtype=np.float64), cols.shape)
        rhs = np.broadcast_to(np.asarray(rhs, dtype=np.float64), (cols.shape[0],))
        rows, cc, vv, bb = self._ub
        start = len(bb)
        rows.append(np.repeat(np.arange(start, start + cols.shape[0]), cols.shape[1]))
        cc.append(cols.ravel())
        vv.append(vals.ravel())
        bb.extend(rhs.tolist())

    def eq_block(self, cols, vals, rhs):
        cols = np.atleast_2d(np.asarray(cols, dtype=np.int64))
        vals = np.broadcast_to(np.asarray(vals, dtype=np.float64), cols.shape)
        rhs = np.broadcast_to(np.asarray(rhs, dtype=np.float64), (cols.shape[0],))
        rows, cc, vv, bb = self._eq
        start = len(bb)
        rows.append(np.repeat(np.arange(start, start + cols.shape[0]), cols.shape[1]))
        cc.append(cols.ravel())
        vv.append(vals.ravel())
        bb.extend(rhs.tolist())

    def _matrix(self, store):
        rows, cc, vv, bb = store
        if not bb:
            return None, None
        m = sparse.coo_matrix(
            (np.concatenate(vv), (np.concatenate(rows), np.concatenate(cc))),
            shape=(len(bb), self.n),
        )
        return m.tocsr(), np.array(bb)

    def solve(self, c, bounds=(0, None)):
        A_ub, b_ub = self._matrix(self._ub)
        A_eq, b_eq = self._matrix(self._eq)
        return solve_lp(c, A_ub, b_ub, A_eq, b_eq, bounds)
