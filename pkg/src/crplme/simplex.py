"""Dense bounded-variable primal simplex with Bland's rule.

Solves

    min  c @ x
    s.t. A_ub @ x <= b_ub
         A_eq @ x == b_eq
         lo <= x <= hi

for small dense problems where exact active sets and multipliers matter more
than raw throughput.  Rows are scaled by their largest coefficient before the
solve; multipliers are returned for the unscaled rows.

Sign conventions of the returned multipliers:

* ``ineq_duals``   lambda >= 0 with  c + A_ub.T @ lambda - A_eq.T @ eq_duals - reduced = 0
* ``eq_duals``     d(objective)/d(b_eq)
* ``reduced_costs`` c - A_ub.T @ (-lambda) - A_eq.T @ eq_duals, per structural column
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-11
ZERO_ROW_TOL = 1e-13


class LPError(Exception):
    """Base class for LP failures."""


class InfeasibleLP(LPError):
    """The constraint system has no solution.

    ``certificate`` is a :class:`FarkasCertificate` when every variable has a
    finite lower bound, else ``None``.
    """

    def __init__(self, message: str, certificate: "FarkasCertificate | None" = None):
        super().__init__(message)
        self.certificate = certificate


class UnboundedLP(LPError):
    pass


@dataclass(frozen=True)
class FarkasCertificate:
    """Affine infeasibility witness: every feasible RHS satisfies
    ``y_ub @ b_ub + y_eq @ b_eq + const <= 0``; the RHS that was solved
    gives ``value > 0``."""

    y_ub: np.ndarray
    y_eq: np.ndarray
    const: float
    value: float

    @property
    def rows(self) -> tuple[list[int], list[int]]:
        """Row indices (ub, eq) carrying nonzero weight."""
        return (np.flatnonzero(np.abs(self.y_ub) > 1e-12).tolist(),
                np.flatnonzero(np.abs(self.y_eq) > 1e-12).tolist())


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    fun: float
    ineq_duals: np.ndarray
    eq_duals: np.ndarray
    reduced_costs: np.ndarray
    basis: np.ndarray
    iterations: int
    primal_degenerate: bool
    dual_degenerate: bool


def _row_scale(A_ub: np.ndarray, A_eq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Max-abs row scales.  Rows of pure round-off (relative to the largest
    coefficient) get scale 1 so their RHS is not blown up."""
    big = max(1.0, np.abs(A_ub).max(initial=0.0), np.abs(A_eq).max(initial=0.0))

    def scale(A):
        if A.shape[0] == 0:
            return np.ones(0)
        s = np.abs(A).max(axis=1) if A.shape[1] else np.zeros(A.shape[0])
        s[s <= ZERO_ROW_TOL * big] = 1.0
        return s
    return scale(A_ub), scale(A_eq)


def solve_lp(c, A_ub, b_ub, A_eq, b_eq, lo, hi, *, max_iter: int | None = None,
             kernels=None) -> LPResult:
    """Solve an LP whose variables all have finite lower bounds.

    Raises :class:`InfeasibleLP` (with a Farkas certificate) or
    :class:`UnboundedLP`.
    """
    k = kernels or _kernels.active
    c = np.asarray(c, dtype=float)
    nx = c.shape[0]
    A_ub = np.asarray(A_ub, dtype=float).reshape(-1, nx)
    A_eq = np.asarray(A_eq, dtype=float).reshape(-1, nx)
    b_ub = np.asarray(b_ub, dtype=float).reshape(-1)
    b_eq = np.asarray(b_eq, dtype=float).reshape(-1)
    lo = np.asarray(lo, dtype=float).reshape(-1)
    hi = np.asarray(hi, dtype=float).reshape(-1)
    if not np.all(np.isfinite(lo)):
        raise ValueError("solve_lp needs finite lower bounds; use linprog()")
    if np.any(hi < lo):
        raise InfeasibleLP("variable bounds cross")

    s_ub, s_eq = _row_scale(A_ub, A_eq)
    Au = A_ub / s_ub[:, None]
    bu = b_ub / s_ub
    Ae = A_eq / s_eq[:, None]
    be = b_eq / s_eq
    mu_, me = Au.shape[0], Ae.shape[0]
    mr = mu_ + me

    A = np.vstack([Au, Ae]) if mr else np.zeros((0, nx))
    b = np.concatenate([bu, be])
    x_struct = lo.copy()
    resid = b - A @ x_struct

    # artificial columns only where the starting point violates a row
    need_art = np.zeros(mr, dtype=bool)
    need_art[:mu_] = resid[:mu_] < 0.0
    need_art[mu_:] = True
    art_rows = np.flatnonzero(need_art)
    na = art_rows.size
    nc = nx + mu_ + na

    M = np.zeros((mr, nc))
    M[:, :nx] = A
    M[np.arange(mu_), nx + np.arange(mu_)] = 1.0
    sigma = np.where(resid[art_rows] >= 0.0, 1.0, -1.0)
    M[art_rows, nx + mu_ + np.arange(na)] = sigma

    col_lo = np.concatenate([lo, np.zeros(mu_), np.zeros(na)])
    col_hi = np.concatenate([hi, np.full(mu_, np.inf), np.full(na, np.inf)])
    xv = np.concatenate([x_struct, np.zeros(mu_ + na)])

    basis = np.empty(mr, dtype=np.int64)
    coef = np.ones(mr)
    slack_rows = np.flatnonzero(~need_art[:mu_])
    basis[slack_rows] = nx + slack_rows
    basis[art_rows] = nx + mu_ + np.arange(na)
    coef[art_rows] = sigma
    xv[basis] = resid * coef
    is_basic = np.zeros(nc, dtype=np.bool_)
    is_basic[basis] = True
    T = M * coef[:, None]

    limit = max_iter or 200 * (mr + nc + 10)
    iters = 0

    if na:
        c1 = np.zeros(nc)
        c1[nx + mu_:] = 1.0
        d = c1 - c1[basis] @ T
        status, it = k.simplex_iterate(T, xv, basis, is_basic, col_lo, col_hi, d,
                                       limit, OPT_TOL, PIVOT_TOL)
        iters += it
        if status == _kernels.ITERATION_LIMIT:
            raise LPError("phase 1 iteration limit")
        xv = _refine(M, b, basis, is_basic, xv)
        infeas = xv[nx + mu_:].sum()
        if infeas > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            y = _basis_duals(M, basis, c1)
            dfull = c1 - M.T @ y
            dx = dfull[:nx]
            const = float(np.where(dx >= 0, dx * lo, dx * np.where(np.isfinite(hi), hi, 0.0)).sum())
            cert = FarkasCertificate(
                y_ub=y[:mu_] / s_ub, y_eq=y[mu_:] / s_eq, const=const,
                value=float(y @ b + const))
            raise InfeasibleLP("constraints are infeasible", cert)
        col_hi[nx + mu_:] = 0.0

    cost = np.zeros(nc)
    cost[:nx] = c
    d = cost - cost[basis] @ T
    status, it = k.simplex_iterate(T, xv, basis, is_basic, col_lo, col_hi, d,
                                   limit, OPT_TOL, PIVOT_TOL)
    iters += it
    if status == _kernels.UNBOUNDED:
        raise UnboundedLP("objective unbounded below")
    if status == _kernels.ITERATION_LIMIT:
        raise LPError("phase 2 iteration limit")

    xv = _refine(M, b, basis, is_basic, xv)
    bscale = max(1.0, np.abs(b).max(initial=0.0), np.abs(xv[np.isfinite(xv)]).max(initial=0.0))
    drift = max(np.abs(M @ xv - b).max(initial=0.0),
                (col_lo - xv).max(initial=0.0), (xv - col_hi).max(initial=0.0))
    if not drift <= 1e-7 * bscale:
        raise LPError(f"numerical breakdown: final point violates constraints by {drift:.3g}")
    y = _basis_duals(M, basis, cost)
    dfull = cost - M.T @ y

    xb = xv[basis]
    span = np.maximum(1.0, np.abs(xb))
    at_bound = (np.abs(xb - col_lo[basis]) <= FEAS_TOL * span) | (
        np.abs(xb - col_hi[basis]) <= FEAS_TOL * span)
    primal_deg = bool(at_bound.any())
    free_nb = (~is_basic) & (col_hi > col_lo)
    free_nb[nx + mu_:] = False
    cscale = max(1.0, np.abs(c).max(initial=0.0))
    dual_deg = bool((np.abs(dfull[free_nb]) <= OPT_TOL * cscale).any())

    x = xv[:nx].copy()
    return LPResult(
        x=x,
        fun=float(c @ x),
        ineq_duals=np.maximum(-y[:mu_], 0.0) / s_ub,
        eq_duals=y[mu_:] / s_eq,
        reduced_costs=dfull[:nx],
        basis=basis.copy(),
        iterations=iters,
        primal_degenerate=primal_deg,
        dual_degenerate=dual_deg,
    )


def _refine(M, b, basis, is_basic, xv):
    """Recompute basic values from the original columns."""
    if basis.size == 0:
        return xv
    nb = ~is_basic
    rhs = b - M[:, nb] @ xv[nb]
    try:
        xv[basis] = np.linalg.solve(M[:, basis], rhs)
    except np.linalg.LinAlgError:
        pass
    return xv


def _basis_duals(M, basis, cost):
    if basis.size == 0:
        return np.zeros(0)
    return np.linalg.solve(M[:, basis].T, cost[basis])


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None,
            kernels=None) -> LPResult:
    """General-bounds front end to :func:`solve_lp`.

    ``bounds`` is a sequence of ``(lo, hi)`` pairs (``None`` = infinite) or a
    single pair applied to every variable; default is ``(0, None)``.
    Variables without a finite lower bound are mirrored or split internally.
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, float).reshape(-1)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float).reshape(-1)

    if bounds is None:
        bounds = [(0.0, None)] * n
    elif len(bounds) == 2 and not hasattr(bounds[0], "__len__"):
        bounds = [tuple(bounds)] * n
    lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds], float)
    hi = np.array([np.inf if b[1] is None else b[1] for b in bounds], float)

    cols, cc, lo2, hi2 = [], [], [], []
    back = []  # (kind, index) per original variable
    for j in range(n):
        if np.isfinite(lo[j]):
            back.append(("keep", len(cols)))
            cols.append((j, 1.0)); cc.append(c[j]); lo2.append(lo[j]); hi2.append(hi[j])
        elif np.isfinite(hi[j]):
            # x = hi - x',  x' >= 0
            back.append(("mirror", len(cols)))
            cols.append((j, -1.0)); cc.append(-c[j]); lo2.append(0.0); hi2.append(np.inf)
        else:
            back.append(("split", len(cols)))
            cols.append((j, 1.0)); cc.append(c[j]); lo2.append(0.0); hi2.append(np.inf)
            cols.append((j, -1.0)); cc.append(-c[j]); lo2.append(0.0); hi2.append(np.inf)

    idx = np.array([j for j, _ in cols], dtype=int)
    sgn = np.array([s for _, s in cols])
    shift = np.where(~np.isfinite(lo) & np.isfinite(hi), hi, 0.0)
    Au2 = A_ub[:, idx] * sgn
    Ae2 = A_eq[:, idx] * sgn
    bu2 = b_ub - A_ub @ shift
    be2 = b_eq - A_eq @ shift
    res = solve_lp(np.array(cc), Au2, bu2, Ae2, be2, np.array(lo2), np.array(hi2),
                   kernels=kernels)

    x = np.empty(n)
    rc = np.empty(n)
    for j, (kind, p) in enumerate(back):
        if kind == "keep":
            x[j] = res.x[p]; rc[j] = res.reduced_costs[p]
        elif kind == "mirror":
            x[j] = hi[j] - res.x[p]; rc[j] = -res.reduced_costs[p]
        else:
            x[j] = res.x[p] - res.x[p + 1]; rc[j] = res.reduced_costs[p]
    return LPResult(
        x=x, fun=float(c @ x), ineq_duals=res.ineq_duals, eq_duals=res.eq_duals,
        reduced_costs=rc, basis=res.basis, iterations=res.iterations,
        primal_degenerate=res.primal_degenerate, dual_degenerate=res.dual_degenerate)
