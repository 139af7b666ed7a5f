"""Hot inner loops: simplex iterations, region scan, LMP nearest match.

Each kernel has a numba ``@njit`` version and a pure-numpy version with the
same signature and the same pivoting/tie-breaking logic.  The active pair is
picked once at import time:

    CRPLME_NUMBA=0   force the numpy path
    CRPLME_NUMBA=1   (default) use numba when it imports cleanly

Both implementations stay importable (``numba_kernels`` / ``numpy_kernels``)
so tests and the backend benchmark can run them side by side.
"""

from __future__ import annotations

import logging
import os
from types import SimpleNamespace

import numpy as np

logger = logging.getLogger(__name__)

OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2

_TIE_TOL = 1e-12


# --------------------------------------------------------------------------
# numpy path
# --------------------------------------------------------------------------

def _np_simplex_iterate(T, x, basis, is_basic, lo, hi, d, max_iter,
                        opt_tol, piv_tol):
    mr, nc = T.shape
    it = 0
    while it < max_iter:
        movable_up = (~is_basic) & (d < -opt_tol) & (x < hi)
        movable_dn = (~is_basic) & (d > opt_tol) & (x > lo)
        cand = movable_up | movable_dn
        if not cand.any():
            return OPTIMAL, it
        q = int(np.argmax(cand))          # Bland: lowest eligible index
        dirn = 1.0 if movable_up[q] else -1.0

        t_best = hi[q] - lo[q]
        col = dirn * T[:, q]
        xb = x[basis]
        lims = np.full(mr, np.inf)
        pos = col > piv_tol
        neg = (col < -piv_tol) & np.isfinite(hi[basis])
        lims[pos] = (xb[pos] - lo[basis][pos]) / col[pos]
        lims[neg] = (hi[basis][neg] - xb[neg]) / (-col[neg])
        np.maximum(lims, 0.0, out=lims)

        r = -1
        m = lims.min() if mr else np.inf
        if m < t_best - _TIE_TOL:
            ties = np.flatnonzero(lims <= m + _TIE_TOL)
            r = int(ties[np.argmin(basis[ties])])
            t_best = lims[r]
        if not np.isfinite(t_best):
            return UNBOUNDED, it

        x[q] += dirn * t_best
        x[basis] -= t_best * col
        if r < 0:
            x[q] = hi[q] if dirn > 0 else lo[q]
        else:
            leave = basis[r]
            x[leave] = lo[leave] if col[r] > 0 else hi[leave]
            prow = T[r] / T[r, q]
            colq = T[:, q].copy()
            T -= np.outer(colq, prow)
            T[r] = prow
            d -= d[q] * prow
            basis[r] = q
            is_basic[leave] = False
            is_basic[q] = True
        it += 1
    return ITERATION_LIMIT, it


def _np_first_containing(normals, offsets, starts, point, tol):
    nreg = starts.shape[0] - 1
    if normals.shape[0] == 0:
        return 0 if nreg > 0 else -1
    viol = normals @ point - offsets
    for k in range(nreg):
        a, b = starts[k], starts[k + 1]
        if a == b or viol[a:b].max() <= tol:
            return k
    return -1


def _np_region_violations(normals, offsets, starts, point):
    nreg = starts.shape[0] - 1
    out = np.full(nreg, -np.inf)
    if normals.shape[0] == 0:
        return out
    viol = normals @ point - offsets
    for k in range(nreg):
        a, b = starts[k], starts[k + 1]
        if b > a:
            out[k] = viol[a:b].max()
    return out


def _np_nearest_linf(keys, query):
    if keys.shape[0] == 0:
        return -1, np.inf
    dist = np.abs(keys - query).max(axis=1)
    k = int(np.argmin(dist))
    return k, float(dist[k])


numpy_kernels = SimpleNamespace(
    name="numpy",
    simplex_iterate=_np_simplex_iterate,
    first_containing=_np_first_containing,
    region_violations=_np_region_violations,
    nearest_linf=_np_nearest_linf,
)


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------

def _build_numba():
    from numba import njit

    @njit(cache=True, nogil=True)
    def simplex_iterate(T, x, basis, is_basic, lo, hi, d, max_iter,
                        opt_tol, piv_tol):
        mr, nc = T.shape
        it = 0
        while it < max_iter:
            q = -1
            dirn = 0.0
            for j in range(nc):
                if is_basic[j]:
                    continue
                if d[j] < -opt_tol and x[j] < hi[j]:
                    q = j
                    dirn = 1.0
                    break
                if d[j] > opt_tol and x[j] > lo[j]:
                    q = j
                    dirn = -1.0
                    break
            if q < 0:
                return OPTIMAL, it

            t_best = hi[q] - lo[q]
            m = np.inf
            for i in range(mr):
                a = dirn * T[i, q]
                bi = basis[i]
                if a > piv_tol:
                    lim = (x[bi] - lo[bi]) / a
                elif a < -piv_tol and np.isfinite(hi[bi]):
                    lim = (hi[bi] - x[bi]) / (-a)
                else:
                    continue
                if lim < 0.0:
                    lim = 0.0
                if lim < m:
                    m = lim
            r = -1
            if m < t_best - _TIE_TOL:
                best_var = nc + 1
                for i in range(mr):
                    a = dirn * T[i, q]
                    bi = basis[i]
                    if a > piv_tol:
                        lim = (x[bi] - lo[bi]) / a
                    elif a < -piv_tol and np.isfinite(hi[bi]):
                        lim = (hi[bi] - x[bi]) / (-a)
                    else:
                        continue
                    if lim < 0.0:
                        lim = 0.0
                    if lim <= m + _TIE_TOL and bi < best_var:
                        best_var = bi
                        r = i
                t_best = m
                # recompute exactly as the numpy path does (lims[r])
                a = dirn * T[r, q]
                bi = basis[r]
                if a > 0:
                    t_best = (x[bi] - lo[bi]) / a
                else:
                    t_best = (hi[bi] - x[bi]) / (-a)
                if t_best < 0.0:
                    t_best = 0.0
            if not np.isfinite(t_best):
                return UNBOUNDED, it

            x[q] += dirn * t_best
            for i in range(mr):
                x[basis[i]] -= t_best * dirn * T[i, q]
            if r < 0:
                x[q] = hi[q] if dirn > 0 else lo[q]
            else:
                leave = basis[r]
                x[leave] = lo[leave] if dirn * T[r, q] > 0 else hi[leave]
                piv = T[r, q]
                for j in range(nc):
                    T[r, j] /= piv
                for i in range(mr):
                    if i == r:
                        continue
                    f = T[i, q]
                    if f != 0.0:
                        for j in range(nc):
                            T[i, j] -= f * T[r, j]
                dq = d[q]
                for j in range(nc):
                    d[j] -= dq * T[r, j]
                basis[r] = q
                is_basic[leave] = False
                is_basic[q] = True
            it += 1
        return ITERATION_LIMIT, it

    @njit(cache=True, nogil=True)
    def first_containing(normals, offsets, starts, point, tol):
        nreg = starts.shape[0] - 1
        n = point.shape[0]
        for k in range(nreg):
            ok = True
            for h in range(starts[k], starts[k + 1]):
                s = -offsets[h]
                for j in range(n):
                    s += normals[h, j] * point[j]
                if s > tol:
                    ok = False
                    break
            if ok:
                return k
        return -1

    @njit(cache=True, nogil=True)
    def region_violations(normals, offsets, starts, point):
        nreg = starts.shape[0] - 1
        n = point.shape[0]
        out = np.full(nreg, -np.inf)
        for k in range(nreg):
            for h in range(starts[k], starts[k + 1]):
                s = -offsets[h]
                for j in range(n):
                    s += normals[h, j] * point[j]
                if s > out[k]:
                    out[k] = s
        return out

    @njit(cache=True, nogil=True)
    def nearest_linf(keys, query):
        best = -1
        best_d = np.inf
        for k in range(keys.shape[0]):
            dk = 0.0
            for j in range(keys.shape[1]):
                v = abs(keys[k, j] - query[j])
                if v > dk:
                    dk = v
                    if dk >= best_d:
                        break
            if dk < best_d:
                best_d = dk
                best = k
        return best, best_d

    return SimpleNamespace(
        name="numba",
        simplex_iterate=simplex_iterate,
        first_containing=first_containing,
        region_violations=region_violations,
        nearest_linf=nearest_linf,
    )


def _want_numba() -> bool:
    flag = os.environ.get("CRPLME_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


try:
    numba_kernels = _build_numba()
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_kernels = None

if _want_numba() and numba_kernels is not None:
    active = numba_kernels
else:
    active = numpy_kernels

logger.debug("crplme kernels backend: %s", active.name)
