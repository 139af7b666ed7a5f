"""Halfspace polyhedra: Chebyshev centers and redundancy removal."""

from __future__ import annotations

import numpy as np

from .simplex import InfeasibleLP, linprog

REDUNDANCY_TOL = 1e-9
RADIUS_CAP = 1e6


class EmptyInterior(ValueError):
    """The polyhedron is empty or has no interior."""


def normalize(H, h) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scale rows to unit normals.

    Returns ``(H_unit, h_unit, trivial)`` where ``trivial`` marks rows with a
    (numerically) zero normal; those rows are kept unscaled.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    h = np.asarray(h, dtype=float).reshape(-1)
    norms = np.linalg.norm(H, axis=1)
    trivial = norms < 1e-12
    scale = np.where(trivial, 1.0, norms)
    return H / scale[:, None], h / scale, trivial


def chebyshev_center(H, h, r_cap: float = RADIUS_CAP) -> tuple[np.ndarray, float]:
    """Center and radius of the largest ball inside ``{z : H z <= h}``.

    Returns radius ``-inf`` for an empty set.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    h = np.asarray(h, dtype=float).reshape(-1)
    k, d = H.shape
    if d == 0:
        return np.zeros(0), (np.inf if np.all(h >= -REDUNDANCY_TOL) else -np.inf)
    norms = np.linalg.norm(H, axis=1)
    c = np.zeros(d + 1)
    c[-1] = -1.0
    A = np.hstack([H, norms[:, None]])
    bounds = [(None, None)] * d + [(0.0, r_cap)]
    try:
        res = linprog(c, A_ub=A, b_ub=h, bounds=bounds)
    except InfeasibleLP:
        return np.full(d, np.nan), -np.inf
    return res.x[:d], float(res.x[-1])


def irredundant_indices(H, h, tol: float = REDUNDANCY_TOL,
                        min_radius: float = 1e-9) -> np.ndarray:
    """Indices of a minimal subset of rows describing the same polyhedron.

    Rows are tested in order: row ``k`` is dropped when maximizing its normal
    over the remaining rows (itself relaxed by one unit) cannot exceed its
    offset by more than ``tol``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    h = np.asarray(h, dtype=float).reshape(-1)
    if H.shape[0] == 0:
        raise EmptyInterior("no halfspaces given")
    _, radius = chebyshev_center(H, h)
    if not radius > min_radius:
        raise EmptyInterior(f"polyhedron has no interior (radius {radius:.3g})")

    keep = np.ones(H.shape[0], dtype=bool)
    for k in range(H.shape[0]):
        if not np.any(H[k]):
            keep[k] = False   # 0 <= h_k holds since the set is nonempty
            continue
        others = keep.copy()
        others[k] = False
        A = np.vstack([H[others], H[k]])
        b = np.concatenate([h[others], [h[k] + 1.0]])
        res = linprog(-H[k], A_ub=A, b_ub=b, bounds=[(None, None)] * H.shape[1])
        if -res.fun <= h[k] + tol:
            keep[k] = False
    return np.flatnonzero(keep)


def remove_redundant(halfspaces):
    """Drop redundant ``(normal, offset)`` pairs; order of survivors is kept."""
    halfspaces = list(halfspaces)
    if not halfspaces:
        raise EmptyInterior("no halfspaces given")
    H = np.array([np.asarray(a, dtype=float) for a, _ in halfspaces])
    h = np.array([float(b) for _, b in halfspaces])
    return [halfspaces[i] for i in irredundant_indices(H, h)]
