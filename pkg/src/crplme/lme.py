"""Region prices, load lookup and the LMP -> LME map."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from . import _kernels

if TYPE_CHECKING:
    from .mpp import CriticalRegion, RegionDatabase

LOCATE_TOL = 1e-9
LMP_MATCH_TOL = 1e-6
LMP_KEY_QUANTUM = 1e-9
BETA_AUDIT_TOL = 1e-9


class LocateError(LookupError):
    """No stored region contains the load.

    ``nearest`` lists ``(region_id, max_violation)`` for the closest regions.
    """

    def __init__(self, message: str, nearest=(), outside_polytope: bool = False):
        super().__init__(message)
        self.nearest = list(nearest)
        self.outside_polytope = outside_polytope


class UnknownLmp(LookupError):
    pass


class AssumptionViolation(RuntimeError):
    """Several regions share an LMP vector but disagree on LME."""

    def __init__(self, message: str, region_ids=(), betas=()):
        super().__init__(message)
        self.region_ids = list(region_ids)
        self.betas = [np.asarray(b) for b in betas]


@dataclass(frozen=True, eq=False)
class PriceEmissionPair:
    alpha: np.ndarray
    beta: np.ndarray
    region_id: int

    def to_dict(self, audit_pass: bool | None = None) -> dict[str, Any]:
        return {"region_id": self.region_id, "alpha": self.alpha.tolist(),
                "beta": self.beta.tolist(), "audit_pass": audit_pass}


def region_prices(region: "CriticalRegion", c, e) -> PriceEmissionPair:
    """``alpha = c G`` and ``beta = e G``; both are stored on the region."""
    G = region.G
    region.alpha = np.asarray(c, dtype=float) @ G
    region.beta = np.asarray(e, dtype=float) @ G
    return PriceEmissionPair(region.alpha, region.beta, region.id)


def locate(db: "RegionDatabase", l, tol: float = LOCATE_TOL, kernels=None) -> int:
    """Id of the first (lowest-id) region containing ``l`` within ``tol``."""
    k = kernels or _kernels.active
    l = np.ascontiguousarray(l, dtype=float)
    if l.shape != (db.polytope.n,):
        raise ValueError(f"load must have shape ({db.polytope.n},), got {l.shape}")
    if not db.polytope.contains(l, tol):
        raise LocateError("load lies outside the load polytope", outside_polytope=True)
    normals, offsets, starts = db.stacked()
    r = k.first_containing(normals, offsets, starts, l, tol)
    if r >= 0:
        return db.regions[r].id
    viol = k.region_violations(normals, offsets, starts, l)
    order = np.argsort(viol, kind="stable")[:3]
    nearest = [(db.regions[i].id, float(viol[i])) for i in order]
    desc = ", ".join(f"region {i} (violation {v:.3g})" for i, v in nearest)
    raise LocateError(f"no region contains the load; nearest: {desc}", nearest)


def lme_for_load(db: "RegionDatabase", l, tol: float = LOCATE_TOL) -> PriceEmissionPair:
    r = db.regions[locate(db, l, tol)]
    return PriceEmissionPair(r.alpha, r.beta, r.id)


@dataclass(eq=False)
class LmpEntry:
    alpha: np.ndarray
    region_ids: list[int]
    betas: list[np.ndarray]
    consistent: bool = True

    @property
    def beta(self) -> np.ndarray:
        return self.betas[0]


@dataclass(eq=False)
class LmpIndex:
    entries: list[LmpEntry]
    match_tolerance: float = LMP_MATCH_TOL
    audit_pass: bool = True
    _keys: np.ndarray = field(default=None, repr=False)
    _exact: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self._keys is None:
            n = self.entries[0].alpha.shape[0] if self.entries else 0
            self._keys = np.ascontiguousarray(
                np.array([e.alpha for e in self.entries], dtype=float).reshape(-1, n))
        for i, e in enumerate(self.entries):
            self._exact.setdefault(_quantize(e.alpha), i)

    @property
    def collisions(self) -> list[LmpEntry]:
        return [e for e in self.entries if not e.consistent]

    def audit_report(self) -> dict[str, Any]:
        return {"audit_pass": self.audit_pass, "entries": len(self.entries),
                "collisions": [{"alpha": e.alpha.tolist(), "region_ids": e.region_ids,
                                "betas": [b.tolist() for b in e.betas]}
                               for e in self.collisions]}

    def match(self, alpha, kernels=None) -> LmpEntry:
        a = np.ascontiguousarray(alpha, dtype=float)
        if a.shape != self._keys.shape[1:]:
            raise ValueError(f"LMP vector must have length {self._keys.shape[1]}")
        i = self._exact.get(_quantize(a))
        if i is None:
            k = kernels or _kernels.active
            i, dist = k.nearest_linf(self._keys, a)
            if i < 0 or dist > self.match_tolerance:
                raise UnknownLmp(f"no region LMP within {self.match_tolerance:g} of the query"
                                 + ("" if i < 0 else f" (closest L-inf distance {dist:.6g})"))
        return self.entries[i]


def _quantize(a) -> tuple[int, ...]:
    return tuple(int(v) for v in np.round(np.asarray(a) / LMP_KEY_QUANTUM))


def build_lmp_index(db: "RegionDatabase", tol: float = LMP_MATCH_TOL,
                    beta_tol: float = BETA_AUDIT_TOL) -> LmpIndex:
    """Group regions by LMP vector and audit that each group has one LME.

    Regions are visited in id order; each joins the first existing group whose
    representative LMP is within ``tol`` (L-inf), else starts a new group.
    """
    entries: list[LmpEntry] = []
    for r in sorted(db.regions, key=lambda r: r.id):
        home = None
        for e in entries:
            if np.abs(e.alpha - r.alpha).max(initial=0.0) <= tol:
                home = e
                break
        if home is None:
            entries.append(LmpEntry(r.alpha.copy(), [r.id], [r.beta.copy()]))
            continue
        home.region_ids.append(r.id)
        home.betas.append(r.beta.copy())
        scale = max(1.0, np.abs(home.betas[0]).max(initial=0.0))
        if np.abs(r.beta - home.betas[0]).max(initial=0.0) > beta_tol * scale:
            home.consistent = False
    ok = all(e.consistent for e in entries)
    return LmpIndex(entries, match_tolerance=tol, audit_pass=ok)


def lme_for_lmp(index: LmpIndex, alpha) -> np.ndarray:
    """LME vector of the stored region whose LMP matches ``alpha``."""
    e = index.match(alpha)
    if not e.consistent:
        betas = "; ".join(f"region {i}: {np.array2string(b, precision=6)}"
                          for i, b in zip(e.region_ids, e.betas))
        raise AssumptionViolation(
            f"LMP is shared by regions {e.region_ids} with different LME ({betas})",
            e.region_ids, e.betas)
    return e.beta
