"""Critical-region enumeration of the load polytope (multi-parametric LP)."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import scipy.linalg as sla

from .dispatch import (EPS_ACT, DegenerateSolution, DispatchSolution, InfeasibleDispatch,
                       SCEDSolver)
from .geometry import EmptyInterior, chebyshev_center, irredundant_indices, normalize
from .grid import CompactForm, LoadPolytope, NetworkCase, parse_case
from .lme import region_prices

logger = logging.getLogger(__name__)

MIN_RADIUS = 1e-7          # MW; Chebyshev radius below this = lower-dimensional
COND_LIMIT = 1e12
ROUTE_AGREEMENT = 1e-9
DUAL_SENS_TOL = 1e-10
MAX_RETRIES = 5
DEFAULT_MAX_REGIONS = 10_000
DB_FORMAT = "crplme-regions/1"


class SensitivityMismatch(RuntimeError):
    pass


class EnumerationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SensitivityMatrix:
    """``G[i, j] = dx_i/dl_j``; ``dlam`` and ``dmu`` are the multiplier
    derivatives (zero inside an LP critical region)."""

    G: np.ndarray
    dlam: np.ndarray
    dmu: np.ndarray
    route: str


@dataclass(eq=False)
class CriticalRegion:
    id: int
    active_signature: tuple[int, ...]
    normals: np.ndarray          # (k, n); region is normals @ l <= offsets
    offsets: np.ndarray
    G: np.ndarray
    x_anchor: np.ndarray
    l_anchor: np.ndarray
    lam_anchor: np.ndarray
    mu_anchor: float
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None
    degenerate: bool = False
    radius: float = float("inf")

    @property
    def halfspaces(self) -> list[tuple[np.ndarray, float]]:
        return [(a, float(b)) for a, b in zip(self.normals, self.offsets)]

    def policy(self, l) -> np.ndarray:
        """Affine dispatch ``x_anchor + G (l - l_anchor)``."""
        return self.x_anchor + self.G @ (np.asarray(l, dtype=float) - self.l_anchor)

    def violation(self, l) -> float:
        """Largest ``normal @ l - offset`` (<= 0 inside)."""
        if self.normals.shape[0] == 0:
            return -np.inf
        return float((self.normals @ np.asarray(l, dtype=float) - self.offsets).max())

    def contains(self, l, tol: float = 1e-9) -> bool:
        return self.violation(l) <= tol

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "active_signature": list(self.active_signature),
            "degenerate": self.degenerate,
            "chebyshev_radius": self.radius,
            "halfspaces": [{"normal": a.tolist(), "offset": float(b)}
                           for a, b in zip(self.normals, self.offsets)],
            "G": self.G.tolist(),
            "alpha": None if self.alpha is None else self.alpha.tolist(),
            "beta": None if self.beta is None else self.beta.tolist(),
            "anchors": {"x": self.x_anchor.tolist(), "l": self.l_anchor.tolist(),
                        "lambda": self.lam_anchor.tolist(), "mu": self.mu_anchor},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any], n: int) -> "CriticalRegion":
        hs = d["halfspaces"]
        normals = np.array([h["normal"] for h in hs], dtype=float).reshape(len(hs), n)
        anchors = d["anchors"]
        return cls(
            id=int(d["id"]), active_signature=tuple(d["active_signature"]),
            normals=normals, offsets=np.array([h["offset"] for h in hs], dtype=float),
            G=np.array(d["G"], dtype=float).reshape(-1, n),
            x_anchor=np.array(anchors["x"], dtype=float),
            l_anchor=np.array(anchors["l"], dtype=float),
            lam_anchor=np.array(anchors["lambda"], dtype=float),
            mu_anchor=float(anchors["mu"]),
            alpha=None if d.get("alpha") is None else np.array(d["alpha"], dtype=float),
            beta=None if d.get("beta") is None else np.array(d["beta"], dtype=float),
            degenerate=bool(d.get("degenerate", False)),
            radius=float(d.get("chebyshev_radius", np.inf)),
        )


@dataclass(eq=False)
class RegionDatabase:
    regions: list[CriticalRegion]
    polytope: LoadPolytope
    case_fingerprint: str
    case: NetworkCase | None = None
    build_stats: dict[str, Any] = field(default_factory=dict)
    complete: bool = True

    _stacked: tuple | None = field(default=None, init=False, repr=False)

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All halfspaces in one array with per-region start offsets."""
        if self._stacked is None:
            n = self.polytope.n
            normals = [r.normals for r in self.regions] or [np.zeros((0, n))]
            offsets = [r.offsets for r in self.regions] or [np.zeros(0)]
            sizes = [r.normals.shape[0] for r in self.regions]
            starts = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
            self._stacked = (np.ascontiguousarray(np.vstack(normals)),
                             np.ascontiguousarray(np.concatenate(offsets)), starts)
        return self._stacked

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": DB_FORMAT,
            "case_fingerprint": self.case_fingerprint,
            "complete": self.complete,
            "build_stats": self.build_stats,
            "polytope": self.polytope.to_dict(),
            "case": None if self.case is None else self.case.to_dict(),
            "regions": [r.to_dict() for r in self.regions],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "RegionDatabase":
        d = json.loads(text)
        if d.get("format") != DB_FORMAT:
            raise ValueError(f"not a region database (format {d.get('format')!r})")
        poly = LoadPolytope.from_dict(d["polytope"])
        case = None if d.get("case") is None else parse_case(d["case"])
        return cls(regions=[CriticalRegion.from_dict(r, poly.n) for r in d["regions"]],
                   polytope=poly, case_fingerprint=d["case_fingerprint"], case=case,
                   build_stats=d.get("build_stats", {}), complete=bool(d.get("complete", True)))

    @classmethod
    def load(cls, path: str | Path) -> "RegionDatabase":
        return cls.loads(Path(path).read_text())


# --------------------------------------------------------------------------
# sensitivities
# --------------------------------------------------------------------------

def _active_matrix(compact: CompactForm, active) -> tuple[np.ndarray, np.ndarray]:
    act = list(active)
    K = np.vstack([compact.A[act], compact.eq_coeff[None, :]])
    R = np.vstack([compact.F[act], compact.eq_load_coeff[None, :]])
    return K, R


def active_system_sensitivity(compact: CompactForm, active) -> np.ndarray:
    """``dx/dl`` from the square system ``A_act dx = F_act dl``, ``sum dx = sum dl``."""
    K, R = _active_matrix(compact, active)
    if K.shape[0] != K.shape[1]:
        raise DegenerateSolution(
            f"{len(active)} active rows for {compact.g} generators (need {compact.g - 1})",
            active)
    if np.linalg.cond(K) > COND_LIMIT:
        raise DegenerateSolution("active constraint rows are linearly dependent", active)
    return np.linalg.solve(K, R)


def kkt_sensitivity(compact: CompactForm, x, lam, mu, l_c) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``-(M_c)^{-1} N_c`` with the balance equality carried as an extra row.

    Returns ``(dx/dl, dlam/dl, dmu/dl)``.
    """
    A, F = compact.A, compact.F
    p, g = A.shape
    n = F.shape[1]
    V = A @ x - compact.b - F @ l_c
    N_dim = g + p + 1
    M = np.zeros((N_dim, N_dim))
    M[:g, g:g + p] = A.T
    M[:g, g + p] = -compact.eq_coeff
    M[g:g + p, :g] = -lam[:, None] * A
    M[g:g + p, g:g + p] = np.diag(-V)
    M[g + p, :g] = compact.eq_coeff
    N = np.zeros((N_dim, n))
    N[g:g + p] = lam[:, None] * F
    N[g + p] = -compact.eq_load_coeff

    lu, piv, info = sla.lapack.dgetrf(M)
    if info != 0:
        raise DegenerateSolution("KKT matrix is singular")
    anorm = np.abs(M).sum(axis=0).max()
    rcond, _ = sla.lapack.dgecon(lu, anorm, norm="1")
    if rcond * COND_LIMIT < 1.0:
        raise DegenerateSolution(f"KKT matrix ill-conditioned (rcond {rcond:.3g})")
    D, _ = sla.lapack.dgetrs(lu, piv, -N)
    return D[:g], D[g:g + p], D[g + p]


def weak_rows(sol: DispatchSolution) -> tuple[int, ...]:
    """Active rows whose multiplier is at or below the activity threshold."""
    return tuple(i for i in sol.active_set if sol.lam[i] <= EPS_ACT)


def sensitivity_at(compact: CompactForm, sol: DispatchSolution, l_c=None, *,
                   check: bool = True, allow_weak: bool = False) -> SensitivityMatrix:
    """Generation/multiplier sensitivities at a solved point.

    The KKT route (``-(M_c)^{-1} N_c``) is primary; with ``check`` it is
    compared against the reduced active-constraint system.  Weakly active rows
    make ``M_c`` singular; with ``allow_weak`` the reduced system alone is
    used and ``route == "active"``.
    """
    l_c = sol.load if l_c is None else np.asarray(l_c, dtype=float)
    weak = weak_rows(sol)
    if weak:
        if not allow_weak:
            raise DegenerateSolution(f"weakly active rows {weak}", sol.active_set)
        G = active_system_sensitivity(compact, sol.active_set)
        n = compact.F.shape[1]
        return SensitivityMatrix(G, np.zeros((compact.p, n)), np.zeros(n), "active")

    G, dlam, dmu = kkt_sensitivity(compact, sol.x, sol.lam, sol.mu, l_c)
    if check:
        G2 = active_system_sensitivity(compact, sol.active_set)
        gap = np.abs(G - G2).max(initial=0.0)
        if gap > ROUTE_AGREEMENT * max(1.0, np.abs(G2).max(initial=0.0)):
            raise SensitivityMismatch(f"KKT and active-system routes differ by {gap:.3g}")
    return SensitivityMatrix(G, dlam, dmu, "kkt")


# --------------------------------------------------------------------------
# regions
# --------------------------------------------------------------------------

class _Subspace:
    """Maps between full load vectors and the polytope's free coordinates."""

    def __init__(self, polytope: LoadPolytope):
        self.poly = polytope
        self.free = polytope.free
        self.fixed_vals = polytope.lower.copy()
        self.d = int(self.free.sum())

    def embed(self, z) -> np.ndarray:
        l = self.fixed_vals.copy()
        l[self.free] = z
        return l

    def project(self, l) -> np.ndarray:
        return np.asarray(l, dtype=float)[self.free]

    def restrict(self, H, h) -> tuple[np.ndarray, np.ndarray]:
        """Substitute fixed coordinates: ``H l <= h`` -> ``H_f z <= h'``."""
        H = np.atleast_2d(H)
        fixed = ~self.free
        return H[:, self.free], h - H[:, fixed] @ self.fixed_vals[fixed]

    def lift(self, Hf) -> np.ndarray:
        Hf = np.atleast_2d(Hf)
        out = np.zeros((Hf.shape[0], self.poly.n))
        out[:, self.free] = Hf
        return out

    def root(self) -> tuple[np.ndarray, np.ndarray]:
        H, h = self.poly.box_halfspaces()
        Hf, hf = self.restrict(H, h)
        Hn, hn, trivial = normalize(Hf, hf)
        if np.any(hn[trivial] < -1e-9):
            raise EnumerationError("load polytope is empty")
        return Hn[~trivial], hn[~trivial]


def raw_halfspaces(compact: CompactForm, sens: SensitivityMatrix, sol: DispatchSolution,
                   active=None) -> tuple[np.ndarray, np.ndarray]:
    """Unreduced region constraints in full load space: feasibility of the
    affine policy on inactive rows and nonnegativity of varying multipliers."""
    active = set(sol.active_set if active is None else active)
    inactive = [i for i in range(compact.p) if i not in active]
    A, F, b = compact.A, compact.F, compact.b
    G, la = sens.G, sol.load
    xa = sol.x
    H = A[inactive] @ G - F[inactive]
    h = b[inactive] - A[inactive] @ xa + A[inactive] @ G @ la
    rows = [H]
    offs = [h]
    big = np.abs(sens.dlam).max(axis=1) > DUAL_SENS_TOL
    if np.any(big):
        D = sens.dlam[big]
        rows.append(-D)
        offs.append(sol.lam[big] - D @ la)
    return np.vstack(rows), np.concatenate(offs)


def policy_margin(compact: CompactForm, region: CriticalRegion, l) -> float:
    """Largest slack ``A x(l) - b - F l`` over the region's inactive rows
    under its affine policy; negative means strictly feasible at ``l``, even
    outside the load polytope."""
    l = np.asarray(l, dtype=float)
    inactive = np.setdiff1d(np.arange(compact.p), region.active_signature)
    if inactive.size == 0:
        return -np.inf
    s = compact.A[inactive] @ region.policy(l) - compact.b[inactive] - compact.F[inactive] @ l
    return float(s.max())


def define_region(compact: CompactForm, sens: SensitivityMatrix, sol: DispatchSolution,
                  polytope: LoadPolytope, *, region_id: int = 0,
                  degenerate: bool = False, _sub: _Subspace | None = None) -> CriticalRegion:
    """Build the irredundant region around ``sol.load`` for the given policy.

    Raises :class:`EmptyInterior` when the region is empty or thinner than
    ``MIN_RADIUS`` inside the polytope.
    """
    sub = _sub or _Subspace(polytope)
    H, h = raw_halfspaces(compact, sens, sol)
    Hf, hf = sub.restrict(H, h)
    Hn, hn, trivial = normalize(Hf, hf)
    if np.any(hn[trivial] < -1e-9):
        raise EmptyInterior("a constant region constraint is violated")
    Hn, hn = Hn[~trivial], hn[~trivial]
    Hb, hb = sub.root()
    Hall = np.vstack([Hn, Hb]) if sub.d else np.zeros((0, 0))
    hall = np.concatenate([hn, hb]) if sub.d else np.zeros(0)

    if sub.d == 0:
        keep_H, keep_h, radius = np.zeros((0, 0)), np.zeros(0), float("inf")
    else:
        _, radius = chebyshev_center(Hall, hall)
        if not radius > MIN_RADIUS:
            raise EmptyInterior(f"region is lower-dimensional (radius {radius:.3g})")
        keep = irredundant_indices(Hall, hall)
        keep_H, keep_h = Hall[keep], hall[keep]
        za = sub.project(sol.load)
        if np.max(keep_H @ za - keep_h) > 1e-9:
            raise EmptyInterior("anchor lies outside its own region")

    return CriticalRegion(
        id=region_id, active_signature=tuple(sorted(sol.active_set)),
        normals=sub.lift(keep_H) if sub.d else np.zeros((0, polytope.n)),
        offsets=keep_h.copy(), G=sens.G, x_anchor=sol.x.copy(), l_anchor=sol.load.copy(),
        lam_anchor=sol.lam.copy(), mu_anchor=sol.mu, degenerate=degenerate,
        radius=float(radius))


@dataclass
class _Probe:
    kind: str                       # region | empty | infeasible | sliver
    sol: DispatchSolution | None = None
    sens: SensitivityMatrix | None = None
    degenerate: bool = False
    cut: tuple[np.ndarray, float] | None = None
    retries: int = 0


def _probe(solver: SCEDSolver, sub: _Subspace, H, h, seed_key, perturb_scale: float) -> _Probe:
    cf = solver.compact
    if sub.d == 0:
        center, radius = np.zeros(0), np.inf
    else:
        center, radius = chebyshev_center(H, h)
        if not radius > MIN_RADIUS:
            return _Probe("empty")
    rng = np.random.default_rng(seed_key)
    z = center
    fallback = None
    for attempt in range(MAX_RETRIES + 1):
        l = sub.embed(z)
        try:
            sol = solver.solve(l)
        except InfeasibleDispatch as exc:
            return _Probe("infeasible", cut=exc.cut, retries=attempt)
        try:
            if weak_rows(sol):
                sens = sensitivity_at(cf, sol, allow_weak=True)
                if fallback is None:
                    fallback = _Probe("region", sol, sens, degenerate=True, retries=attempt)
            else:
                sens = sensitivity_at(cf, sol)
                return _Probe("region", sol, sens, retries=attempt)
        except (DegenerateSolution, SensitivityMismatch):
            pass
        if sub.d == 0:
            break
        step = min(perturb_scale, 0.5 * radius)
        u = rng.normal(size=sub.d)
        z = center + step * u / np.linalg.norm(u)
    if fallback is not None:
        return fallback
    return _Probe("sliver", retries=MAX_RETRIES)


def _reduce_piece(H, h):
    Hn, hn, trivial = normalize(H, h)
    if np.any(hn[trivial] < -1e-9):
        return None
    Hn, hn = Hn[~trivial], hn[~trivial]
    _, radius = chebyshev_center(Hn, hn)
    if not radius > MIN_RADIUS:
        return None
    keep = irredundant_indices(Hn, hn)
    return Hn[keep], hn[keep]


def _subtract(H, h, RH, Rh) -> list[tuple[np.ndarray, np.ndarray]]:
    """Convex pieces of ``{H z <= h} minus {RH z <= Rh}``."""
    pieces = []
    for k in range(RH.shape[0]):
        if np.any(np.all(np.isclose(H, RH[k], atol=1e-12), axis=1)
                  & np.isclose(h, Rh[k], atol=1e-12)):
            continue   # facet shared with the piece: reversed side is empty
        NH = np.vstack([H, RH[:k], -RH[k:k + 1]])
        Nh = np.concatenate([h, Rh[:k], -Rh[k:k + 1]])
        red = _reduce_piece(NH, Nh)
        if red is not None:
            pieces.append(red)
    return pieces


def enumerate_regions(case: NetworkCase, polytope: LoadPolytope | None = None, *,
                      max_regions: int = DEFAULT_MAX_REGIONS, seed: int = 0,
                      workers: int = 1, coverage_samples: int = 2000,
                      max_probes: int | None = None) -> RegionDatabase:
    """Partition the load polytope into critical regions.

    Pieces of the unexplored remainder are probed at their Chebyshev centers;
    each new active set yields a region, and the piece minus that region is
    split into convex pieces and queued.  Probes inside one frontier level are
    independent and may run on ``workers`` threads; results are merged in a
    fixed order so the output does not depend on ``workers``.
    """
    polytope = polytope or case.polytope()
    if polytope.n != case.n:
        raise ValueError("polytope dimension does not match the case")
    solver = SCEDSolver(case)
    cf = solver.compact
    sub = _Subspace(polytope)
    try:
        solver.solve(polytope.l0)
    except InfeasibleDispatch as exc:
        raise EnumerationError("SCED is infeasible at the nominal load") from exc

    perturb_scale = 1e-5 * max(1.0, float(np.linalg.norm(polytope.l0)))
    regions: list[CriticalRegion] = []
    by_sig: dict[tuple[int, ...], int] = {}
    stats = {"probes": 0, "degenerate_probes": 0, "skipped_slivers": 0,
             "infeasible_cuts": 0, "rejected_regions": 0}
    complete = True
    probe_cap = max_probes or 50 * max_regions + 1000

    root = sub.root() if sub.d else (np.zeros((0, 0)), np.zeros(0))
    frontier = [(0, root[0], root[1])]
    next_key = 1
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while frontier:
            if stats["probes"] + len(frontier) > probe_cap:
                complete = False
                logger.warning("probe cap reached; database is incomplete")
                break
            jobs = [(seed, key) for key, _, _ in frontier]
            args = [(solver if pool is None else SCEDSolver(case), sub, H, h, jk, perturb_scale)
                    for jk, (_, H, h) in zip(jobs, frontier)]
            if pool is None:
                probes = [_probe(*a) for a in args]
            else:
                probes = list(pool.map(lambda a: _probe(*a), args))
            stats["probes"] += len(probes)

            nxt = []
            for (key, H, h), pr in zip(frontier, probes):
                if pr.retries:
                    stats["degenerate_probes"] += 1
                if pr.kind == "empty":
                    continue
                if pr.kind == "sliver":
                    stats["skipped_slivers"] += 1
                    logger.info("skipping degenerate piece %d after %d retries", key, pr.retries)
                    continue
                if pr.kind == "infeasible":
                    stats["infeasible_cuts"] += 1
                    if pr.cut is None:
                        continue
                    cH, ch = sub.restrict(pr.cut[0][None, :], np.array([pr.cut[1]]))
                    red = _reduce_piece(np.vstack([H, cH]), np.concatenate([h, ch]))
                    if red is not None:
                        nxt.append((next_key, *red))
                        next_key += 1
                    continue

                sig = tuple(sorted(pr.sol.active_set))
                idx = by_sig.get(sig)
                if idx is None:
                    if len(regions) >= max_regions:
                        complete = False
                        continue
                    try:
                        reg = define_region(cf, pr.sens, pr.sol, polytope,
                                            region_id=len(regions),
                                            degenerate=pr.degenerate, _sub=sub)
                    except EmptyInterior as exc:
                        stats["rejected_regions"] += 1
                        logger.info("spurious active set %s: %s", sig, exc)
                        continue
                    region_prices(reg, case.cost, case.emission_rate)
                    idx = by_sig[sig] = len(regions)
                    regions.append(reg)
                reg = regions[idx]
                if sub.d == 0:
                    continue
                RH, Rh = reg.normals[:, sub.free], reg.offsets
                if RH.shape[0] == 0:
                    continue
                for PH, Ph in _subtract(H, h, RH, Rh):
                    nxt.append((next_key, PH, Ph))
                    next_key += 1
            frontier = nxt
            if not complete:
                break
    finally:
        if pool is not None:
            pool.shutdown()

    db = RegionDatabase(regions=regions, polytope=polytope,
                        case_fingerprint=case.fingerprint(), case=case, complete=complete)
    stats["regions_found"] = len(regions)
    stats["degenerate_count"] = (sum(r.degenerate for r in regions)
                                 + stats["skipped_slivers"])
    stats["explored_volume_fraction"] = coverage_fraction(db, coverage_samples, seed)
    db.build_stats = stats
    return db


def coverage_fraction(db: RegionDatabase, samples: int, seed: int = 0) -> float:
    """Monte-Carlo share of the feasible part of the polytope lying in some
    stored region.  Uncovered samples are solved; infeasible ones are not
    counted (needs ``db.case``; without it the whole polytope is used)."""
    if samples <= 0 or not db.polytope.free.any():
        return 1.0 if db.regions else 0.0
    from . import _kernels
    rng = np.random.default_rng([seed, 7919])
    pts = db.polytope.sample(rng, samples)
    normals, offsets, starts = db.stacked()
    solver = SCEDSolver(db.case) if db.case is not None else None
    hit = feasible = 0
    for p in pts:
        if db.regions and _kernels.active.first_containing(normals, offsets, starts, p, 1e-9) >= 0:
            hit += 1
            feasible += 1
            continue
        if solver is not None:
            try:
                solver.solve(p)
            except InfeasibleDispatch:
                continue
        feasible += 1
    return hit / feasible if feasible else 1.0
