"""Baseline LME methods (finite difference, implicit function) and the
timing / robustness experiments comparing them with region lookup."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .dispatch import DegenerateSolution, InfeasibleDispatch, SCEDSolver
from .grid import NetworkCase
from .lme import (LmpIndex, build_lmp_index, lme_for_lmp, lme_for_load, locate)
from .mpp import RegionDatabase, policy_margin, sensitivity_at, weak_rows

logger = logging.getLogger(__name__)

WARMUP = 10
AGREEMENT_RTOL = 1e-4
METHODS = ("FD", "IF", "CRP", "LMP-lookup")


def _fd_steps(l, delta):
    if delta is None:
        return 1e-4 * np.maximum(1.0, np.abs(l))
    return np.broadcast_to(np.asarray(delta, dtype=float), l.shape).copy()


def fd_lme(case: NetworkCase, l, delta=None, *, central: bool = False, strict: bool = False,
           solver: SCEDSolver | None = None, errors: dict | None = None) -> np.ndarray:
    """Finite-difference LME ``(E(l + d e_j) - E(l)) / d`` per bus.

    By default ``E(l)`` is solved once and reused (n + 1 solves); ``strict``
    re-solves it for every bus (2n solves).  ``central`` uses
    ``(E(l + d e_j) - E(l - d e_j)) / 2d``.  Buses whose perturbed problem is
    infeasible get NaN, and the reason is put into ``errors[j]`` when given.
    """
    solver = solver or SCEDSolver(case)
    l = np.asarray(l, dtype=float)
    n = l.shape[0]
    steps = _fd_steps(l, delta)
    beta = np.full(n, np.nan)
    base = None
    if not central and not strict:
        base = solver.solve(l).emissions
    for j in range(n):
        up = l.copy()
        up[j] += steps[j]
        try:
            e_up = solver.solve(up).emissions
            if central:
                dn = l.copy()
                dn[j] -= steps[j]
                beta[j] = (e_up - solver.solve(dn).emissions) / (2 * steps[j])
            else:
                e0 = base if base is not None else solver.solve(l).emissions
                beta[j] = (e_up - e0) / steps[j]
        except InfeasibleDispatch as exc:
            if errors is not None:
                errors[j] = str(exc)
    return beta


def if_lme(case: NetworkCase, l, *, solver: SCEDSolver | None = None) -> np.ndarray:
    """LME from the KKT sensitivity at this one load (no region built)."""
    solver = solver or SCEDSolver(case)
    sol = solver.solve(np.asarray(l, dtype=float))
    if weak_rows(sol):
        raise DegenerateSolution("degenerate dispatch at this load; perturb the load "
                                 "slightly and retry", sol.active_set)
    sens = sensitivity_at(solver.compact, sol, check=False)
    return case.emission_rate @ sens.G


@dataclass
class BenchReport:
    method: str
    per_sample_times: list[float]
    lme_results: list[np.ndarray]
    mismatch_count: int = 0
    reference: str | None = None
    notes: str = ""

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_sample_times)) if self.per_sample_times else math.nan

    @property
    def stddev(self) -> float:
        return float(np.std(self.per_sample_times)) if self.per_sample_times else math.nan

    def summary(self) -> dict[str, Any]:
        return {"method": self.method, "samples": len(self.per_sample_times),
                "mean_s": self.mean, "stddev_s": self.stddev,
                "mismatch_count": self.mismatch_count, "reference": self.reference,
                "notes": self.notes}


@dataclass
class TimingResult:
    reports: list[BenchReport]
    samples: np.ndarray
    seed: int
    strict_fd: bool

    def report(self, method: str) -> BenchReport:
        return next(r for r in self.reports if r.method == method)

    @property
    def speedups(self) -> dict[str, float]:
        m = {r.method: r.mean for r in self.reports}
        return {"CRP_vs_IF": m["IF"] / m["CRP"], "LMP_vs_load": m["CRP"] / m["LMP-lookup"],
                "CRP_vs_FD": m["FD"] / m["CRP"]}

    def summary(self) -> dict[str, Any]:
        return {"seed": self.seed, "samples": int(self.samples.shape[0]),
                "strict_fd": self.strict_fd,
                "fd_solves_per_sample": self.report("FD").notes,
                "methods": [r.summary() for r in self.reports], "speedups": self.speedups}

    def to_csv(self) -> str:
        return reports_to_csv(self.reports)


def reports_to_csv(reports: list[BenchReport]) -> str:
    n = max((len(v) for r in reports for v in r.lme_results), default=0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "method", "time_s"] + [f"beta_{j}" for j in range(n)])
    for r in reports:
        for i, (t, b) in enumerate(zip(r.per_sample_times, r.lme_results)):
            w.writerow([i, r.method, repr(float(t))] + [repr(float(v)) for v in b])
    return buf.getvalue()


def _time_each(fn: Callable, samples, warmup: int) -> tuple[list[float], list[np.ndarray]]:
    for l in samples[:warmup]:
        fn(l)
    times, out = [], []
    clock = time.perf_counter
    for l in samples:
        t0 = clock()
        b = fn(l)
        times.append(clock() - t0)
        out.append(np.asarray(b, dtype=float))
    return times, out


def _rel_mismatch(a, b, rtol=AGREEMENT_RTOL) -> bool:
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    return not (np.all(np.isfinite(a)) and np.abs(a - b).max(initial=0.0) <= rtol * scale)


def sample_loads(db: RegionDatabase, n_samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 1])
    return db.polytope.sample(rng, n_samples)


def interior_samples(db: RegionDatabase, count: int, *, seed: int = 0, margin: float = 1e-6,
                     delta=None, max_draws: int | None = None) -> list[tuple[np.ndarray, int]]:
    """Uniform polytope samples usable for oracle comparisons.

    A sample is kept when it lies in a nondegenerate region and the region's
    affine policy stays strictly feasible (by ``margin`` MW) at the sample and
    at every forward finite-difference point, so FD never straddles a
    boundary.  Returns ``(load, region_id)`` pairs.
    """
    case = db.case
    if case is None:
        raise ValueError("database carries no case")
    from .dispatch import compact_for
    cf = compact_for(case)
    rng = np.random.default_rng([seed, 3])
    out: list[tuple[np.ndarray, int]] = []
    budget = max_draws or 50 * count
    drawn = 0
    while len(out) < count and drawn < budget:
        batch = db.polytope.sample(rng, min(256, budget - drawn))
        drawn += batch.shape[0]
        for l in batch:
            try:
                rid = locate(db, l)
            except LookupError:
                continue
            reg = db.regions[rid]
            if reg.degenerate or (reg.normals.shape[0] and reg.violation(l) > -margin):
                continue
            steps = _fd_steps(l, delta)
            pts = [l] + [l + steps[j] * np.eye(l.shape[0])[j] for j in range(l.shape[0])]
            if max(policy_margin(cf, reg, p) for p in pts) > -margin:
                continue
            out.append((l, rid))
            if len(out) == count:
                break
    return out


def run_timing(db: RegionDatabase, n_samples: int = 1000, *, seed: int = 0,
               strict_fd: bool = False, warmup: int = WARMUP,
               index: LmpIndex | None = None,
               case: NetworkCase | None = None) -> TimingResult:
    """Time FD, IF, region lookup by load and by LMP on one shared sample set.

    The LMP queries are the model LMPs of the samples, prepared untimed.
    Mismatches are counted against the load-lookup results.
    """
    case = case or db.case
    if case is None:
        raise ValueError("database carries no case; pass one explicitly")
    samples = sample_loads(db, n_samples, seed)
    solver = SCEDSolver(case)
    index = index or build_lmp_index(db)
    warmup = min(warmup, len(samples))

    def crp(l):
        return lme_for_load(db, l).beta

    alphas = {i: db.regions[locate(db, l)].alpha for i, l in enumerate(samples)}
    lmp_queries = [alphas[i] for i in range(len(samples))]

    def fd(l):
        return fd_lme(case, l, strict=strict_fd, solver=solver)

    def iff(l):
        try:
            return if_lme(case, l, solver=solver)
        except DegenerateSolution:
            return np.full(case.n, np.nan)

    def lmp(a):
        try:
            return lme_for_lmp(index, a)
        except Exception:  # collision or unknown: recorded as a mismatch
            return np.full(case.n, np.nan)

    t, crp_out = _time_each(crp, samples, warmup)
    crp_rep = BenchReport("CRP", t, crp_out)
    n0 = solver.n_solves
    t, fd_out = _time_each(fd, samples, 0)
    per = (solver.n_solves - n0) / max(1, len(samples))
    fd_rep = BenchReport("FD", t, fd_out, reference="CRP",
                         notes=f"{per:g} SCED solves per sample "
                               f"({'strict' if strict_fd else 'base solve reused'})")
    t, if_out = _time_each(iff, samples, warmup)
    if_rep = BenchReport("IF", t, if_out, reference="CRP")
    t, lmp_out = _time_each(lmp, lmp_queries, warmup)
    lmp_rep = BenchReport("LMP-lookup", t, lmp_out, reference="CRP")
    for rep in (fd_rep, if_rep, lmp_rep):
        rep.mismatch_count = sum(_rel_mismatch(a, b) for a, b in zip(rep.lme_results, crp_out))
    reports = [fd_rep, if_rep, crp_rep, lmp_rep]
    return TimingResult(reports, samples, seed, strict_fd)


@dataclass
class RobustnessResult:
    perturbation: float
    tolerance: float
    records: list[dict[str, Any]] = field(default_factory=list)

    def _frac(self, key: str) -> float:
        if not self.records:
            return math.nan
        return sum(r[key] < self.tolerance for r in self.records) / len(self.records)

    @property
    def frozen_within(self) -> float:
        return self._frac("err_frozen")

    @property
    def crp_within(self) -> float:
        return self._frac("err_crp")

    def summary(self) -> dict[str, Any]:
        cross = [r for r in self.records if r["crossed"]]
        return {"perturbation": self.perturbation, "tolerance": self.tolerance,
                "samples": len(self.records),
                "frozen_beta_within_tol": self.frozen_within,
                "region_beta_within_tol": self.crp_within,
                "boundary_crossings": len(cross),
                "max_err_frozen": max((r["err_frozen"] for r in self.records), default=math.nan),
                "max_err_crp": max((r["err_crp"] for r in self.records), default=math.nan)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        keys = ["sample_id", "region_s", "region_p", "true", "est_frozen", "est_crp",
                "err_frozen", "err_crp", "crossed"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys)
        for r in self.records:
            w.writerow([r[k] if not isinstance(r[k], float) else repr(r[k]) for k in keys])
        return buf.getvalue()


def run_robustness(db: RegionDatabase, perturbation: float = 0.01, n_samples: int = 500, *,
                   seed: int = 0, tolerance: float = 0.005,
                   case: NetworkCase | None = None) -> RobustnessResult:
    """Estimate emissions after a random relative load perturbation.

    For a base sample ``l_s`` and ``l_p = l_s * (1 + d)`` with
    ``d_j ~ U[-perturbation, perturbation]``, both estimates are
    ``E(l_s) + beta @ (l_p - l_s)``: the frozen one uses the LME at the
    nominal load for every sample, the region-aware one uses the LME of the
    region containing ``l_s``.  Truth is a fresh dispatch at ``l_p``.
    """
    case = case or db.case
    if case is None:
        raise ValueError("database carries no case; pass one explicitly")
    solver = SCEDSolver(case)
    poly = db.polytope
    rng = np.random.default_rng([seed, 2])
    l0 = poly.l0
    r0 = locate(db, l0)
    beta0 = db.regions[r0].beta
    res = RobustnessResult(perturbation, tolerance)
    base = poly.sample(rng, n_samples)
    for i, ls in enumerate(base):
        d = rng.uniform(-perturbation, perturbation, size=poly.n)
        lp = ls * (1.0 + d)
        try:
            e_s = solver.solve(ls).emissions
            e_p = solver.solve(lp).emissions
        except InfeasibleDispatch:
            continue
        rs = locate(db, ls)
        try:
            rp = locate(db, lp)
        except LookupError:
            rp = -1      # perturbed load left the polytope
        step = lp - ls
        est_f = e_s + beta0 @ step
        est_c = e_s + db.regions[rs].beta @ step
        denom = max(abs(e_p), 1e-12)
        res.records.append({
            "sample_id": i, "region_s": rs, "region_p": rp, "region_0": r0,
            "true": float(e_p), "est_frozen": float(est_f), "est_crp": float(est_c),
            "err_frozen": float(abs(est_f - e_p) / denom),
            "err_crp": float(abs(est_c - e_p) / denom),
            "crossed": bool(rp != rs),
            "l_s": ls, "l_p": lp,
        })
    return res


def dump_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)
