"""Command-line interface: ``crplme <command> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench, lme, mpp
from .grid import CaseError, load_case

log = logging.getLogger("crplme")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_AUDIT = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


def parse_vector(text: str, n: int | None = None, what: str = "vector") -> np.ndarray:
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise CliError(f"{what}: expected comma-separated decimals, got {text!r}") from None
    v = np.array(vals)
    if not np.all(np.isfinite(v)):
        raise CliError(f"{what}: entries must be finite")
    if n is not None and v.shape[0] != n:
        raise CliError(f"{what}: expected {n} entries, got {v.shape[0]}")
    return v


def _existing(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} not found: {path}")
    return p


def _load_db(args) -> mpp.RegionDatabase:
    p = _existing(args.db, "database")
    try:
        db = mpp.RegionDatabase.load(p)
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"cannot read database {p}: {exc}") from exc
    if db.case is not None and db.case.fingerprint() != db.case_fingerprint:
        raise CliError("fingerprint mismatch: embedded case does not match the database")
    if getattr(args, "case", None):
        case = _load_case(args.case)
        if case.fingerprint() != db.case_fingerprint:
            raise CliError(f"fingerprint mismatch: database was built from a different case "
                           f"({db.case_fingerprint[:12]} vs {case.fingerprint()[:12]})")
        db.case = case
    return db


def _load_case(path: str):
    p = _existing(path, "case file")
    try:
        return load_case(p)
    except CaseError as exc:
        raise CliError(f"invalid case: {exc}") from exc


def _emit(args, payload, csv_text: str | None = None) -> None:
    text = csv_text if (getattr(args, "format", "json") == "csv" and csv_text is not None) \
        else bench.dump_json(payload)
    if getattr(args, "output", None):
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_build(args) -> int:
    case = _load_case(args.case)
    try:
        poly = case.polytope(args.omega)
    except CaseError as exc:
        raise CliError(str(exc)) from exc
    try:
        db = mpp.enumerate_regions(case, poly, max_regions=args.max_regions, seed=args.seed,
                                   workers=args.workers, coverage_samples=args.coverage_samples)
    except mpp.EnumerationError as exc:
        raise CliError(f"build failed: {exc}", EXIT_INFEASIBLE) from exc
    db.save(args.out)
    s = db.build_stats
    print(f"{s['regions_found']} regions, {s['degenerate_count']} degenerate, "
          f"coverage {s['explored_volume_fraction']:.4f}"
          + ("" if db.complete else " (INCOMPLETE: region cap reached)"))
    print(f"wrote {args.out}")
    return EXIT_OK if db.complete else EXIT_INFEASIBLE


def cmd_query_load(args) -> int:
    db = _load_db(args)
    l = parse_vector(args.load, db.polytope.n, "--load")
    try:
        pair = lme.lme_for_load(db, l, tol=args.tol)
    except lme.LocateError as exc:
        raise CliError(str(exc), EXIT_INFEASIBLE) from exc
    index = lme.build_lmp_index(db, tol=args.lmp_tol)
    _emit(args, pair.to_dict(audit_pass=index.audit_pass))
    return EXIT_OK


def cmd_query_lmp(args) -> int:
    db = _load_db(args)
    a = parse_vector(args.lmp, db.polytope.n, "--lmp")
    index = lme.build_lmp_index(db, tol=args.lmp_tol)
    try:
        beta = lme.lme_for_lmp(index, a)
    except lme.UnknownLmp as exc:
        raise CliError(f"unknown LMP: {exc}") from exc
    except lme.AssumptionViolation as exc:
        raise CliError(f"LMP does not determine a unique LME: {exc}", EXIT_AUDIT) from exc
    entry = index.match(a)
    _emit(args, {"beta": beta.tolist(), "matched_region": entry.region_ids[0],
                 "matched_regions": entry.region_ids, "audit_pass": index.audit_pass})
    return EXIT_OK


def _need_case(db):
    if db.case is None:
        raise CliError("database carries no case; pass --case")
    return db.case


def cmd_benchmark(args) -> int:
    db = _load_db(args)
    _need_case(db)
    if args.samples < 1:
        raise CliError("--samples must be positive")
    tr = bench.run_timing(db, args.samples, seed=args.seed, strict_fd=args.strict_fd)
    _emit(args, tr.summary(), tr.to_csv())
    return EXIT_OK


def cmd_robustness(args) -> int:
    db = _load_db(args)
    _need_case(db)
    if args.samples < 1 or not 0 <= args.perturb < 1:
        raise CliError("need --samples > 0 and 0 <= --perturb < 1")
    rr = bench.run_robustness(db, args.perturb, args.samples, seed=args.seed,
                              tolerance=args.tolerance)
    _emit(args, rr.summary(), rr.to_csv())
    return EXIT_OK


def cmd_audit(args) -> int:
    db = _load_db(args)
    index = lme.build_lmp_index(db, tol=args.lmp_tol)
    col_err = max((float(np.abs(r.G.sum(axis=0) - 1).max(initial=0.0)) for r in db.regions),
                  default=0.0)
    report = index.audit_report()
    report.update({"regions": len(db.regions), "complete": db.complete,
                   "max_column_sum_error": col_err})
    _emit(args, report)
    return EXIT_OK if index.audit_pass else EXIT_AUDIT


def regions_csv(db: mpp.RegionDatabase) -> str:
    n = db.polytope.n
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["region_id", "active_signature", "degenerate", "chebyshev_radius",
                "halfspaces"] + [f"alpha_{j}" for j in range(n)]
               + [f"beta_{j}" for j in range(n)])
    for r in db.regions:
        w.writerow([r.id, " ".join(map(str, r.active_signature)), int(r.degenerate),
                    repr(r.radius), r.normals.shape[0]]
                   + [repr(float(v)) for v in r.alpha] + [repr(float(v)) for v in r.beta])
    return buf.getvalue()


def cmd_export(args) -> int:
    db = _load_db(args)
    payload = [{"id": r.id, "active_signature": list(r.active_signature),
                "degenerate": r.degenerate, "alpha": r.alpha, "beta": r.beta,
                "halfspaces": r.to_dict()["halfspaces"]} for r in db.regions]
    _emit(args, payload, regions_csv(db))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crplme", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, db=True):
        if db:
            p.add_argument("--db", required=True, help="region database (JSON)")
            p.add_argument("--case", help="case file; guards against a stale database")
        p.add_argument("--output", "-o", help="write result here instead of stdout")

    p = sub.add_parser("build", help="enumerate critical regions")
    p.add_argument("--case", required=True)
    p.add_argument("--omega", type=float, help="override the case's operating range")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--max-regions", type=int, default=mpp.DEFAULT_MAX_REGIONS)
    p.add_argument("--coverage-samples", type=int, default=2000)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query-load", help="LMP and LME for a load vector")
    common(p)
    p.add_argument("--load", required=True)
    p.add_argument("--tol", type=float, default=lme.LOCATE_TOL)
    p.add_argument("--lmp-tol", type=float, default=lme.LMP_MATCH_TOL)
    p.set_defaults(func=cmd_query_load)

    p = sub.add_parser("query-lmp", help="LME for a model LMP vector")
    common(p)
    p.add_argument("--lmp", required=True)
    p.add_argument("--lmp-tol", type=float, default=lme.LMP_MATCH_TOL)
    p.set_defaults(func=cmd_query_lmp)

    p = sub.add_parser("benchmark", help="timing comparison of LME methods")
    common(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict-fd", action="store_true",
                   help="re-solve the base point for every bus (2n solves)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("robustness", help="emission estimates under load perturbation")
    common(p)
    p.add_argument("--perturb", type=float, default=0.01)
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=0.005)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("audit", help="check that each LMP maps to one LME")
    common(p)
    p.add_argument("--lmp-tol", type=float, default=lme.LMP_MATCH_TOL)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("export-regions", help="dump regions for plotting")
    common(p)
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
