"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import numpy as np
import pytest

from conftest import built
from crplme import bench, cases, lme, mpp
from crplme.dispatch import SCEDSolver, nodal_prices_from_duals

ORACLE_CASES = ("two-bus", "three-bus-ring", "pjm-5")
ALL_CASES = tuple(cases.CASES)
N_ORACLE = 500


def verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def oracle_samples():
    return {name: bench.interior_samples(built(name), N_ORACLE, seed=11) for name in ORACLE_CASES}


def test_c1_oracle_equivalence(capsys, oracle_samples):
    worst_fd = worst_if = 0.0
    counts = {}
    for name in ORACLE_CASES:
        db = built(name)
        solver = SCEDSolver(db.case)
        samples = oracle_samples[name]
        counts[name] = len(samples)
        for l, rid in samples:
            beta = lme.lme_for_load(db, l).beta
            assert lme.locate(db, l) == rid
            scale = max(1.0, np.abs(beta).max())
            fd = bench.fd_lme(db.case, l, solver=solver)
            iff = bench.if_lme(db.case, l, solver=solver)
            worst_fd = max(worst_fd, np.abs(fd - beta).max() / scale)
            worst_if = max(worst_if, np.abs(iff - beta).max() / scale)
    ok = (all(c == N_ORACLE for c in counts.values())
          and worst_fd <= 1e-4 and worst_if <= 1e-9)
    verdict(capsys, 1, ok, f"samples {counts}; max rel |CRP-FD| {worst_fd:.2e} (<=1e-4), "
                           f"max rel |CRP-IF| {worst_if:.2e} (<=1e-9)")


def test_c2_lmp_cross_check(capsys, oracle_samples):
    worst = 0.0
    total = 0
    for name in ORACLE_CASES:
        db = built(name)
        solver = SCEDSolver(db.case)
        for l, rid in oracle_samples[name]:
            sol = solver.solve(l)
            prices = nodal_prices_from_duals(db.case, sol)
            worst = max(worst, np.abs(prices - db.regions[rid].alpha).max())
            total += 1
    verdict(capsys, 2, worst <= 1e-6,
            f"{total} samples; max |alpha_r - dual prices| {worst:.2e} (<=1e-6)")


def test_c3_partition(capsys):
    lines = []
    ok = True
    for name in ALL_CASES:
        db = built(name)
        rng = np.random.default_rng(5)
        pts = db.polytope.sample(rng, 10_000)
        exactly_one = double_interior = 0
        for l in pts:
            v = np.array([r.violation(l) for r in db.regions])
            exactly_one += int((v <= 1e-9).sum() == 1)
            double_interior += int((v < -1e-9).sum() > 1)
        frac = exactly_one / len(pts)
        cov = mpp.coverage_fraction(db, 10_000, seed=6)
        good = frac >= 0.999 and cov >= 0.995 and double_interior == 0
        ok &= good
        lines.append(f"{name}: one-region {frac:.4f}, coverage {cov:.4f}, "
                     f"double-interior {double_interior}")
    verdict(capsys, 3, ok, "; ".join(lines))


def test_c4_theorem_consistency(capsys):
    exact = True
    audits = {}
    for name in ALL_CASES:
        if name == "lmp-collision":
            continue
        db = built(name)
        index = lme.build_lmp_index(db)
        audits[name] = index.audit_pass
        for r in db.regions:
            exact &= np.array_equal(lme.lme_for_lmp(index, r.alpha), r.beta)
    coll = built("lmp-collision")
    cindex = lme.build_lmp_index(coll)
    raised = None
    try:
        lme.lme_for_lmp(cindex, coll.regions[0].alpha)
    except lme.AssumptionViolation as exc:
        raised = exc
    collision_ok = (not cindex.audit_pass and raised is not None
                    and sorted(raised.region_ids) == [0, 1] and len(raised.betas) == 2)
    ok = all(audits.values()) and exact and collision_ok
    verdict(capsys, 4, ok, f"audits {audits}; Phi(alpha_r) == beta_r exactly: {exact}; "
                           f"collision case audit_pass={cindex.audit_pass}, "
                           f"error raised: {raised is not None}")


def test_c5_negative_lme(capsys):
    db = built("negative-lme")
    neg = [(r.id, int(j)) for r in db.regions for j in np.flatnonzero(r.beta < 0)]
    confirmed = []
    samples = bench.interior_samples(db, 200, seed=3)
    solver = SCEDSolver(db.case)
    for rid, j in neg:
        for l, r in samples:
            if r == rid:
                fd = bench.fd_lme(db.case, l, solver=solver)
                confirmed.append((rid, int(j), float(fd[j])))
                break
    ok = bool(neg) and bool(confirmed) and all(v < 0 for _, _, v in confirmed)
    verdict(capsys, 5, ok, f"negative (region, bus) {neg}; FD values {confirmed}")


def test_c6_ordinal_timing(capsys):
    db = built("ieee14-class")
    tr = bench.run_timing(db, 1000, seed=0, strict_fd=True)
    m = {r.method: r.mean for r in tr.reports}
    sp = tr.speedups["CRP_vs_IF"]
    ok = m["FD"] > m["IF"] > m["CRP"] > m["LMP-lookup"] and sp >= 5.0
    means = ", ".join(f"{k} {v * 1e6:.1f}us" for k, v in m.items())
    verdict(capsys, 6, ok, f"{means}; CRP-vs-IF {sp:.1f}x (>=5), "
                           f"LMP-vs-load {tr.speedups['LMP_vs_load']:.1f}x; "
                           f"FD {tr.report('FD').notes}")


def test_c7_robustness(capsys):
    lines = []
    ok = True
    for name in ("two-bus", "three-bus-ring", "negative-lme", "pjm-5", "ieee14-class"):
        db = built(name)
        rr = bench.run_robustness(db, 0.01, 500, seed=1)
        r0 = db.regions[lme.locate(db, db.polytope.l0)]
        worst = 0.0
        inside = 0
        for rec in rr.records:
            rs = db.regions[rec["region_s"]]
            if rs.contains(rec["l_p"]):
                inside += 1
                worst = max(worst, rec["err_crp"])
            if r0.contains(rec["l_s"]) and r0.contains(rec["l_p"]):
                worst = max(worst, rec["err_frozen"])
        ok &= worst <= 1e-6 and len(rr.records) == 500
        lines.append(f"{name}: frozen {rr.frozen_within:.3f}, region-aware {rr.crp_within:.3f} "
                     f"within 0.5%; single-region samples {inside}, max err {worst:.1e}")
    verdict(capsys, 7, ok, "; ".join(lines))


def test_c8_column_sums(capsys):
    worst = 0.0
    count = 0
    for name in ALL_CASES:
        for r in built(name).regions:
            worst = max(worst, np.abs(r.G.sum(axis=0) - 1.0).max())
            count += 1
    verdict(capsys, 8, worst <= 1e-9, f"{count} regions; max |column sum - 1| {worst:.1e}")


def test_c9_round_trip(capsys, tmp_path):
    ok = True
    for name in ALL_CASES:
        db = built(name)
        a, b = tmp_path / f"{name}-a.json", tmp_path / f"{name}-b.json"
        db.save(a)
        mpp.RegionDatabase.load(a).save(b)
        fresh = mpp.enumerate_regions(cases.CASES[name]()).dumps()
        ok &= a.read_bytes() == b.read_bytes() and fresh.encode() == a.read_bytes()
    threaded = mpp.enumerate_regions(cases.ieee14_class(), workers=3).dumps()
    ok &= threaded == built("ieee14-class").dumps()
    verdict(capsys, 9, ok, f"write-read-write and rebuilds byte-identical for {len(ALL_CASES)} "
                           f"cases (incl. a 3-worker rebuild)")
