import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import built
from crplme import _kernels, cases, lme, mpp
from crplme.grid import parse_case


def test_region_prices_two_bus(db_two_bus):
    got = {tuple(r.alpha.round(9)): tuple(r.beta) for r in db_two_bus.regions}
    assert got == {(10.0, 50.0): (1000.0, 12.0), (10.0, 10.0): (1000.0, 1000.0)}


def test_equal_cost_and_emission_vectors_give_equal_prices():
    d = cases.two_bus_dict()
    for gen in d["generators"]:
        gen["emission_rate"] = gen["cost"]
    db = mpp.enumerate_regions(parse_case(d))
    for r in db.regions:
        assert np.array_equal(r.alpha, r.beta)


@pytest.mark.parametrize("l, alpha, beta", [
    ([0.0, 20.0], [10, 10], [1000, 1000]),
    ([0.0, 40.0], [10, 50], [1000, 12]),
])
def test_lme_for_load(db_two_bus, l, alpha, beta):
    pair = lme.lme_for_load(db_two_bus, l)
    assert np.allclose(pair.alpha, alpha) and np.allclose(pair.beta, beta)
    out = json.loads(json.dumps(pair.to_dict(audit_pass=True)))
    assert set(out) == {"region_id", "alpha", "beta", "audit_pass"}


def test_same_region_same_pair(db_two_bus):
    a = lme.lme_for_load(db_two_bus, [0.0, 35.0])
    b = lme.lme_for_load(db_two_bus, [0.0, 45.0])
    assert a.region_id == b.region_id and np.array_equal(a.beta, b.beta)


def test_facet_tie_goes_to_lowest_id(db_two_bus):
    assert lme.locate(db_two_bus, [0.0, 30.0]) == 0


def test_locate_outside_polytope(db_two_bus):
    with pytest.raises(lme.LocateError) as ei:
        lme.locate(db_two_bus, [0.0, 60.0])
    assert ei.value.outside_polytope


def test_locate_gap_reports_nearest():
    db = built("two-bus")
    partial = mpp.RegionDatabase(db.regions[:1], db.polytope, db.case_fingerprint, db.case)
    with pytest.raises(lme.LocateError) as ei:
        lme.locate(partial, [0.0, 20.0])
    rid, viol = ei.value.nearest[0]
    assert rid == 0 and viol == pytest.approx(10.0)


@pytest.mark.parametrize("name", ["pjm-5", "ieee14-class", "three-bus-ring"])
def test_locate_matches_brute_force(name):
    db = built(name)
    rng = np.random.default_rng(2)
    for l in db.polytope.sample(rng, 1000):
        v = np.array([r.violation(l) for r in db.regions])
        expected = int(np.flatnonzero(v <= 1e-9)[0])
        assert lme.locate(db, l) == expected
        assert expected == int(np.argmin(v)) or v[int(np.argmin(v))] <= 1e-9


def test_index_two_bus(db_two_bus):
    idx = lme.build_lmp_index(db_two_bus)
    assert len(idx.entries) == 2 and idx.audit_pass
    assert np.allclose(lme.lme_for_lmp(idx, [10, 50]), [1000, 12])
    assert np.allclose(lme.lme_for_lmp(idx, [10, 10]), [1000, 1000])
    assert np.allclose(lme.lme_for_lmp(idx, [10 + 5e-7, 50 - 5e-7]), [1000, 12])
    with pytest.raises(lme.UnknownLmp):
        lme.lme_for_lmp(idx, [999, 999])


def test_duplicate_alpha_equal_beta_merges(db_two_bus):
    twin = mpp.CriticalRegion.from_dict(db_two_bus.regions[1].to_dict(), 2)
    twin.id = 2
    db = mpp.RegionDatabase(db_two_bus.regions + [twin], db_two_bus.polytope,
                            db_two_bus.case_fingerprint)
    idx = lme.build_lmp_index(db)
    assert len(idx.entries) == 2 and idx.audit_pass
    assert sorted(idx.entries[1].region_ids) == [1, 2]


def test_collision_fails_audit():
    db = built("lmp-collision")
    idx = lme.build_lmp_index(db)
    assert not idx.audit_pass
    assert len(idx.collisions) == 1
    with pytest.raises(lme.AssumptionViolation) as ei:
        lme.lme_for_lmp(idx, [10, 10])
    assert sorted(ei.value.region_ids) == [0, 1]
    assert {tuple(b) for b in ei.value.betas} == {(1000.0, 1000.0), (469.0, 469.0)}
    # verified by brute force: the two regions really share alpha and differ in beta
    a, b = db.regions
    assert np.allclose(a.alpha, b.alpha) and not np.allclose(a.beta, b.beta)


def test_uncongested_single_marginal_unit_has_flat_lme():
    for name in ("two-bus", "three-bus-ring", "ieee14-class"):
        db = built(name)
        e = db.case.emission_rate
        for r in db.regions:
            if np.ptp(r.alpha) < 1e-9 and not r.degenerate:
                marginal = np.flatnonzero(np.abs(r.G).sum(axis=1) > 1e-9)
                assert len(marginal) == 1
                assert np.allclose(r.beta, e[marginal[0]])


def test_negative_lme_present():
    db = built("negative-lme")
    assert min(r.beta.min() for r in db.regions) == pytest.approx(-976.0)


def test_kernel_backends_locate_identically():
    if _kernels.numba_kernels is None:
        pytest.skip("numba unavailable")
    db = built("ieee14-class")
    for l in db.polytope.sample(np.random.default_rng(8), 300):
        assert (lme.locate(db, l, kernels=_kernels.numpy_kernels)
                == lme.locate(db, l, kernels=_kernels.numba_kernels))


@settings(max_examples=50, deadline=None)
@given(st.floats(16.0, 48.0))
def test_load_and_lmp_queries_agree(l2):
    db = built("two-bus")
    idx = lme.build_lmp_index(db)
    pair = lme.lme_for_load(db, [0.0, l2])
    assert np.array_equal(lme.lme_for_lmp(idx, pair.alpha), pair.beta)
