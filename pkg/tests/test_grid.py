import json

import numpy as np
import pytest

from crplme import cases
from crplme.grid import (CaseError, LoadPolytope, build_compact, compute_ptdf, load_case,
                         parse_case, Line)


def ring_lines(x=0.1):
    return [Line(0, 1, 100, -100, x), Line(1, 2, 100, -100, x), Line(0, 2, 100, -100, x)]


def test_two_bus_parses():
    c = cases.two_bus()
    assert (c.n, c.g, c.m) == (2, 2, 1)
    assert np.array_equal(c.ptdf, [[1.0, 0.0]])
    assert np.array_equal(c.gen_map, np.eye(2))


def test_two_bus_ptdf_from_reactance():
    P = compute_ptdf([Line(0, 1, 30, -30, 0.37)], 2, 1)
    assert np.array_equal(P, [[1.0, 0.0]])


def test_three_bus_ring_ptdf_by_hand():
    # two parallel paths with impedance ratio 1:2 split injections 2/3 : 1/3
    P = compute_ptdf(ring_lines(), 3, 2)
    expected = np.array([[1 / 3, -1 / 3, 0.0],
                         [1 / 3, 2 / 3, 0.0],
                         [2 / 3, 1 / 3, 0.0]])
    assert np.allclose(P, expected, atol=1e-12)
    assert np.all(P[:, 2] == 0.0)


def test_ring_ptdf_mirror_symmetry():
    P = compute_ptdf(ring_lines(), 3, 2)
    # swapping buses 0 and 1 maps line 0-1 to its reverse and 1-2 to 0-2
    assert np.isclose(P[0, 0], -P[0, 1])
    assert np.isclose(P[1, 1], P[2, 0])
    assert np.isclose(P[1, 0], P[2, 1])


def test_ptdf_matches_direct_power_flow():
    c = cases.ieee14_class()
    rng = np.random.default_rng(0)
    inj = rng.normal(size=c.n)
    inj -= inj.sum() / c.n
    inc = np.zeros((c.m, c.n))
    b = np.array([1 / ln.reactance for ln in c.lines])
    for k, ln in enumerate(c.lines):
        inc[k, ln.from_bus], inc[k, ln.to_bus] = 1, -1
    Bbus = inc.T @ (b[:, None] * inc)
    keep = [j for j in range(c.n) if j != c.reference_bus]
    theta = np.zeros(c.n)
    theta[keep] = np.linalg.solve(Bbus[np.ix_(keep, keep)], inj[keep])
    flows = b * (inc @ theta)
    assert np.allclose(c.ptdf @ inj, flows, atol=1e-9)


def test_compact_form_layout():
    c = cases.two_bus()
    cf = build_compact(c)
    assert cf.p == 6
    assert np.array_equal(cf.A[2:4], -np.eye(2))
    assert np.array_equal(cf.b[2:4], [0, 0])
    assert np.all(cf.F[:4] == 0)
    assert np.array_equal(cf.A[4], [1.0, 0.0])
    assert cf.b[4] == 30.0
    assert np.array_equal(cf.F[4], [1.0, 0.0])
    assert cf.row_labels == ("gen-upper",) * 2 + ("gen-lower",) * 2 + ("line-upper", "line-lower")
    assert cf.row_name(5) == "line-lower[0]"


@pytest.mark.parametrize("name", list(cases.CASES))
def test_compact_form_reproduces_constraints(name):
    c = cases.CASES[name]()
    cf = build_compact(c)
    rng = np.random.default_rng(1)
    for _ in range(300):
        l = rng.uniform(0, 60, c.n)
        x = rng.uniform(-5, c.capacity + 5)
        flow = c.ptdf @ (c.gen_map @ x - l)
        direct = (np.all(x >= 0) and np.all(x <= c.capacity)
                  and np.all(flow <= c.flow_upper) and np.all(flow >= c.flow_lower))
        assert direct == bool(np.all(cf.A @ x <= cf.b + cf.F @ l + 1e-12))


def test_polytope_box_and_sampling():
    poly = LoadPolytope(np.array([0.0, 10.0, 20.0]), 0.5)
    assert np.array_equal(poly.free, [False, True, True])
    pts = poly.sample(np.random.default_rng(0), 200)
    assert all(poly.contains(p) for p in pts)
    assert not poly.contains([0, 16, 20])
    again = LoadPolytope.from_dict(json.loads(json.dumps(poly.to_dict())))
    assert np.array_equal(again.l0, poly.l0) and again.omega == poly.omega


@pytest.mark.parametrize("omega", [-0.1, 1.0, 1.5])
def test_polytope_rejects_bad_omega(omega):
    with pytest.raises(CaseError):
        LoadPolytope(np.ones(2), omega)


def base_doc():
    return json.loads(json.dumps(cases.two_bus_dict()))


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d["generators"][0].update(bus=99), "$.generators[0].bus"),
    (lambda d: d["generators"][1].update(capacity=0.0), "$.generators[1].capacity"),
    (lambda d: d.update(reference_bus=5), "$.reference_bus"),
    (lambda d: d["lines"][0].update(to=0), "$.lines[0]"),
    (lambda d: d.update(ptdf=[[1.0, 0.5]]), "$.ptdf"),
    (lambda d: d.update(nominal_load=[0.0, "x"]), "$.nominal_load[1]"),
    (lambda d: d["generators"][0].pop("emission_rate"), "$.generators[0].emission_rate"),
    (lambda d: d.update(omega=1.2), "$.omega"),
])
def test_validation_errors_name_the_field(mutate, path):
    d = base_doc()
    mutate(d)
    with pytest.raises(CaseError) as ei:
        parse_case(d)
    assert ei.value.path == path


def test_bus_out_of_range_message():
    d = json.loads(json.dumps(cases.ieee14_class().to_dict()))
    d["generators"][0]["bus"] = 99
    with pytest.raises(CaseError, match="bus index out of range"):
        parse_case(d)


def test_disconnected_network_rejected():
    d = {"buses": 3, "reference_bus": 0,
         "generators": [{"bus": 0, "cost": 1, "emission_rate": 1, "capacity": 10}],
         "lines": [{"from": 0, "to": 1, "limit": 5, "reactance": 0.1}]}
    with pytest.raises(CaseError, match="disconnected"):
        parse_case(d)


def test_nan_rejected():
    text = json.dumps(cases.two_bus_dict()).replace("32.0", "NaN")
    with pytest.raises(CaseError):
        parse_case(text)


def test_ptdf_and_reactance_must_agree():
    d = base_doc()
    d["lines"][0]["reactance"] = 0.1
    assert parse_case(d).m == 1          # [1, 0] agrees
    d["ptdf"] = [[0.9, 0.0]]
    with pytest.raises(CaseError, match="disagrees"):
        parse_case(d)


def test_fuel_tags_default_emission_rates():
    c = cases.ieee14_class()
    assert c.g == 5
    assert list(c.emission_rate) == [1000.0, 469.0, 12.0, 46.0, 469.0]


def test_asymmetric_line_limits():
    d = base_doc()
    d["lines"][0]["lower_limit"] = -5.0
    c = parse_case(d)
    assert c.flow_lower[0] == -5.0 and c.flow_upper[0] == 30.0
    d["lines"][0]["lower_limit"] = 3.0
    with pytest.raises(CaseError):
        parse_case(d)


def test_case_file_round_trip(tmp_path):
    for name, make in cases.CASES.items():
        c = make()
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(c.to_dict()))
        c2 = load_case(p)
        assert c2.fingerprint() == c.fingerprint()
        assert np.array_equal(c2.ptdf, c.ptdf)


def test_fingerprint_changes_with_content():
    d = base_doc()
    a = parse_case(d).fingerprint()
    d["generators"][0]["cost"] = 11.0
    assert parse_case(d).fingerprint() != a
