import numpy as np
import pytest

from crplme import cases
from crplme.dispatch import (EPS_ACT, EPS_SLACK, DegenerateSolution, InfeasibleDispatch,
                             SCEDSolver, nodal_prices_from_duals, solve_sced)
from crplme.grid import parse_case


def test_two_bus_uncongested(two_bus_case):
    sol = solve_sced(two_bus_case, [0.0, 20.0])
    assert np.allclose(sol.x, [20.0, 0.0])
    assert sol.objective == pytest.approx(200.0)
    assert sol.emissions == pytest.approx(20000.0)
    assert 4 not in sol.active_set                    # line-upper slack
    assert np.allclose(nodal_prices_from_duals(two_bus_case, sol), [10.0, 10.0])


def test_two_bus_congested(two_bus_case):
    sol = solve_sced(two_bus_case, [0.0, 40.0])
    assert np.allclose(sol.x, [30.0, 10.0])
    assert sol.objective == pytest.approx(800.0)
    assert 4 in sol.active_set
    assert sol.mu == pytest.approx(50.0)
    assert np.allclose(nodal_prices_from_duals(two_bus_case, sol), [10.0, 50.0])


def test_zero_load(two_bus_case):
    sol = solve_sced(two_bus_case, [0.0, 0.0])
    assert np.allclose(sol.x, 0) and sol.objective == 0 and sol.emissions == 0
    assert sol.degenerate


def test_unlimited_lines_give_uniform_prices():
    d = cases.two_bus_dict()
    d["lines"][0]["limit"] = 1e9
    c = parse_case(d)
    sol = solve_sced(c, [0.0, 150.0])
    p = nodal_prices_from_duals(c, sol)
    assert np.allclose(p, sol.mu)


def test_degenerate_prices_flagged(two_bus_case):
    # load exactly at the congestion threshold: line binds with zero multiplier
    sol = solve_sced(two_bus_case, [0.0, 30.0])
    assert sol.degenerate
    with pytest.raises(DegenerateSolution):
        nodal_prices_from_duals(two_bus_case, sol)
    nodal_prices_from_duals(two_bus_case, sol, strict=False)


def test_infeasible_reports_cut(two_bus_case):
    solver = SCEDSolver(two_bus_case)
    l = np.array([0.0, 150.0])      # G2 (100) + line (30) < 150
    with pytest.raises(InfeasibleDispatch) as ei:
        solver.solve(l)
    normal, offset = ei.value.cut
    assert normal @ l > offset + 1e-9
    for ok in ([0.0, 20.0], [0.0, 100.0], [0.0, 130.0]):
        solver.solve(ok)
        assert normal @ np.array(ok) <= offset + 1e-7


@pytest.mark.parametrize("name", ["three-bus-ring", "pjm-5", "ieee14-class"])
def test_solution_invariants(name):
    c = cases.CASES[name]()
    solver = SCEDSolver(c)
    cf = solver.compact
    rng = np.random.default_rng(4)
    poly = c.polytope()
    for l in poly.sample(rng, 60):
        s = solver.solve(l)
        assert np.all(cf.slack(s.x, l) <= 1e-9)
        assert abs(s.x.sum() - l.sum()) <= 1e-8 * max(1.0, l.sum())
        assert s.objective == c.cost @ s.x and s.emissions == c.emission_rate @ s.x
        assert np.all(s.lam >= 0)
        # complementary slackness
        assert np.all(s.slack[s.lam > EPS_ACT] > -EPS_SLACK)
        # stationarity c + A^T lam - mu 1 = 0
        assert np.allclose(c.cost + cf.A.T @ s.lam - s.mu, 0, atol=1e-8)
        # strong duality
        dual = s.mu * l.sum() - s.lam @ (cf.b + cf.F @ l)
        assert dual == pytest.approx(s.objective, rel=1e-8)


def test_bitwise_determinism():
    c = cases.five_bus_pjm()
    l = c.nominal_load * 1.03
    a, b = SCEDSolver(c).solve(l), SCEDSolver(c).solve(l)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.lam, b.lam)
    assert a.active_set == b.active_set


def test_solve_counter(two_bus_case):
    s = SCEDSolver(two_bus_case)
    s.solve([0, 10]); s.solve([0, 20])
    assert s.n_solves == 2


def test_wrong_shape(two_bus_case):
    with pytest.raises(ValueError):
        solve_sced(two_bus_case, [1.0, 2.0, 3.0])
