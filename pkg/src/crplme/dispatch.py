"""Security-constrained economic dispatch for one load vector."""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from .grid import CompactForm, NetworkCase, build_compact
from .simplex import InfeasibleLP, UnboundedLP, solve_lp

EPS_SLACK = 1e-7   # MW; |A x - b - F l| below this marks a row active
EPS_ACT = 1e-9     # multipliers at or below this are "weakly active"


class InfeasibleDispatch(Exception):
    """No dispatch meets the load.

    ``cut`` is ``(normal, offset)`` such that every load with a feasible
    dispatch satisfies ``normal @ l <= offset`` while the offending load
    violates it.  ``rows`` lists the compact-form line rows in the
    certificate (plus ``"balance"``).
    """

    def __init__(self, message, cut=None, rows=()):
        super().__init__(message)
        self.cut = cut
        self.rows = tuple(rows)


class DegenerateSolution(Exception):
    """Multipliers (hence prices or sensitivities) are not unique here."""

    def __init__(self, message, active_set=()):
        super().__init__(message)
        self.active_set = tuple(active_set)


@dataclass(frozen=True, eq=False)
class DispatchSolution:
    load: np.ndarray
    x: np.ndarray
    objective: float
    emissions: float
    lam: np.ndarray          # one multiplier per compact inequality row, >= 0
    mu: float                # balance multiplier = system marginal cost
    slack: np.ndarray        # A x - b - F l
    active_set: tuple[int, ...]
    degenerate: bool
    primal_degenerate: bool
    dual_degenerate: bool
    iterations: int

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "objective": self.objective,
                "emissions": self.emissions, "lambda": self.lam.tolist(),
                "mu": self.mu, "active_set": list(self.active_set),
                "degenerate": self.degenerate}


class SCEDSolver:
    """Repeated SCED solves for one case; counts solves for cost accounting."""

    def __init__(self, case: NetworkCase, kernels=None):
        self.case = case
        self.compact = build_compact(case)
        self.kernels = kernels
        g = case.g
        self._cost = case.cost
        self._erate = case.emission_rate
        self._cap = case.capacity
        self._A_line = self.compact.A[2 * g:]
        self._b_line = self.compact.b[2 * g:]
        self._F_line = self.compact.F[2 * g:]
        self._ones = np.ones((1, g))
        self.n_solves = 0

    def solve(self, l) -> DispatchSolution:
        case, cf = self.case, self.compact
        l = np.asarray(l, dtype=float)
        if l.shape != (case.n,):
            raise ValueError(f"load must have shape ({case.n},), got {l.shape}")
        g = case.g
        self.n_solves += 1
        b_ub = self._b_line + self._F_line @ l
        total = float(l.sum())
        try:
            res = solve_lp(self._cost, self._A_line, b_ub, self._ones, [total],
                           np.zeros(g), self._cap, kernels=self.kernels)
        except InfeasibleLP as exc:
            cut, rows = None, []
            cert = exc.certificate
            if cert is not None:
                normal = self._F_line.T @ cert.y_ub + cert.y_eq.sum() * np.ones(case.n)
                offset = -(cert.y_ub @ self._b_line + cert.const)
                cut = (normal, float(offset))
                ub_rows, eq_rows = cert.rows
                rows = [2 * g + r for r in ub_rows] + (["balance"] if eq_rows else [])
            raise InfeasibleDispatch("SCED infeasible for this load", cut, rows) from exc
        except UnboundedLP as exc:  # pragma: no cover - bounded feasible set
            raise RuntimeError("internal error: SCED reported unbounded") from exc

        x = res.x
        rc = res.reduced_costs
        lam = np.concatenate([np.maximum(-rc, 0.0), np.maximum(rc, 0.0), res.ineq_duals])
        slack = cf.slack(x, l)
        active = tuple(int(i) for i in np.flatnonzero(slack > -EPS_SLACK))
        return DispatchSolution(
            load=l.copy(), x=x, objective=float(self._cost @ x),
            emissions=float(self._erate @ x), lam=lam, mu=float(res.eq_duals[0]),
            slack=slack, active_set=active,
            degenerate=res.primal_degenerate or res.dual_degenerate,
            primal_degenerate=res.primal_degenerate, dual_degenerate=res.dual_degenerate,
            iterations=res.iterations)


_solvers: "weakref.WeakKeyDictionary[NetworkCase, SCEDSolver]" = weakref.WeakKeyDictionary()


def solver_for(case: NetworkCase) -> SCEDSolver:
    s = _solvers.get(case)
    if s is None:
        s = _solvers[case] = SCEDSolver(case)
    return s


def solve_sced(case: NetworkCase, l) -> DispatchSolution:
    """Least-cost dispatch for load ``l`` with multipliers and active set."""
    return solver_for(case).solve(l)


def nodal_prices_from_duals(case: NetworkCase, sol: DispatchSolution, *,
                            strict: bool = True) -> np.ndarray:
    """Energy price plus PTDF-weighted congestion rents.

    ``price_j = mu - sum_k (lam_up[k] - lam_low[k]) * P[k, j]``.  With
    ``strict`` a degenerate solution raises :class:`DegenerateSolution`
    because its multipliers are not unique.
    """
    if strict and sol.degenerate:
        raise DegenerateSolution("prices are non-unique at a degenerate solution",
                                 sol.active_set)
    g, m = case.g, case.m
    lam_up = sol.lam[2 * g:2 * g + m]
    lam_low = sol.lam[2 * g + m:]
    return sol.mu - case.ptdf.T @ (lam_up - lam_low)


def compact_for(case: NetworkCase) -> CompactForm:
    return solver_for(case).compact
