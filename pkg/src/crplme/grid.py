"""Grid cases, PTDF construction and the parametric (compact) SCED form."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

# kgCO2/MW by technology tag
FUEL_EMISSION_RATES = {"coal": 1000.0, "ng": 469.0, "wind": 12.0, "solar": 46.0}
_FUEL_ALIASES = {"gas": "ng", "natural_gas": "ng", "naturalgas": "ng"}

PTDF_AGREEMENT_TOL = 1e-6
PTDF_ROUNDOFF = 1e-12    # smaller PTDF entries are treated as exact zeros

ROW_GEN_UPPER = "gen-upper"
ROW_GEN_LOWER = "gen-lower"
ROW_LINE_UPPER = "line-upper"
ROW_LINE_LOWER = "line-lower"


class CaseError(ValueError):
    """Invalid case content.  ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class Generator:
    bus: int
    cost: float
    emission_rate: float
    capacity: float
    name: str | None = None
    fuel: str | None = None


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    flow_upper: float
    flow_lower: float
    reactance: float | None = None


@dataclass(frozen=True, eq=False)
class NetworkCase:
    n: int
    reference_bus: int
    generators: tuple[Generator, ...]
    lines: tuple[Line, ...]
    ptdf: np.ndarray
    nominal_load: np.ndarray | None = None
    omega: float | None = None
    name: str | None = None

    @property
    def g(self) -> int:
        return len(self.generators)

    @property
    def m(self) -> int:
        return len(self.lines)

    @property
    def cost(self) -> np.ndarray:
        return np.array([gen.cost for gen in self.generators], dtype=float)

    @property
    def emission_rate(self) -> np.ndarray:
        return np.array([gen.emission_rate for gen in self.generators], dtype=float)

    @property
    def capacity(self) -> np.ndarray:
        return np.array([gen.capacity for gen in self.generators], dtype=float)

    @property
    def flow_upper(self) -> np.ndarray:
        return np.array([ln.flow_upper for ln in self.lines], dtype=float)

    @property
    def flow_lower(self) -> np.ndarray:
        return np.array([ln.flow_lower for ln in self.lines], dtype=float)

    @property
    def gen_map(self) -> np.ndarray:
        B = np.zeros((self.n, self.g))
        for i, gen in enumerate(self.generators):
            B[gen.bus, i] = 1.0
        return B

    def polytope(self, omega: float | None = None) -> "LoadPolytope":
        if self.nominal_load is None:
            raise CaseError("nominal_load", "case has no nominal load")
        w = self.omega if omega is None else omega
        if w is None:
            raise CaseError("omega", "no operating range given")
        return LoadPolytope(self.nominal_load, float(w))

    def to_dict(self) -> dict[str, Any]:
        gens = []
        for gen in self.generators:
            d: dict[str, Any] = {"bus": gen.bus, "cost": gen.cost,
                                 "emission_rate": gen.emission_rate,
                                 "capacity": gen.capacity}
            if gen.name is not None:
                d["name"] = gen.name
            if gen.fuel is not None:
                d["fuel"] = gen.fuel
            gens.append(d)
        lines = []
        for ln in self.lines:
            d = {"from": ln.from_bus, "to": ln.to_bus, "limit": ln.flow_upper,
                 "lower_limit": ln.flow_lower}
            if ln.reactance is not None:
                d["reactance"] = ln.reactance
            lines.append(d)
        out: dict[str, Any] = {"buses": self.n, "reference_bus": self.reference_bus,
                               "generators": gens, "lines": lines}
        if all(ln.reactance is None for ln in self.lines):
            out["ptdf"] = self.ptdf.tolist()
        if self.nominal_load is not None:
            out["nominal_load"] = [float(v) for v in self.nominal_load]
        if self.omega is not None:
            out["omega"] = self.omega
        if self.name is not None:
            out["name"] = self.name
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class LoadPolytope:
    """Box ``(1-omega) l0 <= l <= (1+omega) l0`` plus optional halfspaces
    ``normal @ l <= offset``."""

    l0: np.ndarray
    omega: float
    extra_halfspaces: tuple[tuple[np.ndarray, float], ...] = field(default=())

    def __post_init__(self):
        l0 = np.asarray(self.l0, dtype=float)
        object.__setattr__(self, "l0", l0)
        if not (0.0 <= self.omega < 1.0):
            raise CaseError("omega", f"must satisfy 0 <= omega < 1, got {self.omega}")
        if np.any(l0 < 0) or not np.all(np.isfinite(l0)):
            raise CaseError("nominal_load", "entries must be finite and >= 0")
        hs = tuple((np.asarray(a, dtype=float), float(b)) for a, b in self.extra_halfspaces)
        for a, _ in hs:
            if a.shape != l0.shape:
                raise CaseError("extra_halfspaces", "normal length must equal bus count")
        object.__setattr__(self, "extra_halfspaces", hs)

    @property
    def n(self) -> int:
        return self.l0.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return (1.0 - self.omega) * self.l0

    @property
    def upper(self) -> np.ndarray:
        return (1.0 + self.omega) * self.l0

    @property
    def free(self) -> np.ndarray:
        """Coordinates with nonzero width."""
        return self.upper > self.lower

    def contains(self, l, tol: float = 1e-9) -> bool:
        l = np.asarray(l, dtype=float)
        if l.shape != self.l0.shape:
            return False
        if np.any(l < self.lower - tol) or np.any(l > self.upper + tol):
            return False
        return all(a @ l <= b + tol for a, b in self.extra_halfspaces)

    def box_halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """Box and extra constraints as ``H l <= h`` over all n coordinates."""
        eye = np.eye(self.n)
        H = [eye, -eye]
        h = [self.upper, -self.lower]
        if self.extra_halfspaces:
            H.append(np.array([a for a, _ in self.extra_halfspaces]))
            h.append(np.array([b for _, b in self.extra_halfspaces]))
        return np.vstack(H), np.concatenate(h)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform samples (rejection on the extra halfspaces)."""
        out = []
        lo, hi = self.lower, self.upper
        while sum(len(o) for o in out) < size:
            pts = rng.uniform(lo, hi, size=(max(size, 16), self.n))
            if self.extra_halfspaces:
                H = np.array([a for a, _ in self.extra_halfspaces])
                h = np.array([b for _, b in self.extra_halfspaces])
                pts = pts[np.all(pts @ H.T <= h, axis=1)]
            out.append(pts)
        return np.vstack(out)[:size]

    def to_dict(self) -> dict[str, Any]:
        return {"l0": [float(v) for v in self.l0], "omega": self.omega,
                "extra_halfspaces": [{"normal": [float(v) for v in a], "offset": b}
                                     for a, b in self.extra_halfspaces]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LoadPolytope":
        return cls(np.array(d["l0"], dtype=float), float(d["omega"]),
                   tuple((np.array(h["normal"], dtype=float), float(h["offset"]))
                         for h in d.get("extra_halfspaces", [])))


@dataclass(frozen=True, eq=False)
class CompactForm:
    """``A x <= b + F l`` plus the balance equality ``eq_coeff @ x == eq_load_coeff @ l``.

    Rows are ordered gen-upper, gen-lower, line-upper, line-lower.
    """

    A: np.ndarray
    b: np.ndarray
    F: np.ndarray
    eq_coeff: np.ndarray
    eq_load_coeff: np.ndarray
    row_labels: tuple[str, ...]
    g: int
    m: int

    @property
    def p(self) -> int:
        return self.A.shape[0]

    def slack(self, x, l) -> np.ndarray:
        """``A x - b - F l`` (nonpositive when feasible)."""
        return self.A @ x - self.b - self.F @ l

    def row_name(self, i: int) -> str:
        label = self.row_labels[i]
        if label in (ROW_GEN_UPPER, ROW_GEN_LOWER):
            return f"{label}[{i % self.g}]"
        return f"{label}[{(i - 2 * self.g) % self.m}]"


def compute_ptdf(lines: Sequence[Line], n: int, reference_bus: int) -> np.ndarray:
    """DC PTDF: flow on each line per MW injected at each bus and withdrawn
    at the reference bus."""
    m = len(lines)
    if m == 0:
        return np.zeros((0, n))
    x = np.array([ln.reactance for ln in lines], dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise CaseError("lines[].reactance", "reactances must be present and positive")
    inc = np.zeros((m, n))
    for k, ln in enumerate(lines):
        inc[k, ln.from_bus] = 1.0
        inc[k, ln.to_bus] = -1.0
    bdiag = 1.0 / x
    Bbus = inc.T @ (bdiag[:, None] * inc)
    keep = np.array([j for j in range(n) if j != reference_bus], dtype=int)
    Bred = Bbus[np.ix_(keep, keep)]
    if keep.size and np.linalg.cond(Bred) > 1e12:
        raise CaseError("lines", "reduced susceptance matrix is singular (disconnected network)")
    P = np.zeros((m, n))
    if keep.size:
        P[:, keep] = (bdiag[:, None] * inc[:, keep]) @ np.linalg.inv(Bred)
    P[np.abs(P) < PTDF_ROUNDOFF] = 0.0
    return P


def build_compact(case: NetworkCase) -> CompactForm:
    g, m, n = case.g, case.m, case.n
    eye = np.eye(g)
    PB = case.ptdf @ case.gen_map
    PB[np.abs(PB) < PTDF_ROUNDOFF] = 0.0   # lines no generator can load
    A = np.vstack([eye, -eye, PB, -PB])
    b = np.concatenate([case.capacity, np.zeros(g), case.flow_upper, -case.flow_lower])
    F = np.vstack([np.zeros((g, n)), np.zeros((g, n)), case.ptdf, -case.ptdf])
    labels = ((ROW_GEN_UPPER,) * g + (ROW_GEN_LOWER,) * g
              + (ROW_LINE_UPPER,) * m + (ROW_LINE_LOWER,) * m)
    return CompactForm(A=A, b=b, F=F, eq_coeff=np.ones(g), eq_load_coeff=np.ones(n),
                       row_labels=labels, g=g, m=m)


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def _reject_constant(name: str):
    raise CaseError("$", f"non-finite number {name} is not permitted")


def _finite(v: Any, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise CaseError(path, f"expected a number, got {type(v).__name__}")
    v = float(v)
    if not math.isfinite(v):
        raise CaseError(path, "must be finite")
    return v


def _num(d: dict, key: str, path: str, *, required: bool = True, default=None) -> float | None:
    if key not in d:
        if required:
            raise CaseError(f"{path}.{key}", "missing required field")
        return default
    return _finite(d[key], f"{path}.{key}")


def _int(d: dict, key: str, path: str) -> int:
    if key not in d:
        raise CaseError(f"{path}.{key}", "missing required field")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            return int(v)
        raise CaseError(f"{path}.{key}", "expected an integer")
    return v


def parse_case(text: str | dict) -> NetworkCase:
    """Parse and validate a JSON case document (text or already-decoded dict)."""
    if isinstance(text, str):
        try:
            doc = json.loads(text, parse_constant=_reject_constant)
        except json.JSONDecodeError as exc:
            raise CaseError("$", f"invalid JSON: {exc}") from exc
    else:
        doc = text
    if not isinstance(doc, dict):
        raise CaseError("$", "top level must be an object")

    n = _int(doc, "buses", "$")
    if n < 1:
        raise CaseError("$.buses", "need at least one bus")
    ref = _int(doc, "reference_bus", "$")
    if not 0 <= ref < n:
        raise CaseError("$.reference_bus", f"bus index out of range: {ref} not in [0, {n})")

    raw_gens = doc.get("generators")
    if not isinstance(raw_gens, list) or not raw_gens:
        raise CaseError("$.generators", "expected a nonempty array")
    gens = []
    for i, rg in enumerate(raw_gens):
        path = f"$.generators[{i}]"
        if not isinstance(rg, dict):
            raise CaseError(path, "expected an object")
        bus = _int(rg, "bus", path)
        if not 0 <= bus < n:
            raise CaseError(f"{path}.bus", f"bus index out of range: {bus} not in [0, {n})")
        fuel = rg.get("fuel")
        if fuel is not None:
            fuel = _FUEL_ALIASES.get(str(fuel).lower(), str(fuel).lower())
        er = _num(rg, "emission_rate", path, required=False)
        if er is None:
            if fuel not in FUEL_EMISSION_RATES:
                raise CaseError(f"{path}.emission_rate",
                                "missing and no known fuel tag to default from")
            er = FUEL_EMISSION_RATES[fuel]
        if er < 0:
            raise CaseError(f"{path}.emission_rate", "must be >= 0")
        cap = _num(rg, "capacity", path)
        if cap <= 0:
            raise CaseError(f"{path}.capacity", f"must be positive, got {cap}")
        cost = _num(rg, "cost", path)
        if cost < 0:
            raise CaseError(f"{path}.cost", "must be >= 0")
        gens.append(Generator(bus=bus, cost=cost, emission_rate=er, capacity=cap,
                              name=rg.get("name"), fuel=fuel))

    raw_lines = doc.get("lines", [])
    if not isinstance(raw_lines, list):
        raise CaseError("$.lines", "expected an array")
    lines = []
    for k, rl in enumerate(raw_lines):
        path = f"$.lines[{k}]"
        if not isinstance(rl, dict):
            raise CaseError(path, "expected an object")
        fb, tb = _int(rl, "from", path), _int(rl, "to", path)
        for key, v in (("from", fb), ("to", tb)):
            if not 0 <= v < n:
                raise CaseError(f"{path}.{key}", f"bus index out of range: {v} not in [0, {n})")
        if fb == tb:
            raise CaseError(path, "line endpoints coincide")
        lim = _num(rl, "limit", path)
        if lim <= 0:
            raise CaseError(f"{path}.limit", "must be positive")
        low = _num(rl, "lower_limit", path, required=False, default=-lim)
        if low > 0:
            raise CaseError(f"{path}.lower_limit", "must be <= 0")
        x = _num(rl, "reactance", path, required=False)
        if x is not None and x <= 0:
            raise CaseError(f"{path}.reactance", "must be positive")
        lines.append(Line(fb, tb, lim, low, x))

    if n > 1:
        rows = [ln.from_bus for ln in lines]
        cols = [ln.to_bus for ln in lines]
        adj = coo_matrix((np.ones(len(lines)), (rows, cols)), shape=(n, n))
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            raise CaseError("$.lines", f"network is disconnected ({ncomp} islands)")

    have_x = [ln.reactance is not None for ln in lines]
    if any(have_x) and not all(have_x):
        raise CaseError("$.lines", "reactance must be given for all lines or none")
    computed = compute_ptdf(lines, n, ref) if (lines and all(have_x)) else None

    if "ptdf" in doc:
        raw = doc["ptdf"]
        try:
            ptdf = np.array(raw, dtype=float)
        except (TypeError, ValueError) as exc:
            raise CaseError("$.ptdf", "expected a numeric matrix") from exc
        if ptdf.shape != (len(lines), n) and not (len(lines) == 0 and ptdf.size == 0):
            raise CaseError("$.ptdf", f"shape {ptdf.shape} != ({len(lines)}, {n})")
        ptdf = ptdf.reshape(len(lines), n)
        if not np.all(np.isfinite(ptdf)):
            raise CaseError("$.ptdf", "must be finite")
        if lines and np.any(ptdf[:, ref] != 0.0):
            raise CaseError("$.ptdf", "reference-bus column must be zero")
        if computed is not None and np.abs(ptdf - computed).max() > PTDF_AGREEMENT_TOL:
            raise CaseError("$.ptdf", "disagrees with PTDF computed from reactances")
        if computed is not None:
            ptdf = computed
    elif computed is not None:
        ptdf = computed
    elif lines:
        raise CaseError("$.lines", "need either reactances or an explicit ptdf")
    else:
        ptdf = np.zeros((0, n))

    nominal = None
    if "nominal_load" in doc:
        raw = doc["nominal_load"]
        if not isinstance(raw, list) or len(raw) != n:
            raise CaseError("$.nominal_load", f"expected an array of length {n}")
        nominal = np.array([_finite(v, f"$.nominal_load[{j}]") for j, v in enumerate(raw)])
        if np.any(nominal < 0):
            raise CaseError("$.nominal_load", "loads must be >= 0")
    omega = _num(doc, "omega", "$", required=False)
    if omega is not None and not 0 <= omega < 1:
        raise CaseError("$.omega", "must satisfy 0 <= omega < 1")

    return NetworkCase(n=n, reference_bus=ref, generators=tuple(gens), lines=tuple(lines),
                       ptdf=ptdf, nominal_load=nominal, omega=omega, name=doc.get("name"))


def load_case(path: str | Path) -> NetworkCase:
    return parse_case(Path(path).read_text())
