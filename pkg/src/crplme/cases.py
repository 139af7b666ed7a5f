"""Small test networks.

Run ``python -m crplme.cases OUTDIR`` to write them as JSON case files.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from .grid import NetworkCase, parse_case


def two_bus_dict() -> dict:
    # cheap coal at bus 0 behind a 30 MW line, clean peaker at bus 1
    return {
        "name": "two-bus", "buses": 2, "reference_bus": 1,
        "generators": [
            {"name": "G1", "bus": 0, "cost": 10.0, "emission_rate": 1000.0, "capacity": 100.0},
            {"name": "G2", "bus": 1, "cost": 50.0, "emission_rate": 12.0, "capacity": 100.0},
        ],
        "lines": [{"from": 0, "to": 1, "limit": 30.0}],
        "ptdf": [[1.0, 0.0]],
        "nominal_load": [0.0, 32.0], "omega": 0.5,
    }


def two_bus() -> NetworkCase:
    return parse_case(two_bus_dict())


def _ring(gen1: dict, limit02: float, load: list[float], omega: float, name: str) -> dict:
    return {
        "name": name, "buses": 3, "reference_bus": 2,
        "generators": [
            {"name": "Coal-0", "bus": 0, "cost": 10.0, "fuel": "coal", "capacity": 200.0},
            gen1,
        ],
        "lines": [
            {"from": 0, "to": 1, "limit": 500.0, "reactance": 0.1},
            {"from": 1, "to": 2, "limit": 500.0, "reactance": 0.1},
            {"from": 0, "to": 2, "limit": limit02, "reactance": 0.1},
        ],
        "nominal_load": load, "omega": omega,
    }


def three_bus_ring() -> NetworkCase:
    """Coal at bus 0, gas at bus 1; the 0-2 line congests near nominal load."""
    gas = {"name": "NG-1", "bus": 1, "cost": 30.0, "fuel": "ng", "capacity": 200.0}
    return parse_case(_ring(gas, 60.0, [0.0, 60.0, 60.0], 0.3, "three-bus-ring"))


def negative_lme_case() -> NetworkCase:
    """Coal behind the congested 0-2 line and ample wind at bus 1.

    With the line binding, serving 1 MW more at bus 2 backs coal down by 1 MW
    and raises wind by 2 MW, so the LME at bus 2 is -1000 + 2*12.
    """
    wind = {"name": "Wind-1", "bus": 1, "cost": 20.0, "fuel": "wind", "capacity": 300.0}
    return parse_case(_ring(wind, 50.0, [0.0, 60.0, 60.0], 0.2, "negative-lme"))


def five_bus_pjm() -> NetworkCase:
    """The familiar PJM five-bus network (buses A..E = 0..4)."""
    doc = {
        "name": "pjm-5", "buses": 5, "reference_bus": 3,
        "generators": [
            {"name": "Alta", "bus": 0, "cost": 14.0, "fuel": "ng", "capacity": 40.0},
            {"name": "ParkCity", "bus": 0, "cost": 15.0, "fuel": "ng", "capacity": 170.0},
            {"name": "Solitude", "bus": 2, "cost": 30.0, "fuel": "ng", "capacity": 520.0},
            {"name": "Sundance", "bus": 3, "cost": 40.0, "fuel": "solar", "capacity": 200.0},
            {"name": "Brighton", "bus": 4, "cost": 10.0, "fuel": "coal", "capacity": 600.0},
        ],
        "lines": [
            {"from": 0, "to": 1, "limit": 400.0, "reactance": 0.0281},
            {"from": 0, "to": 3, "limit": 999.0, "reactance": 0.0304},
            {"from": 0, "to": 4, "limit": 999.0, "reactance": 0.0064},
            {"from": 1, "to": 2, "limit": 999.0, "reactance": 0.0108},
            {"from": 2, "to": 3, "limit": 999.0, "reactance": 0.0297},
            {"from": 3, "to": 4, "limit": 240.0, "reactance": 0.0297},
        ],
        "nominal_load": [0.0, 300.0, 300.0, 400.0, 0.0], "omega": 0.2,
    }
    return parse_case(doc)


_IEEE14_BRANCHES = [
    (1, 2, 0.05917), (1, 5, 0.22304), (2, 3, 0.19797), (2, 4, 0.17632),
    (2, 5, 0.17388), (3, 4, 0.17103), (4, 5, 0.04211), (4, 7, 0.20912),
    (4, 9, 0.55618), (5, 6, 0.25202), (6, 11, 0.19890), (6, 12, 0.25581),
    (6, 13, 0.13027), (7, 8, 0.17615), (7, 9, 0.11001), (9, 10, 0.08450),
    (9, 14, 0.27038), (10, 11, 0.19207), (12, 13, 0.19988), (13, 14, 0.34802),
]
_IEEE14_LOAD = [0.0, 21.7, 94.2, 47.8, 7.6, 11.2, 0.0, 0.0, 29.5, 9.0, 3.5, 6.1, 13.5, 14.9]


def ieee14_class() -> NetworkCase:
    """IEEE 14-bus topology and loads with five generators of mixed fuel."""
    limits = {(1, 2): 120.0, (1, 5): 70.0, (2, 3): 60.0}
    lines = [{"from": a - 1, "to": b - 1, "reactance": x,
              "limit": limits.get((a, b), 500.0)} for a, b, x in _IEEE14_BRANCHES]
    doc = {
        "name": "ieee14-class", "buses": 14, "reference_bus": 0,
        "generators": [
            {"name": "Coal-1", "bus": 0, "cost": 20.0, "fuel": "coal", "capacity": 250.0},
            {"name": "NG-2", "bus": 1, "cost": 35.0, "fuel": "ng", "capacity": 60.0},
            {"name": "Wind-3", "bus": 2, "cost": 5.0, "fuel": "wind", "capacity": 40.0},
            {"name": "Solar-6", "bus": 5, "cost": 8.0, "fuel": "solar", "capacity": 30.0},
            {"name": "NG-8", "bus": 7, "cost": 45.0, "fuel": "ng", "capacity": 120.0},
        ],
        "lines": lines, "nominal_load": list(_IEEE14_LOAD), "omega": 0.3,
    }
    return parse_case(doc)


def collision_case() -> NetworkCase:
    """Two equal-cost units with different emission rates at one bus.

    Both price regions share the LMP vector (10, 10) but the marginal unit,
    hence the LME, differs across them.
    """
    doc = {
        "name": "lmp-collision", "buses": 2, "reference_bus": 1,
        "generators": [
            {"name": "GA", "bus": 0, "cost": 10.0, "emission_rate": 1000.0, "capacity": 25.0},
            {"name": "GB", "bus": 0, "cost": 10.0, "emission_rate": 469.0, "capacity": 100.0},
            {"name": "GC", "bus": 1, "cost": 40.0, "emission_rate": 12.0, "capacity": 100.0},
        ],
        "lines": [{"from": 0, "to": 1, "limit": 200.0}],
        "ptdf": [[1.0, 0.0]],
        "nominal_load": [0.0, 40.0], "omega": 0.5,
    }
    return parse_case(doc)


CASES = {
    "two-bus": two_bus,
    "three-bus-ring": three_bus_ring,
    "negative-lme": negative_lme_case,
    "pjm-5": five_bus_pjm,
    "ieee14-class": ieee14_class,
    "lmp-collision": collision_case,
}


def write_cases(outdir: str | Path) -> list[Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, make in CASES.items():
        p = out / f"{name}.json"
        p.write_text(json.dumps(make().to_dict(), indent=1, sort_keys=True) + "\n")
        paths.append(p)
    return paths


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="write the bundled test networks as JSON")
    ap.add_argument("outdir")
    args = ap.parse_args(argv)
    for p in write_cases(args.outdir):
        print(p)
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
