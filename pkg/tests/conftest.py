import functools

import pytest

from crplme import cases, mpp


@functools.lru_cache(maxsize=None)
def built(name: str) -> mpp.RegionDatabase:
    return mpp.enumerate_regions(cases.CASES[name]())


@pytest.fixture(scope="session")
def db_two_bus():
    return built("two-bus")


@pytest.fixture(scope="session")
def two_bus_case():
    return cases.two_bus()
