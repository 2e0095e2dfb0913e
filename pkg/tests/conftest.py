"""Shared helpers: each shipped fixture is simulated at most once per
session and the (scenario, trace) pair reused across test modules."""

import pytest

from acisland import Simulator, load_fixture


@pytest.fixture(scope="session")
def fixture_run():
    cache = {}

    def run(name: str, dt: float | None = None):
        key = (name, dt)
        if key not in cache:
            sc = load_fixture(name)
            sim = Simulator(sc.build(), dt=dt or sc.dt)
            cache[key] = (sc, sim.run(sc.duration, events=sc.events))
        return cache[key]

    return run
