"""Shared fixtures: small fitted models and trajectories reused across the
unit suites."""
from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from koopdyn import dmdfit, refsim, scenarios


@pytest.fixture(scope="session")
def linear_chain():
    """Linearized 6-vertex chain with an exactly recoverable operator."""
    elastic = scenarios.chain(n=6).linearize()
    rng = np.random.default_rng(0)
    v0 = rng.standard_normal((6, 3)) * 0.2
    v0[0] = 0.0
    s0 = refsim.FullState(elastic.rest_positions, v0)
    h = 0.01
    snaps = refsim.simulate_trajectory(elastic, s0, h, 120)
    model, report = dmdfit.fit(snaps, dmdfit.FitOptions(rank=36))
    return SimpleNamespace(elastic=elastic, s0=s0, h=h, snaps=snaps,
                           model=model, report=report)


@pytest.fixture(scope="session")
def small_beam():
    """3-layer pneumatic beam with a trained pressure-forced model."""
    import koopdyn.control as ctl

    elastic, chambers = scenarios.pneumatic_beam(layers=3, stiffness=200.0)
    h = 0.02
    rng = np.random.default_rng(1)
    schedule = [rng.uniform(0.0, 3.0, size=3) for _ in range(4)]

    def forcing(t, state):
        return ctl.chamber_forces(state.positions, chambers,
                                  schedule[min(t // 30, 3)])

    snaps = refsim.simulate_trajectory(elastic, refsim.rest_state(elastic),
                                       h, 120, forcing=forcing)
    model, _ = dmdfit.fit(snaps, dmdfit.FitOptions(rank=10))
    return SimpleNamespace(elastic=elastic, chambers=chambers, h=h,
                           snaps=snaps, model=model)
