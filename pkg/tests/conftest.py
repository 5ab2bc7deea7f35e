from __future__ import annotations

import numpy as np
import pytest

from biphoton import hom, jsa, presets
from biphoton.device import propagate
from biphoton.pipeline import DeviceConfig

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def ctx():
    return presets.source_context()


@pytest.fixture(scope="session")
def wp(ctx):
    return ctx.pump_frequency


@pytest.fixture(scope="session")
def grid(wp):
    return jsa.signal_grid(wp)


@pytest.fixture(scope="session")
def delays():
    cfg = DeviceConfig()
    return hom.delay_grid(cfg.delay_half_span, cfg.delay_points)


@pytest.fixture(scope="session")
def source_state(ctx, grid):
    return jsa.build_source_jsa(ctx, grid)


@pytest.fixture(scope="session")
def gaussian_state(wp, grid):
    """Flat-phase symmetric state, |phi|^2 Gaussian with sigma = 8 % of the grid half-width."""
    x = 0.5 * (grid - grid[::-1])
    sigma = 0.08 * x.max()
    return jsa.BiphotonSpectrum.from_amplitude(wp, grid, np.exp(-(x**2) / (4 * sigma**2))).normalized()


@pytest.fixture(scope="session")
def preset_states(ctx, grid):
    """Final (coupled) state for every bundled preset, computed once per session."""
    cache: dict = {}

    def get(name):
        if name not in cache:
            cache[name] = propagate(presets.load_preset(name, ctx), grid).final
        return cache[name]

    return get


@pytest.fixture(scope="session")
def preset_curves(preset_states, delays):
    cache: dict = {}

    def get(name):
        if name not in cache:
            cache[name] = hom.coincidence_curve(preset_states(name), delays)
        return cache[name]

    return get


@pytest.fixture(scope="session")
def taper2_profile():
    return presets.taper_profile("taper2")
