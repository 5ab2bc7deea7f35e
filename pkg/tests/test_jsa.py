import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from biphoton import coupler, jsa, presets
from biphoton.coupler import TransmissionSpectrum
from biphoton.dispersion import DispersionModel, PhaseMismatchContext, phase_mismatch
from biphoton.errors import ConfigError, CoverageError, DomainError, FitError
from biphoton.figures import coupler_band
from biphoton.jsa import (
    BiphotonSpectrum,
    apply_coupler_phase,
    apply_transmission,
    build_source_jsa,
    delta_theta,
    fit_phase_polynomial,
    read_state,
    write_state,
)


def flat_state(wp, grid, value=1.0):
    return BiphotonSpectrum.from_amplitude(wp, grid, np.full(grid.shape, value, dtype=complex))


def flat_T(value):
    return lambda w: np.full(np.shape(w), value)


# --- grid and type invariants -----------------------------------------------------------


def test_grid_is_symmetric_and_uniform(grid, wp):
    assert grid.size == 4096
    assert np.max(np.abs(grid + grid[::-1] - wp)) <= 1e-15 * wp
    assert np.ptp(np.diff(grid)) <= 1e-7 * np.diff(grid)[0]


def test_spectrum_rejects_bad_grids(wp, grid):
    with pytest.raises(ConfigError, match="2048"):
        flat_state(wp, grid[:1000])
    with pytest.raises(ConfigError, match="symmetric"):
        flat_state(wp, grid + 1e9)
    with pytest.raises(ConfigError, match="norm"):
        BiphotonSpectrum(wp, grid, np.ones(grid.size, dtype=complex), 1.0)


# --- source -------------------------------------------------------------------------------


def test_index_matched_source_is_flat(grid, wp):
    m = DispersionModel.constant("signal_TE", 3.2, (0.9 * grid[0], 1.1 * grid[-1]))
    pump = DispersionModel.constant("pump_TE", 3.2, (0.9 * wp, 1.1 * wp))
    state = build_source_jsa(PhaseMismatchContext(wp, pump, m, m, 2e-3), grid)
    # the group velocities come from a finite-difference stencil
    assert np.ptp(np.abs(state.amplitude)) < 1e-8 * np.abs(state.amplitude).max()
    assert np.max(np.abs(np.angle(state.amplitude))) < 1e-10
    assert state.norm == pytest.approx(1.0, rel=1e-10)


def test_default_source_peak_at_degeneracy(source_state):
    s = source_state
    i_peak = int(np.argmax(np.abs(s.amplitude)))
    assert abs(s.grid[i_peak] - s.degenerate_frequency) <= s.step


def test_default_source_first_zero_matches_root_finder(ctx):
    # the lobes lie beyond the default +-40 nm; widen the grid to reach one
    s = build_source_jsa(ctx, jsa.signal_grid(ctx.pump_frequency, span=120e-9))
    half = 0.5 * phase_mismatch(ctx, s.grid) * ctx.length
    # Delta k L / 2 tops out below +pi, so only the -pi zero exists
    assert half.max() < np.pi
    I = np.abs(s.amplitude) ** 2
    i_peak = int(np.argmax(I))
    cross = np.flatnonzero(np.diff(np.sign(half + np.pi)))
    j = int(cross[np.argmin(np.abs(cross - i_peak))])
    f = lambda w: 0.5 * phase_mismatch(ctx, w) * ctx.length + np.pi  # noqa: E731
    root = brentq(f, s.grid[j], s.grid[j + 1], xtol=1e-3)
    k = int(np.argmin(np.abs(s.grid - root)))
    k_min = k - 3 + int(np.argmin(I[k - 3 : k + 4]))
    assert abs(s.grid[k_min] - root) <= s.step
    assert I[k_min] < 1e-4 * I.max()


def test_default_marginals_mirror_each_other(source_state):
    te = np.abs(source_state.amplitude) ** 2
    tm_mirrored = np.abs(source_state.mirrored()) ** 2
    assert np.linalg.norm(te - tm_mirrored) < 0.1 * np.linalg.norm(te)


def test_source_norm_is_unity(source_state):
    assert source_state.norm == pytest.approx(1.0, rel=1e-10)


# --- transmission -------------------------------------------------------------------------


def test_transparent_coupler(source_state):
    out = apply_transmission(source_state, flat_T(1.0), flat_T(1.0))
    assert np.array_equal(out.amplitude, source_state.amplitude)
    assert out.norm / source_state.norm == 1.0


def test_flat_attenuation(source_state):
    out = apply_transmission(source_state, flat_T(0.8), flat_T(0.8))
    assert np.allclose(np.abs(out.amplitude) ** 2, 0.64 * np.abs(source_state.amplitude) ** 2, rtol=1e-13, atol=0)
    assert out.norm / source_state.norm == pytest.approx(0.64, rel=1e-13)
    assert np.allclose(np.angle(out.amplitude), np.angle(source_state.amplitude), atol=1e-13)


def test_rectangular_passband_ratio(wp, grid):
    # an even number of samples straddling omega_p / 2; the edges sit half
    # way between samples, where the trapezoid rule integrates the box exactly
    state = flat_state(wp, grid)
    h = state.step
    W = 1000 * h
    rect = lambda w: (np.abs(np.asarray(w) - 0.5 * wp) <= 0.5 * W).astype(float)  # noqa: E731
    out = apply_transmission(state, rect, rect)
    assert out.norm / state.norm == pytest.approx(W / (grid[-1] - grid[0]), rel=1e-6)


def test_transmission_must_cover_grid(source_state):
    narrow = TransmissionSpectrum("TE", source_state.grid[100:-100], np.full(source_state.grid.size - 200, 0.5))
    with pytest.raises(CoverageError):
        apply_transmission(source_state, narrow, narrow)


@settings(max_examples=30, deadline=None)
@given(tu=st.floats(0, 1), tv=st.floats(0, 1), tilt=st.floats(0, 1))
def test_transmission_never_adds_photons(source_state, tu, tv, tilt):
    Tu = lambda w: tu * (1 - tilt * (w - w.min()) / np.ptp(w))  # noqa: E731
    out = apply_transmission(source_state, Tu, flat_T(tv))
    assert 0.0 <= out.norm / source_state.norm <= 1.0


# --- phase --------------------------------------------------------------------------------


def test_zero_phase_is_identity(source_state):
    out = apply_coupler_phase(source_state, 0.0, lambda w: np.zeros_like(w))
    assert np.array_equal(out.amplitude, source_state.amplitude)


def test_linear_phase_only_rotates(source_state):
    a = 2e-13
    out = apply_coupler_phase(source_state, lambda w: a * (w - source_state.degenerate_frequency), 0.0)
    expected = source_state.amplitude * np.exp(1j * a * source_state.detuning)
    assert np.allclose(out.amplitude, expected, rtol=0, atol=1e-12 * np.abs(expected).max())
    assert abs(out.norm - source_state.norm) <= 1e-12 * source_state.norm


def test_undefined_phase_is_a_domain_error(source_state):
    bad = lambda w: np.where(w > source_state.degenerate_frequency, np.nan, 0.0)  # noqa: E731
    with pytest.raises(DomainError, match="undefined"):
        apply_coupler_phase(source_state, bad, 0.0)


def test_hybrid_phase_dwarfs_taper_only(preset_states, source_state):
    profile = presets.taper_profile("taper2")
    g = source_state.grid
    th_u = coupler.taper_phase(profile, "TE", g, branch="source-guide")
    th_v = coupler.taper_phase(profile, "TM", g, branch="source-guide")
    taper_only = delta_theta(apply_coupler_phase(source_state, th_u, th_v))
    hybrid = delta_theta(preset_states("taper2"))
    band = np.abs(source_state.detuning) <= 0.5 * coupler_band(g)
    ptp_h = np.ptp(hybrid.values[band])
    assert ptp_h >= 10 * np.ptp(taper_only.values[band])
    # one sign on each side of degeneracy, growing away from it
    right = hybrid.values[band & (source_state.detuning > 0)]
    assert np.all(np.sign(right) == np.sign(right[-1]))
    assert abs(right[-1]) > abs(right[0])


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3e-12, 3e-12), b=st.floats(-1e-24, 1e-24), t=st.floats(0.2, 1.0))
def test_transmission_and_phase_commute(source_state, a, b, t):
    x0 = source_state.degenerate_frequency
    th = lambda w: a * (w - x0) + b * (w - x0) ** 2  # noqa: E731
    T = lambda w: t * np.exp(-(((w - x0) / 1e13) ** 2))  # noqa: E731
    one = apply_coupler_phase(apply_transmission(source_state, T, flat_T(1.0)), th, th)
    two = apply_transmission(apply_coupler_phase(source_state, th, th), T, flat_T(1.0))
    assert np.allclose(one.amplitude, two.amplitude, rtol=0, atol=1e-12 * np.abs(one.amplitude).max())


@settings(max_examples=25, deadline=None)
@given(c1=st.floats(-3e-12, 3e-12), c3=st.floats(-1e-37, 1e-37))
def test_shared_arm_phase_gives_odd_delta_theta(source_state, c1, c3):
    x0 = source_state.degenerate_frequency
    th = lambda w: c1 * (w - x0) + c3 * (w - x0) ** 3 + 1e-26 * (w - x0) ** 2  # noqa: E731
    dt = delta_theta(apply_coupler_phase(source_state, th, th)).values
    assert np.allclose(dt, -dt[::-1], rtol=0, atol=1e-9)


# --- delta theta --------------------------------------------------------------------------


def test_real_positive_state_has_no_phase_mismatch(gaussian_state):
    assert np.all(delta_theta(gaussian_state).values == 0.0)


def test_even_phase_cancels(gaussian_state):
    b2 = 5e-26
    st_ = apply_coupler_phase(gaussian_state, lambda w: b2 * (w - gaussian_state.degenerate_frequency) ** 2, 0.0)
    assert np.max(np.abs(delta_theta(st_).values)) < 1e-9


def test_linear_phase_doubles(gaussian_state):
    b1 = 1.3e-12
    x = -gaussian_state.detuning
    st_ = gaussian_state.with_amplitude(gaussian_state.amplitude * np.exp(1j * b1 * x))
    curve = delta_theta(st_)
    assert curve.n_masked == 0
    assert np.allclose(curve.values, 2 * b1 * x, rtol=0, atol=1e-9)


def test_zero_amplitude_points_are_reported(gaussian_state):
    amp = gaussian_state.amplitude.copy()
    amp[:10] = 0
    curve = delta_theta(gaussian_state.with_amplitude(amp))
    assert curve.n_masked == 20
    assert np.all(np.isfinite(curve.values))


# --- polynomial fit -----------------------------------------------------------------------


def test_cubic_phase_recovered(gaussian_state):
    coeffs = (0.3, 1.1e-12, 4e-26, -2e-38)
    x = -gaussian_state.detuning
    phase = sum(c * x**k for k, c in enumerate(coeffs))
    st_ = gaussian_state.with_amplitude(np.abs(gaussian_state.amplitude) * np.exp(1j * phase))
    fit = fit_phase_polynomial(st_, 3)
    for got, want in zip(fit.coeffs, coeffs):
        assert got == pytest.approx(want, rel=1e-8)


def test_flat_phase_fits_to_zero(gaussian_state):
    fit = fit_phase_polynomial(gaussian_state, 3)
    assert fit.theta0 == 0.0
    assert max(abs(fit.beta1), abs(fit.beta2), abs(fit.beta3)) <= 1e-12


def test_taper1_group_delay(preset_states):
    # the cubic term moves the actual dip (0.52 ps) a little off -beta1
    fit = fit_phase_polynomial(preset_states("taper1"), 3, window=2e12)
    assert -fit.beta1 == pytest.approx(0.52e-12, abs=0.07e-12)


def test_fit_needs_enough_points(gaussian_state):
    with pytest.raises(FitError):
        fit_phase_polynomial(gaussian_state, 3, window=1.5 * gaussian_state.step)
    with pytest.raises(ConfigError):
        fit_phase_polynomial(gaussian_state, 3, window=1e20)


# --- files --------------------------------------------------------------------------------


def test_state_roundtrip(tmp_path, preset_states):
    s = preset_states("taper1")
    csv_path, sidecar = write_state(tmp_path / "state.csv", s)
    assert sidecar.exists()
    back = read_state(csv_path)
    assert np.array_equal(back.amplitude, s.amplitude)
    assert np.array_equal(back.grid, s.grid)
    assert back.norm == pytest.approx(s.norm, rel=1e-15)
    assert back.pol_assignment == s.pol_assignment
