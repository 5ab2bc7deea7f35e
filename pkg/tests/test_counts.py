import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biphoton import presets
from biphoton.counts import (
    CountsScenario,
    expected_rates,
    fit_pgr_slope,
    power_sweep,
    read_scenario,
    read_sweep_file,
    sample_counts,
    write_scenario,
    write_sweep,
)
from biphoton.errors import CarUndefinedError, ConfigError, ParseError


@pytest.fixture(scope="module")
def default():
    return presets.default_counts()


def dark_free(**kw):
    base = dict(
        internal_pgr_per_mw=1e6, pump_power=1.0, arm_efficiency_s=0.1, arm_efficiency_i=0.08,
        dark_rate_s=0.0, dark_rate_i=0.0, coincidence_window=1e-9, integration_time=10.0, rng_seed=7,
    )
    return CountsScenario(**{**base, **kw})


def test_rate_model():
    scn = dark_free(dark_rate_s=100.0, dark_rate_i=50.0)
    r = expected_rates(scn)
    assert r.singles_s == 0.1 * 1e6 + 100
    assert r.singles_i == 0.08 * 1e6 + 50
    assert r.true_coincidences == pytest.approx(0.008 * 1e6, rel=1e-15)
    assert r.accidentals == pytest.approx(r.singles_s * r.singles_i * 1e-9, rel=1e-15)
    assert r.estimated_pgr == pytest.approx(1e6, rel=1e-15)


def test_zero_power_without_darks_has_no_car():
    with pytest.raises(CarUndefinedError):
        expected_rates(dark_free(pump_power=0.0))


@settings(max_examples=50)
@given(p=st.floats(1e-3, 1e3), w=st.floats(1e-12, 1e-6), es=st.floats(1e-3, 1.0), ei=st.floats(1e-3, 1.0))
def test_dark_free_car_law(p, w, es, ei):
    scn = dark_free(pump_power=p, coincidence_window=w, arm_efficiency_s=es, arm_efficiency_i=ei)
    r = expected_rates(scn)
    assert r.car > 1
    assert (r.car - 1) * scn.pair_rate * w == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=50)
@given(s=st.floats(0.01, 100.0))
def test_power_homogeneity(s):
    a = expected_rates(dark_free())
    b = expected_rates(dark_free(pump_power=s))
    assert b.true_coincidences == pytest.approx(s * a.true_coincidences, rel=1e-12)
    assert b.accidentals == pytest.approx(s * s * a.accidentals, rel=1e-12)


def test_default_car_at_lowest_power(default):
    scn, powers = default
    r = expected_rates(replace(scn, pump_power=min(powers)))
    assert scn.internal_pgr_per_mw > 1e6
    assert r.car == pytest.approx(600, rel=0.1)


# --- sampling -----------------------------------------------------------------------------


def test_long_integration_converges():
    scn = dark_free(dark_rate_s=200.0, dark_rate_i=200.0, integration_time=1e6 / 8e3)
    mean, got = expected_rates(scn), sample_counts(scn)
    t = scn.integration_time
    for field in ("singles_s", "singles_i", "true_coincidences", "accidentals"):
        mu = getattr(mean, field) * t
        assert abs(getattr(got, field) * t - mu) < 5 * np.sqrt(mu)


def test_sample_means_within_one_percent():
    # every mean count above 1e5
    scn = dark_free(coincidence_window=1e-8, integration_time=2000.0)
    mean = expected_rates(scn)
    assert min(mean.accidentals, mean.true_coincidences) * scn.integration_time > 1e5
    got = sample_counts(scn)
    for field in ("singles_s", "singles_i", "true_coincidences", "accidentals"):
        assert getattr(got, field) == pytest.approx(getattr(mean, field), rel=0.01)


def test_fixed_seed_is_bit_identical(default):
    scn, _ = default
    assert sample_counts(scn) == sample_counts(scn)
    assert sample_counts(scn) != sample_counts(replace(scn, rng_seed=scn.rng_seed + 1))


def test_car_sigma_first_order():
    scn = dark_free(coincidence_window=1e-8, integration_time=50.0)
    r = sample_counts(scn)
    t = scn.integration_time
    nt, na = r.true_coincidences * t, r.accidentals * t
    # d CAR / d N_t = 1 / N_a, d CAR / d N_a = -N_t / N_a^2
    assert r.car_sigma == pytest.approx(np.hypot(np.sqrt(nt) / na, nt * np.sqrt(na) / na**2), rel=1e-12)


def test_sampling_needs_time():
    with pytest.raises(ConfigError):
        sample_counts(dark_free(integration_time=0.0))


def test_pgr_slope_over_a_decade(default):
    scn, _ = default
    powers = np.linspace(0.5, 5.0, 10)
    rows = power_sweep(scn, powers)
    rates = [r.pgr_per_s * r.power_mw for r in rows]
    sig = [r.pgr_sigma * r.power_mw for r in rows]
    slope, err = fit_pgr_slope(powers, rates, sig)
    assert abs(slope - scn.internal_pgr_per_mw) < 3 * err


# --- sweep --------------------------------------------------------------------------------


def test_single_power_sweep_matches_sample(default):
    scn, _ = default
    (row,) = power_sweep(scn, [scn.pump_power])
    res = sample_counts(scn)
    assert row.car == res.car
    assert row.pgr_per_s == res.estimated_pgr / scn.pump_power


def test_doubling_power_halves_car_excess():
    a, b = (expected_rates(dark_free(pump_power=p)) for p in (0.8, 1.6))
    assert (b.car - 1) == pytest.approx(0.5 * (a.car - 1), rel=1e-12)


def test_default_sweep_shape(default):
    scn, powers = default
    rows = power_sweep(scn, powers)
    cars = [r.car for r in rows]
    assert np.all(np.diff(cars) < 0)
    pgr = np.array([r.pgr_per_s for r in rows])
    sig = np.array([r.pgr_sigma for r in rows])
    mean = np.average(pgr, weights=1 / sig**2)
    assert np.all(np.abs(pgr - mean) < 3 * sig)


def test_sweep_seeds_are_xor_derived(default):
    scn, _ = default
    rows = power_sweep(scn, [1.0, 2.0, 3.0])
    third = sample_counts(replace(scn, pump_power=3.0, rng_seed=scn.rng_seed ^ 2))
    assert rows[2].car == third.car


def test_sweep_rejects_bad_powers(default):
    scn, _ = default
    with pytest.raises(ConfigError):
        power_sweep(scn, [])
    with pytest.raises(ConfigError):
        power_sweep(scn, [1.0, -2.0])


# --- validation and files -----------------------------------------------------------------


@pytest.mark.parametrize(
    "bad",
    [
        {"arm_efficiency_s": 1.2},
        {"arm_efficiency_i": 0.0},
        {"dark_rate_s": -1.0},
        {"coincidence_window": 0.0},
        {"rng_seed": -3},
        {"pump_power": float("nan")},
    ],
)
def test_scenario_invariants(bad):
    with pytest.raises(ConfigError):
        dark_free(**bad)


def test_scenario_roundtrip(tmp_path, default):
    scn, _ = default
    assert read_scenario(write_scenario(tmp_path / "s.json", scn)) == scn


def test_sweep_file_carries_optional_powers(tmp_path, default):
    scn, _ = default
    p = write_scenario(tmp_path / "s.json", scn)
    assert read_sweep_file(p) == (scn, None)
    d = json.loads(p.read_text())
    p.write_text(json.dumps({**d, "powers_mw": [1, 2.5]}))
    assert read_sweep_file(p) == (scn, [1.0, 2.5])
    assert read_scenario(p) == scn


def test_scenario_parse_errors(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{\n  "pump_power": 1.0,\n  oops\n}\n')
    with pytest.raises(ParseError, match="line 3"):
        read_scenario(p)
    p.write_text('{"pump_power": 1.0}')
    with pytest.raises(ConfigError, match="bad counts scenario"):
        read_scenario(p)


def test_sweep_csv_header(tmp_path, default):
    scn, powers = default
    path = write_sweep(tmp_path / "sweep.csv", power_sweep(scn, powers[:2]))
    lines = path.read_text().splitlines()
    assert lines[0] == "power_mw,pgr_per_s,car,car_sigma"
    assert len(lines) == 3

