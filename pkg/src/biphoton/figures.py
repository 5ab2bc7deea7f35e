"""Data behind each reproduced figure, written as CSV plus a JSON summary.

Every command writes ``manifest.json`` first and removes its own files if
anything fails. Nothing here plots; the tables are meant for external tools.
"""

from __future__ import annotations

from collections.abc import Callable
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.constants import c as C_LIGHT

from . import coupler, counts, hom, jsa, metrology, presets
from .device import DeviceStates
from .dispersion import wavelength_from_omega
from .errors import ConfigError
from .io import write_csv, write_json
from .pipeline import (
    DeviceConfig,
    build_device,
    make_manifest,
    propagate_config,
    sweep_taper_length,
    write_length_sweep,
)

DEFAULT_LENGTHS = tuple(np.round(np.arange(200, 1201, 100) * 1e-6, 12))
DEFAULT_FILTERS_NM = (None, 50.0, 40.0, 30.0, 20.0, 10.0)
DEFAULT_VISIBILITIES = tuple(np.round(np.arange(0.05, 1.0001, 0.05), 10))


@contextmanager
def _outputs(out_dir, manifest):
    out = Path(out_dir)
    written = [manifest.write(out)]
    try:
        yield out, written
    except BaseException:
        for p in written:
            Path(p).unlink(missing_ok=True)
        raise


def _for(config: DeviceConfig, preset: str) -> DeviceConfig:
    return replace(config, preset=preset)


def _delays(config):
    return hom.delay_grid(config.delay_half_span, int(config.delay_points))


# --- commands shared with the CLI -----------------------------------------------------


def run_length_sweep(config: DeviceConfig, out_dir, lengths=DEFAULT_LENGTHS, command="sweep-taper") -> dict:
    if config.preset == "straight":
        raise ConfigError("sweep-taper needs a taper preset")
    files = ["length_sweep.csv", "length_sweep.json"]
    manifest = make_manifest(command, config, files, {"lengths_m": [float(L) for L in lengths]})
    with _outputs(out_dir, manifest) as (out, written):
        points = sweep_taper_length(config, lengths)
        written.append(write_length_sweep(out / files[0], points))
        ref = build_device(config).profile.length
        summary = {"preset": config.preset, "reference_length_m": ref, "points": len(points)}
        written.append(write_json(out / files[1], summary))
    return summary


def _counts_inputs(scenario_path):
    return {"counts_scenario": Path(scenario_path) if scenario_path else presets.data_file("counts_default.json")}


def run_counts_sweep(config: DeviceConfig, out_dir, powers=None, scenario_path=None, command="counts-sweep") -> dict:
    """PGR and CAR against pump power for the default (or a given) scenario."""
    if scenario_path is not None:
        scn, default_powers = counts.read_sweep_file(scenario_path)
    else:
        scn, default_powers = presets.default_counts()
    powers = list(powers) if powers is not None else default_powers
    if powers is None:
        raise ConfigError("no pump powers given and the scenario file lists none")
    if config.seed is not None:
        scn = replace(scn, rng_seed=int(config.seed))
    files = ["counts_sweep.csv", "counts_summary.json"]
    extra = {"powers_mw": [float(p) for p in powers], "scenario": scn.to_dict()}
    manifest = make_manifest(command, config, files, extra, inputs=_counts_inputs(scenario_path))
    with _outputs(out_dir, manifest) as (out, written):
        rows = counts.power_sweep(scn, powers)
        written.append(counts.write_sweep(out / files[0], rows))
        p = np.array([r.power_mw for r in rows])
        slope, sigma = counts.fit_pgr_slope(p, [r.pgr_per_s * r.power_mw for r in rows], [r.pgr_sigma * r.power_mw for r in rows])
        lowest = rows[int(np.argmin(p))]
        summary = {
            "pgr_per_s_per_mw_fit": slope,
            "pgr_per_s_per_mw_sigma": sigma,
            "car_at_lowest_power": lowest.car,
            "car_sigma_at_lowest_power": lowest.car_sigma,
            "coincidence_window_s": scn.coincidence_window,
            "rng_seed": int(scn.rng_seed),
            "calibration_note": "window, darks and efficiencies are calibration artefacts, not measured values",
        }
        written.append(write_json(out / files[1], summary))
    return summary


def _scaling_targets(state, delays, visibilities):
    """Targets reachable by contrast reduction alone, i.e. not above the undegraded V."""
    v_max = hom.visibility(hom.coincidence_curve(state, delays))
    return [v for v in visibilities if v <= v_max], v_max


def run_scaling(config: DeviceConfig, out_dir, visibilities=DEFAULT_VISIBILITIES, command="scaling") -> dict:
    files = ["scaling.csv", "scaling.json"]
    manifest = make_manifest(command, config, files, {"visibilities": [float(v) for v in visibilities]})
    with _outputs(out_dir, manifest) as (out, written):
        state = propagate_config(config).final
        delays = _delays(config)
        targets, v_max = _scaling_targets(state, delays, visibilities)
        pts = metrology.scaling_curve(state, targets, delays)
        written.append(metrology.write_scaling(out / files[0], pts))
        summary = {
            "preset": config.preset,
            "qfi_s2": metrology.qfi(state),
            "undegraded_visibility": v_max,
            "skipped_visibilities": [v for v in visibilities if v not in targets],
            "gamma_model": metrology.GAMMA_MODEL,
        }
        written.append(write_json(out / files[1], summary))
    return summary


# --- figures -------------------------------------------------------------------------


def fig1c(config: DeviceConfig, out_dir) -> dict:
    return run_counts_sweep(config, out_dir, command="fig fig1c")


def fig3(config: DeviceConfig, out_dir) -> dict:
    """JSA modulus and phase (straight source, taper-2 device) and the phase mismatch."""
    cfg = _for(config, "taper2")
    files = ["fig3ab_jsa.csv", "fig3c_delta_theta.csv", "fig3.json"]
    manifest = make_manifest("fig fig3", cfg, files)
    with _outputs(out_dir, manifest) as (out, written):
        dev = build_device(cfg)
        st: DeviceStates = propagate_config(cfg)
        src, hyb = st.source, st.final
        grid = src.grid
        th_u = coupler.taper_phase(dev.profile, "TE", grid, branch="source-guide")
        th_v = coupler.taper_phase(dev.profile, "TM", grid, branch="source-guide")
        taper_only = jsa.apply_coupler_phase(src, th_u, th_v)
        lam_nm = wavelength_from_omega(grid) * 1e9
        ph_src, ph_hyb = jsa.unwrapped_phase(src).values, jsa.unwrapped_phase(hyb).values
        written.append(
            write_csv(
                out / files[0],
                ["omega_s_rad_per_s", "wavelength_nm", "abs_phi_straight", "phase_straight", "abs_phi_hybrid", "phase_hybrid"],
                zip(grid, lam_nm, np.abs(src.amplitude), ph_src, np.abs(hyb.amplitude), ph_hyb),
            )
        )
        curves = {name: jsa.delta_theta(s) for name, s in (("straight", src), ("taper_only", taper_only), ("hybrid", hyb))}
        written.append(
            write_csv(
                out / files[1],
                ["omega_s_rad_per_s", "wavelength_nm", "dtheta_straight", "dtheta_taper_only", "dtheta_hybrid"],
                zip(grid, lam_nm, curves["straight"].values, curves["taper_only"].values, curves["hybrid"].values),
            )
        )
        band = np.abs(src.detuning) <= 0.5 * coupler_band(grid)
        ptp = {k: float(np.ptp(v.values[band & ~v.masked])) for k, v in curves.items()}
        summary = {"peak_to_peak_rad_in_band": ptp, "band_nm": 45.0}
        written.append(write_json(out / files[2], summary))
    return summary


def coupler_band(grid, width_nm: float = 45.0) -> float:
    """Full angular-frequency width of a ``width_nm`` band about the grid centre."""
    c = 0.5 * (grid[0] + grid[-1])
    return float(c**2 * width_nm * 1e-9 / (2 * np.pi * C_LIGHT))


def _interferogram_table(delays, curves: dict):
    names = list(curves)
    return ["tau_s", *[f"P_c_{n}" for n in names]], zip(delays, *[curves[n].P_c for n in names])


def fig4a(config: DeviceConfig, out_dir) -> dict:
    files = ["fig4a_interferograms.csv", "fig4a.json"]
    manifest = make_manifest("fig fig4a", config, files, inputs={**_all_preset_inputs(config)})
    with _outputs(out_dir, manifest) as (out, written):
        delays = _delays(config)
        ref = hom.coincidence_curve(propagate_config(_for(config, "straight")).final, delays)
        curves = {"straight": ref}
        summary = {"straight": hom.analyse(ref).to_dict()}
        for name in presets.TAPERS:
            c = hom.coincidence_curve(propagate_config(_for(config, name)).final, delays)
            curves[name] = c
            summary[name] = hom.analyse(c, ref).to_dict()
        header, rows = _interferogram_table(delays, curves)
        written.append(write_csv(out / files[0], header, rows))
        written.append(write_json(out / files[1], summary))
    return summary


def _all_preset_inputs(config):
    from .pipeline import input_files

    files = {}
    for name in presets.PRESETS:
        files.update(input_files(_for(config, name)))
    return files


def fig4c(config: DeviceConfig, out_dir, widths_nm=DEFAULT_FILTERS_NM) -> dict:
    """Taper-1 interferograms behind rectangular band-pass filters of several widths."""
    cfg = _for(config, "taper1")
    files = ["fig4c_interferograms.csv", "fig4c.json"]
    manifest = make_manifest("fig fig4c", cfg, files, {"filter_widths_nm": [w for w in widths_nm]})
    with _outputs(out_dir, manifest) as (out, written):
        delays = _delays(cfg)
        ref = hom.coincidence_curve(propagate_config(_for(cfg, "straight")).final, delays)
        curves, summary = {}, {}
        for w in widths_nm:
            label = "unfiltered" if w is None else f"{w:g}nm"
            c = hom.coincidence_curve(propagate_config(replace(cfg, filter_width_nm=w)).final, delays)
            curves[label] = c
            summary[label] = {**hom.analyse(c, ref).to_dict(), "fwhm_s": hom.dip_fwhm(c)}
        header, rows = _interferogram_table(delays, curves)
        written.append(write_csv(out / files[0], header, rows))
        written.append(write_json(out / files[1], summary))
    return summary


def fig4d(config: DeviceConfig, out_dir) -> dict:
    return run_length_sweep(_for(config, "taper2"), out_dir, command="fig fig4d")


def fig4e(config: DeviceConfig, out_dir, alpha: float = 0.5) -> dict:
    cfg = _for(config, "taper2")
    files = ["fig4e_interferograms.csv", "fig4e.json"]
    manifest = make_manifest("fig fig4e", cfg, files, {"alpha": alpha})
    with _outputs(out_dir, manifest) as (out, written):
        delays = _delays(cfg)
        state = propagate_config(cfg).final
        device = hom.coincidence_curve(state, delays)
        anyon = hom.coincidence_curve(hom.anyonic_state(state, alpha), delays)
        header, rows = _interferogram_table(delays, {"taper2": device, "anyon": anyon})
        written.append(write_csv(out / files[0], header, rows))
        summary = {"alpha": alpha, "S_taper2": hom.asymmetry_score(device), "S_anyon": hom.asymmetry_score(anyon)}
        written.append(write_json(out / files[1], summary))
    return summary


def fig4f(config: DeviceConfig, out_dir, visibilities=DEFAULT_VISIBILITIES) -> dict:
    """max FI / QFI against visibility for taper 2 and the straight source, with the V^2 bound."""
    files = ["fig4f_scaling.csv", "fig4f.json"]
    manifest = make_manifest("fig fig4f", config, files, {"visibilities": list(visibilities)}, inputs=_all_preset_inputs(config))
    with _outputs(out_dir, manifest) as (out, written):
        delays = _delays(config)
        ratios, summary = {}, {"gamma_model": metrology.GAMMA_MODEL}
        for name in ("taper2", "straight"):
            state = propagate_config(_for(config, name)).final
            targets, v_max = _scaling_targets(state, delays, visibilities)
            pts = metrology.scaling_curve(state, targets, delays)
            ratios[name] = {p.visibility: p.ratio for p in pts}
            summary[name] = {"qfi_s2": metrology.qfi(state), "undegraded_visibility": v_max}
        rows = (
            (v, ratios["taper2"].get(v, np.nan), ratios["straight"].get(v, np.nan), v * v) for v in visibilities
        )
        written.append(write_csv(out / files[0], ["V", "ratio_taper2", "ratio_straight", "bound_V2"], rows))
        written.append(write_json(out / files[1], summary))
    return summary


FIGURES: dict[str, Callable[[DeviceConfig, Path], dict]] = {
    "fig1c": fig1c,
    "fig3": fig3,
    "fig4a": fig4a,
    "fig4c": fig4c,
    "fig4d": fig4d,
    "fig4e": fig4e,
    "fig4f": fig4f,
}
