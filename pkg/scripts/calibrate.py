"""Fit the bundled default device data and write it to src/biphoton/data.

The default data set is a parametric stand-in for mode-solver output:

* source dispersion: quadratic n_eff(omega) per polarization with given n,
  n_g and k'' at 1560 nm; the pump index
  is set so that degeneracy falls exactly at 1560 nm for a 780 nm pump;
* coupler, per polarization: a source-guide index linear in width and
  frequency, a destination index linear in frequency whose offset encodes
  the silicon width, and a constant normalised coupling K = kappa c / omega;
* width law w(u) = w_mid - W artanh(rho x) / artanh(rho) - W_lead x^p, with
  x = 2 z / l - 1;
* counts: arm efficiencies, dark rates and coincidence window solved so the
  CAR at the lowest power of the default sweep is about 600.

Run ``python scripts/calibrate.py --check`` to print the target metrics
without writing anything, or without flags to regenerate the bundle.
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

import numpy as np
from scipy.constants import c as C_LIGHT

from biphoton import coupler, counts, hom, jsa
from biphoton.coupler import KappaTable, LocalIndexTable, LocalModes, TaperProfile, TransmissionSpectrum
from biphoton.device import Device, propagate
from biphoton.dispersion import DispersionModel, PhaseMismatchContext, omega_from_wavelength
from biphoton.io import write_csv, write_json

DATA = Path(__file__).resolve().parents[1] / "src" / "biphoton" / "data"

LAM0 = 1560e-9
W0 = float(omega_from_wavelength(LAM0))
WP = 2 * W0
BAND = W0 * 22.5e-9 / LAM0  # frequency half-width of a 45 nm band

PARAMS = {
    "source": {
        "length": 2e-3,
        "TE": {"n0": 3.205, "ng": 3.580, "k2": 2.0e-25},
        "TM": {"n0": 3.195, "ng": 3.592, "k2": 1.5e-25},
        "signal_window_nm": [1300.0, 1900.0],
        "pump_window_nm": [700.0, 860.0],
    },
    "taper": {
        "length": 800e-6,
        "w_mid": 2.5e-6,
        "half_range": 0.6e-6,
        "rho": 0.98,
        # steep detuned entry, gentle exit: the launch stays in one supermode
        "lead": 1.5e-6,
        "lead_out": 0.0,
        "lead_power": 3,
        "samples": 1601,
        "window_nm": [1450.0, 1680.0],
        "si_widths_nm": {"taper1": 550.0, "taper2": 560.0, "taper3": 570.0},
        "TE": {
            "na0": 3.20, "slope": 1.657e4, "ng_a": 3.580, "ng_b": 2.875,
            "center_band": 0.7, "sigma": -4.0e6, "K": 3.6e-3,
            "loss_a": 200.0, "loss_b": 200.0,
        },
        "TM": {
            "na0": 3.19, "slope": 3.2e4, "ng_a": 3.592, "ng_b": 3.090,
            "center_band": 0.0, "sigma": 2.0e4, "K": 3.6e-3,
            "loss_a": 20.0, "loss_b": 50.0,
        },
    },
    "measured_like": {"window_nm": [1480.0, 1640.0], "points": 161, "smooth_nm": 2.0},
    "counts": {
        "internal_pgr_per_mw": 1.15e6,
        "arm_efficiency_s": 0.10,
        "arm_efficiency_i": 0.09,
        "dark_rate_s": 300.0,
        "dark_rate_i": 250.0,
        "powers_mw": [0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0],
        "target_car": 600.0,
        "integration_time": 60.0,
    },
}


def window(nm_pair):
    lo, hi = nm_pair
    return float(omega_from_wavelength(hi * 1e-9)), float(omega_from_wavelength(lo * 1e-9))


# --- source ---------------------------------------------------------------------


def source_models(p):
    sig_win = window(p["signal_window_nm"])
    pump_win = window(p["pump_window_nm"])
    models = {}
    for pol in ("TE", "TM"):
        q = p[pol]
        n1 = (q["ng"] - q["n0"]) / W0
        # k'' = 2 (n1 + n2 omega0) / c at omega0
        n2 = (0.5 * q["k2"] * C_LIGHT - n1) / W0
        coeffs = [q["n0"], n1, n2]
        models[f"signal_{pol}"] = DispersionModel.polynomial(f"signal_{pol}", W0, coeffs, sig_win)
        models[f"idler_{pol}"] = DispersionModel.polynomial(f"idler_{pol}", W0, coeffs, sig_win)
    # pump index fixed by exact degeneracy at omega_p / 2; its slope is irrelevant for a CW pump
    n_p = 0.5 * (p["TE"]["n0"] + p["TM"]["n0"])
    models["pump_TE"] = DispersionModel.polynomial("pump_TE", WP, [n_p, 1.0e-16], pump_win)
    return models


def source_context(models, length):
    return PhaseMismatchContext(WP, models["pump_TE"], models["signal_TE"], models["idler_TM"], length)


# --- coupler --------------------------------------------------------------------


def width_law(u, w_mid, W, rho, lead=0.0, lead_power=1, lead_out=None):
    x = 2 * u - 1
    lead_x = np.where(x < 0, lead, lead if lead_out is None else lead_out)
    return w_mid - W * np.arctanh(rho * x) / np.arctanh(rho) - lead_x * x**lead_power


def dest_offset(q):
    """n_b at omega0 for the reference silicon width, placing the crossing at center_band * BAND."""
    dc = q["center_band"] * BAND
    # n_a(w_mid, w0 + dc) = n_b(w0 + dc) with n_b slope (ng_b - nb0) / w0
    num = q["na0"] + (q["ng_a"] - q["na0"]) * dc / W0 - q["ng_b"] * dc / W0
    return num / (1.0 - dc / W0)


def local_tables(t, pol):
    q = t[pol]
    win = window(t["window_nm"])
    omegas = np.linspace(win[0], win[1], 24)
    span = 1.1 * (t["half_range"] + t["lead"])
    widths = np.linspace(t["w_mid"] - span, t["w_mid"] + span, 25)
    d = (omegas - W0) / W0
    n_a = q["na0"] + q["slope"] * (widths[:, None] - t["w_mid"]) + (q["ng_a"] - q["na0"]) * d[None, :]
    kappa = q["K"] * omegas / C_LIGHT
    return LocalIndexTable(widths, omegas, n_a), KappaTable(omegas, kappa)


def dest_model(t, pol, si_width_nm):
    q = t[pol]
    nb0 = dest_offset(q) + q["sigma"] * (si_width_nm - 560.0) * 1e-9
    return DispersionModel.polynomial(f"si_{pol}", W0, [nb0, (q["ng_b"] - nb0) / W0], window(t["window_nm"]))


def width_samples(t, length=None, samples=None):
    length = t["length"] if length is None else length
    n = t["samples"] if samples is None else samples
    u = np.linspace(0.0, 1.0, n)
    return u * length, width_law(u, t["w_mid"], t["half_range"], t["rho"], t["lead"], t["lead_power"], t.get("lead_out"))


def make_profile(t, si_width_nm, lossless=False, length=None, samples=None, name="custom"):
    z, w = width_samples(t, length, samples)
    modes = {}
    for pol in ("TE", "TM"):
        na, kap = local_tables(t, pol)
        q = t[pol]
        la, lb = (0.0, 0.0) if lossless else (q["loss_a"], q["loss_b"])
        modes[pol] = LocalModes(na, dest_model(t, pol, si_width_nm), kap, la, lb)
    return TaperProfile(z[-1], z, w, modes, name=name)


def moving_average(omega, T, width_nm):
    from biphoton.pipeline import smooth_transmission

    return smooth_transmission(omega, T, width_nm * 1e-9)


def measured_like(t, m):
    prof = make_profile(t, t["si_widths_nm"]["taper2"], name="taper2")
    win = window(m["window_nm"])
    grid = np.linspace(win[0], win[1], m["points"])
    out = {}
    for pol in ("TE", "TM"):
        sim = coupler.transmission_spectrum(prof, pol, grid)
        out[pol] = TransmissionSpectrum(pol, grid, moving_average(grid, sim.T, m["smooth_nm"]), "synthetic-stand-in")
    return out


def build_devices(params=PARAMS):
    models = source_models(params["source"])
    ctx = source_context(models, params["source"]["length"])
    t = params["taper"]
    meas = measured_like(t, params["measured_like"])
    devices = {"straight": Device("straight", ctx, None, None, {"preset": "straight"})}
    for name, si in t["si_widths_nm"].items():
        devices[name] = Device(name, ctx, make_profile(t, si, name=name), meas, {"preset": name, "si_width_nm": si})
    return devices, models, meas


# --- counts ---------------------------------------------------------------------


def counts_defaults(c):
    """Coincidence window that puts CAR at ``target_car`` for the lowest sweep power."""
    scn = counts.CountsScenario(
        internal_pgr_per_mw=c["internal_pgr_per_mw"], pump_power=min(c["powers_mw"]),
        arm_efficiency_s=c["arm_efficiency_s"], arm_efficiency_i=c["arm_efficiency_i"],
        dark_rate_s=c["dark_rate_s"], dark_rate_i=c["dark_rate_i"], coincidence_window=1e-9,
        integration_time=c["integration_time"], rng_seed=2024,
    )
    r = counts.expected_rates(scn)
    acc_per_window = r.singles_s * r.singles_i
    window_s = r.true_coincidences / ((c["target_car"] - 1.0) * acc_per_window)
    return counts.CountsScenario(**{**scn.to_dict(), "coincidence_window": float(window_s)})


# --- evaluation -----------------------------------------------------------------


def evaluate(devices, verbose=True):
    grid = jsa.signal_grid(WP)
    tau = hom.delay_grid(8e-12, 4097)
    res = {}
    t0 = time.time()
    ref = hom.coincidence_curve(propagate(devices["straight"], grid).final, tau)
    res["straight_V"] = hom.visibility(ref)
    curves = {}
    for name in ("taper1", "taper2", "taper3"):
        st = propagate(devices[name], grid)
        curves[name] = hom.coincidence_curve(st.final, tau)
        res[f"{name}_V"] = hom.visibility(curves[name])
        res[f"{name}_S"] = hom.asymmetry_score(curves[name])
        res[f"{name}_shift_ps"] = hom.dip_shift(curves[name], ref) * 1e12
        if name == "taper2":
            res["taper2_anyon_S"] = hom.asymmetry_score(hom.coincidence_curve(hom.anyonic_state(st.final, 0.5), tau))
    filt = hom.SpectralFilter.from_wavelength(W0, 30e-9)
    cf = hom.coincidence_curve(propagate(devices["taper1"], grid, filt).final, tau)
    res["taper1_filt_S"] = hom.asymmetry_score(cf)
    res["taper1_filt_dshift_ps"] = (hom.dip_shift(cf, ref) * 1e12) - res["taper1_shift_ps"]
    for L in (400e-6, 500e-6):
        d = devices["taper2"].with_length(L)
        c2 = hom.coincidence_curve(propagate(d, grid).final, tau)
        res[f"taper2_{int(L * 1e6)}_V"] = hom.visibility(c2)
        res[f"taper2_{int(L * 1e6)}_S"] = hom.asymmetry_score(c2)
    prof = devices["taper2"].profile
    for pol in ("TE", "TM"):
        res[f"T_{pol}_center"] = abs(coupler.cmt_transfer(prof, pol, W0)[0]) ** 2
        res[f"score_{pol}_center"] = coupler.adiabaticity_score(prof, pol, W0)
        p4 = coupler.rescale_length(prof, 400e-6)
        res[f"T_{pol}_center_400"] = abs(coupler.cmt_transfer(p4, pol, W0)[0]) ** 2
    lam = np.linspace(1500e-9, 1620e-9, 121)
    for pol in ("TE", "TM"):
        Tsim = np.abs(coupler.cmt_transfer(prof, pol, omega_from_wavelength(lam))[0]) ** 2
        above = Tsim > 0.5
        i0 = int(np.argmin(np.abs(lam - LAM0)))
        if above[i0]:
            lo = i0
            while lo > 0 and above[lo - 1]:
                lo -= 1
            hi = i0
            while hi < lam.size - 1 and above[hi + 1]:
                hi += 1
            res[f"band_{pol}_nm"] = (lam[hi] - lam[lo]) * 1e9
        else:
            res[f"band_{pol}_nm"] = 0.0
    res["crossed_800"] = res["T_TE_center"] * res["T_TM_center"]
    res["crossed_400"] = res["T_TE_center_400"] * res["T_TM_center_400"]
    res["elapsed_s"] = time.time() - t0
    if verbose:
        for k, v in res.items():
            print(f"{k:>24s} = {v:.4f}")
    return res


def write_bundle(params, models, meas, scenario):
    DATA.mkdir(parents=True, exist_ok=True)
    src = params["source"]
    for label in ("pump_TE", "signal_TE", "signal_TM", "idler_TE", "idler_TM"):
        m = models[label]
        write_json(DATA / f"{label}.json", {"ref_omega": m.ref_omega, "coeffs": list(m.coeffs), "window": list(m.window)})
    t = params["taper"]
    z, w = width_samples(t)
    write_csv(DATA / "taper_width.csv", ["z_m", "w_m"], zip(z, w))
    for pol in ("TE", "TM"):
        na, kap = local_tables(t, pol)
        coupler.write_local_index_table(DATA / f"local_index_{pol}.csv", na)
        write_csv(DATA / f"kappa_{pol}.csv", ["omega_rad_per_s", "kappa_rad_per_m"], zip(kap.omegas, kap.kappa))
        for name, si in t["si_widths_nm"].items():
            m = dest_model(t, pol, si)
            write_json(DATA / f"si_{pol}_{name}.json", {"ref_omega": m.ref_omega, "coeffs": list(m.coeffs), "window": list(m.window)})
        coupler.write_transmission(DATA / f"transmission_{pol}.csv", meas[pol])
    write_json(
        DATA / "device.json",
        {
            "pump_wavelength_m": 2 * np.pi * C_LIGHT / WP,
            "source_length_m": src["length"],
            "taper_length_m": t["length"],
            "si_widths_nm": t["si_widths_nm"],
            "losses_per_m": {pol: {"source": t[pol]["loss_a"], "dest": t[pol]["loss_b"]} for pol in ("TE", "TM")},
            "transmission_provenance": "synthetic-stand-in",
            "note": "calibration artefact produced by scripts/calibrate.py; not measured data",
        },
    )
    write_json(DATA / "counts_default.json", {**scenario.to_dict(), "powers_mw": params["counts"]["powers_mw"]})


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true", help="print metrics, write nothing")
    args = ap.parse_args(argv)
    devices, models, meas = build_devices()
    scenario = counts_defaults(PARAMS["counts"])
    print(f"coincidence window = {scenario.coincidence_window * 1e9:.4f} ns")
    if not args.check:
        write_bundle(PARAMS, models, meas, scenario)
        print(f"wrote bundle to {DATA}")
    evaluate(devices)


if __name__ == "__main__":
    main()
