"""Bundled default devices: the straight source and the three taper variants.

All tapers share one AlGaAs width profile and local-index tables; they
differ only in the destination (silicon) index, one file per silicon width.
The bundled transmission spectra are synthetic stand-ins, not measurements.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .coupler import (
    LocalModes,
    TaperProfile,
    read_kappa_table,
    read_local_index_table,
    read_transmission,
    read_width_profile,
)
from .counts import CountsScenario, read_sweep_file
from .device import Device
from .dispersion import PhaseMismatchContext, load_dispersion, omega_from_wavelength
from .errors import ConfigError

PRESETS = ("taper1", "taper2", "taper3", "straight")
TAPERS = PRESETS[:3]


def data_dir() -> Path:
    return Path(str(resources.files("biphoton") / "data"))


def data_file(name: str) -> Path:
    path = data_dir() / name
    if not path.exists():
        raise ConfigError(f"bundled data file missing: {name}")
    return path


@lru_cache(maxsize=1)
def device_metadata() -> dict:
    return json.loads(data_file("device.json").read_text())


def default_dispersion_paths() -> dict[str, Path]:
    return {label: data_file(f"{label}.json") for label in ("pump_TE", "signal_TE", "idler_TM")}


def source_context(paths: dict | None = None, pump_frequency: float | None = None, length: float | None = None):
    """Phase-mismatch context for the TE signal / TM idler process."""
    meta = device_metadata()
    paths = {**default_dispersion_paths(), **(paths or {})}
    models = {label: load_dispersion(p, label) for label, p in paths.items()}
    if pump_frequency is None:
        pump_frequency = float(omega_from_wavelength(meta["pump_wavelength_m"]))
    L = meta["source_length_m"] if length is None else length
    return PhaseMismatchContext(pump_frequency, models["pump_TE"], models["signal_TE"], models["idler_TM"], L)


def default_transmission() -> dict:
    prov = device_metadata()["transmission_provenance"]
    return {pol: read_transmission(data_file(f"transmission_{pol}.csv"), pol, prov) for pol in ("TE", "TM")}


def taper_profile(preset: str, width_path=None) -> TaperProfile:
    if preset not in TAPERS:
        raise ConfigError(f"unknown taper preset {preset!r}; expected one of {', '.join(TAPERS)}")
    meta = device_metadata()
    z, w = read_width_profile(width_path or data_file("taper_width.csv"))
    modes = {}
    for pol in ("TE", "TM"):
        loss = meta["losses_per_m"][pol]
        modes[pol] = LocalModes(
            read_local_index_table(data_file(f"local_index_{pol}.csv")),
            load_dispersion(data_file(f"si_{pol}_{preset}.json"), f"si_{pol}"),
            read_kappa_table(data_file(f"kappa_{pol}.csv")),
            loss["source"],
            loss["dest"],
        )
    return TaperProfile(float(z[-1] - z[0]), z - z[0], w, modes, name=preset)


def load_preset(name: str, source: PhaseMismatchContext | None = None, transmission: dict | None = None) -> Device:
    """Build a bundled device; ``transmission=None`` uses the bundled spectra."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}")
    ctx = source if source is not None else source_context()
    if name == "straight":
        return Device("straight", ctx, None, None, {"preset": "straight"})
    meta = device_metadata()
    T = transmission if transmission is not None else default_transmission()
    return Device(name, ctx, taper_profile(name), T, {"preset": name, "si_width_nm": meta["si_widths_nm"][name]})


def default_counts() -> tuple[CountsScenario, list[float]]:
    return read_sweep_file(data_file("counts_default.json"))
