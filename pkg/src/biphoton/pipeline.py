"""Configured runs: device assembly, the staged pipeline, taper-length sweeps
and ingestion of measured transmission spectra.

Configuration is one JSON document mapping onto :class:`DeviceConfig`.
Relative paths inside it resolve against the file's directory. Command-line
flags override JSON fields, which override the defaults.
"""

from __future__ import annotations

import dataclasses
import json
from collections.abc import Iterable, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.integrate import cumulative_trapezoid

from . import coupler, hom, jsa, metrology, presets
from .coupler import TransmissionSpectrum
from .device import Device, DeviceStates, coupler_phases, device_transmissions, propagate
from .dispersion import omega_from_wavelength
from .errors import BiphotonError, ConfigError, ParseError, StageError
from .io import file_sha256, payload_sha256, write_csv, write_json

STAGES = ("source", "couple", "filter", "hom", "metrology")
DEFAULT_SMOOTH_NM = 2.0
_DISPERSION_LABELS = ("pump_TE", "signal_TE", "idler_TM")


# --- transmission ingestion ---------------------------------------------------------


def smooth_transmission(omega, T, width):
    """Moving average of T over a wavelength window ``width`` (m) about each sample.

    Near the ends of the spectrum the window slides inward rather than
    shrinking, so every output sample averages a full window when the
    spectrum is wide enough.
    """
    omega = np.asarray(omega, dtype=float)
    T = np.asarray(T, dtype=float)
    if not width > 0:
        raise ConfigError("smoothing width must be positive")
    half = 0.5 * omega**2 * width / (2 * np.pi * C_LIGHT)
    lo, hi = omega[0], omega[-1]
    full = np.minimum(2 * half, hi - lo)
    a = np.clip(omega - half, lo, hi - full)
    b = a + full
    F = cumulative_trapezoid(T, omega, initial=0.0)
    out = (np.interp(b, omega, F) - np.interp(a, omega, F)) / (b - a)
    return np.clip(out, 0.0, 1.0)


def ingest_transmission(path, polarization: str, smooth_nm: float | None = None) -> TransmissionSpectrum:
    """Load a measured ``omega_rad_per_s,T`` file, optionally averaging cavity fringes."""
    spec = coupler.read_transmission(path, polarization, "measured-file")
    if smooth_nm is None:
        return spec
    T = smooth_transmission(spec.omega, spec.T, smooth_nm * 1e-9)
    return TransmissionSpectrum(polarization, spec.omega, T, spec.provenance)


# --- configuration -------------------------------------------------------------------


@dataclass(frozen=True)
class DeviceConfig:
    preset: str = "taper1"
    dispersion: Mapping[str, str] = field(default_factory=dict)
    taper_profile: str | None = None
    transmission: Mapping[str, str] = field(default_factory=dict)
    smooth_nm: float | None = None
    pump_wavelength: float = 780e-9
    grid_span: float = jsa.DEFAULT_SPAN
    grid_points: int = jsa.DEFAULT_GRID_POINTS
    filter_width_nm: float | None = None
    delay_half_span: float = 8e-12
    delay_points: int = 4097
    anyonic_alpha: float | None = None
    taper_length: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.preset not in presets.PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; expected one of {', '.join(presets.PRESETS)}")
        for label in self.dispersion:
            if label not in _DISPERSION_LABELS:
                raise ConfigError(f"dispersion override {label!r} not used; expected one of {', '.join(_DISPERSION_LABELS)}")
        for pol in self.transmission:
            if pol not in coupler.POLARIZATIONS:
                raise ConfigError(f"transmission key must be TE or TM, got {pol!r}")
        for p in [*self.dispersion.values(), *self.transmission.values(), self.taper_profile]:
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"input file not found: {p}")
        for name in ("pump_wavelength", "grid_span", "delay_half_span"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.smooth_nm is not None and not self.smooth_nm > 0:
            raise ConfigError("smooth_nm must be positive")
        if self.filter_width_nm is not None and not self.filter_width_nm > 0:
            raise ConfigError("filter_width_nm must be positive")
        if self.taper_length is not None and not self.taper_length > 0:
            raise ConfigError("taper_length must be positive")
        if self.anyonic_alpha is not None and not 0 <= self.anyonic_alpha <= 1:
            raise ConfigError("anyonic_alpha must lie in [0, 1]")
        if int(self.grid_points) != self.grid_points or int(self.delay_points) != self.delay_points:
            raise ConfigError("grid_points and delay_points must be integers")
        if self.seed is not None and (int(self.seed) != self.seed or not 0 <= self.seed < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def pump_frequency(self) -> float:
        return float(omega_from_wavelength(self.pump_wavelength))

    @classmethod
    def from_dict(cls, d: Mapping, base_dir=None) -> "DeviceConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        d = dict(d)
        base = Path(base_dir) if base_dir is not None else None

        def resolve(p):
            if p is None or base is None or Path(p).is_absolute():
                return p
            return str(base / p)

        for key in ("dispersion", "transmission"):
            if key in d:
                if not isinstance(d[key], Mapping):
                    raise ConfigError(f"{key} must be an object")
                d[key] = {k: resolve(v) for k, v in d[key].items()}
        if "taper_profile" in d:
            d["taper_profile"] = resolve(d["taper_profile"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from exc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["dispersion"] = dict(sorted(self.dispersion.items()))
        d["transmission"] = dict(sorted(self.transmission.items()))
        return d

    def with_overrides(self, **kwargs) -> "DeviceConfig":
        """Replace fields whose override is not None."""
        return dataclasses.replace(self, **{k: v for k, v in kwargs.items() if v is not None})


def load_config(path) -> DeviceConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return DeviceConfig.from_dict(d, base_dir=path.parent)


# --- device assembly -----------------------------------------------------------------


def build_device(config: DeviceConfig) -> Device:
    ctx = presets.source_context(config.dispersion, config.pump_frequency)
    if config.preset == "straight":
        return presets.load_preset("straight", ctx)
    T = presets.default_transmission()
    for pol, path in config.transmission.items():
        T[pol] = ingest_transmission(path, pol, config.smooth_nm)
    dev = presets.load_preset(config.preset, ctx, T)
    if config.taper_profile is not None:
        dev = Device(dev.name, ctx, presets.taper_profile(config.preset, config.taper_profile), T, dev.metadata)
    if config.taper_length is not None:
        dev = dev.with_length(config.taper_length)
    return dev


def input_files(config: DeviceConfig) -> dict[str, Path]:
    """Every file a run with ``config`` reads, keyed by a stable label."""
    files = {f"dispersion/{k}": Path(v) for k, v in presets.default_dispersion_paths().items()}
    files.update({f"dispersion/{k}": Path(v) for k, v in config.dispersion.items()})
    files["device"] = presets.data_file("device.json")
    if config.preset != "straight":
        files["taper_width"] = Path(config.taper_profile) if config.taper_profile else presets.data_file("taper_width.csv")
        for pol in coupler.POLARIZATIONS:
            files[f"local_index/{pol}"] = presets.data_file(f"local_index_{pol}.csv")
            files[f"kappa/{pol}"] = presets.data_file(f"kappa_{pol}.csv")
            files[f"dest_index/{pol}"] = presets.data_file(f"si_{pol}_{config.preset}.json")
            path = config.transmission.get(pol)
            files[f"transmission/{pol}"] = Path(path) if path else presets.data_file(f"transmission_{pol}.csv")
    return dict(sorted(files.items()))


def _grids(config: DeviceConfig):
    grid = jsa.signal_grid(config.pump_frequency, config.grid_span, int(config.grid_points))
    delays = hom.delay_grid(config.delay_half_span, int(config.delay_points))
    return grid, delays


def _filter(config: DeviceConfig):
    if config.filter_width_nm is None:
        return None
    return hom.SpectralFilter.from_wavelength(0.5 * config.pump_frequency, config.filter_width_nm * 1e-9)


# --- manifest ------------------------------------------------------------------------


def tool_version() -> str:
    from . import __version__

    return __version__


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: dict
    inputs: dict
    version: str
    outputs: list

    @property
    def digest(self) -> str:
        """Hash over everything that determines the outputs."""
        return payload_sha256({"command": self.command, "config": self.config, "inputs": self.inputs, "version": self.version})

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "version": self.version,
            "outputs": list(self.outputs),
            "digest": self.digest,
        }

    def write(self, out_dir) -> Path:
        return write_json(Path(out_dir) / "manifest.json", self.to_dict())


def make_manifest(
    command: str, config: DeviceConfig, outputs: Iterable[str], extra: Mapping | None = None, inputs: Mapping | None = None
) -> RunManifest:
    """``inputs`` (label -> path) defaults to the device files ``config`` reads."""
    snapshot = config.to_dict()
    if extra:
        snapshot.update(extra)
    files = input_files(config) if inputs is None else inputs
    inputs = {label: file_sha256(p) for label, p in sorted(files.items())}
    return RunManifest(command, snapshot, inputs, tool_version(), list(outputs))


# --- the staged pipeline -------------------------------------------------------------


def check_stages(stages) -> tuple[str, ...]:
    """Order ``stages`` along the chain and check it is prefix-closed.

    ``filter`` is optional: it may be left out of an otherwise complete
    chain, but it needs ``couple`` before it.
    """
    chosen = set(stages)
    unknown = chosen - set(STAGES)
    if unknown:
        raise ConfigError(f"unknown stage(s): {', '.join(sorted(unknown))}")
    core = [s for s in STAGES if s != "filter"]
    picked = [s for s in core if s in chosen]
    if picked != core[: len(picked)] or not picked:
        raise ConfigError(f"stages must form a chain starting at 'source' ({' -> '.join(STAGES)})")
    if "filter" in chosen and "couple" not in chosen:
        raise ConfigError("the 'filter' stage needs 'couple'")
    return tuple(s for s in STAGES if s in chosen)


@dataclass(frozen=True, eq=False)
class PipelineResult:
    device: Device
    states: DeviceStates
    curve: hom.HomInterferogram | None = None
    reference: hom.HomInterferogram | None = None
    report: dict | None = None
    metrology: metrology.MetrologyReport | None = None
    anyonic_curve: hom.HomInterferogram | None = None
    manifest: RunManifest | None = None
    outputs: tuple = ()


def _planned_outputs(config: DeviceConfig, stages) -> list[str]:
    out = ["state_source.csv", "state_source.json"]
    coupled = config.preset != "straight" and "couple" in stages
    if coupled:
        out += ["state_coupled.csv", "state_coupled.json"]
    if "filter" in stages and config.filter_width_nm is not None:
        out += ["state_filtered.csv", "state_filtered.json"]
    if "hom" in stages:
        out += ["interferogram.csv", "hom_report.json"]
        if config.preset != "straight":
            out.append("reference_interferogram.csv")
        if config.anyonic_alpha is not None:
            out.append("anyonic_interferogram.csv")
    if "metrology" in stages:
        out += ["fisher.csv", "metrology.json"]
    return out


def run_pipeline(config: DeviceConfig, stages: Iterable[str] = STAGES, out_dir=None, command: str = "pipeline") -> PipelineResult:
    """Run the requested stages; with ``out_dir`` set, persist every artefact.

    The manifest is written first. If a stage fails, files written by this
    run are removed and :class:`StageError` names the stage.
    """
    stages = check_stages(stages)
    out = Path(out_dir) if out_dir is not None else None
    manifest = make_manifest(command, config, _planned_outputs(config, stages), {"stages": list(stages)})
    written: list[Path] = []

    def keep(*paths):
        written.extend(Path(p) for p in paths)

    if out is not None:
        keep(manifest.write(out))

    grid, delays = _grids(config)
    filt = _filter(config) if "filter" in stages else None
    r: dict = {}
    stage = "source"
    try:
        dev = build_device(config)
        src = jsa.build_source_jsa(dev.source, grid)
        states = DeviceStates(src)
        if out is not None:
            keep(*jsa.write_state(out / "state_source.csv", src))

        if "couple" in stages:
            stage = "couple"
            if dev.has_coupler:
                T_u, T_v = device_transmissions(dev, grid)
                th_u, th_v = coupler_phases(dev.profile, grid)
                coupled = jsa.apply_coupler_phase(jsa.apply_transmission(src, T_u, T_v), th_u, th_v)
                states = DeviceStates(src, coupled, None, T_u, T_v)
                if out is not None:
                    keep(*jsa.write_state(out / "state_coupled.csv", coupled))

        if filt is not None:
            stage = "filter"
            filtered = hom.apply_bandpass(states.final, filt)
            states = dataclasses.replace(states, filtered=filtered)
            if out is not None:
                keep(*jsa.write_state(out / "state_filtered.csv", filtered))

        if "hom" in stages:
            stage = "hom"
            r.update(_hom_stage(config, dev, states, src, delays, out, keep))

        if "metrology" in stages:
            stage = "metrology"
            rep = metrology.metrology_report(states.final, delays)
            r["metrology"] = rep
            if out is not None:
                fc = rep.fi_curve
                keep(write_csv(out / "fisher.csv", ["tau_s", "P_c", "dP_dtau", "fi"], zip(fc.delays, fc.P_c, fc.dP_dtau, fc.fi)))
                keep(metrology.write_metrology_report(out / "metrology.json", rep))
    except (BiphotonError, ValueError, ArithmeticError, OSError) as exc:
        for p in written:
            p.unlink(missing_ok=True)
        raise StageError(stage, exc) from exc

    return PipelineResult(
        dev, states, r.get("curve"), r.get("reference"), r.get("report"), r.get("metrology"),
        r.get("anyonic_curve"), manifest, tuple(str(p) for p in written),
    )


def _hom_stage(config, dev, states, src, delays, out, keep) -> dict:
    curve = hom.coincidence_curve(states.final, delays)
    reference = None
    if dev.has_coupler:
        reference = hom.coincidence_curve(src, delays)
    rep = hom.analyse(curve, reference)
    extra = {"preset": config.preset, "pair_transmission": states.final.norm / src.norm}
    result = {"curve": curve, "reference": reference}
    if config.anyonic_alpha is not None:
        anyon = hom.coincidence_curve(hom.anyonic_state(states.final, config.anyonic_alpha), delays)
        extra["anyonic_alpha"] = config.anyonic_alpha
        extra["anyonic_asymmetry_score"] = hom.asymmetry_score(anyon)
        result["anyonic_curve"] = anyon
    report = {**rep.to_dict(), **extra}
    result["report"] = report
    if out is not None:
        keep(hom.write_interferogram(out / "interferogram.csv", curve))
        if reference is not None:
            keep(hom.write_interferogram(out / "reference_interferogram.csv", reference))
        if "anyonic_curve" in result:
            keep(hom.write_interferogram(out / "anyonic_interferogram.csv", result["anyonic_curve"]))
        keep(hom.write_report(out / "hom_report.json", rep, extra))
    return result


# --- taper-length sweep --------------------------------------------------------------


@dataclass(frozen=True)
class LengthPoint:
    length: float
    visibility: float
    crossed_transmission: float
    asymmetry_score: float


def crossed_transmission(profile, omega: float) -> float:
    """T_TE(omega) * T_TM(omega) from direct coupled-mode integration."""
    t_te = abs(coupler.cmt_transfer(profile, "TE", omega)[0]) ** 2
    t_tm = abs(coupler.cmt_transfer(profile, "TM", omega)[0]) ** 2
    return float(t_te * t_tm)


def sweep_taper_length(config: DeviceConfig, lengths, workers: int | None = None) -> list[LengthPoint]:
    """Visibility and crossed transmission against taper length.

    Only the coupler phase follows the length. The transmission spectrum
    stays at its reference-length values, so the visibility trend isolates
    the phase.
    """
    lengths = [float(L) for L in lengths]
    if not lengths:
        raise ConfigError("no taper lengths given")
    if any(not L > 0 for L in lengths):
        raise ConfigError("taper lengths must be positive")
    dev = build_device(config)
    if not dev.has_coupler:
        raise ConfigError("taper-length sweep needs a taper preset")
    grid, delays = _grids(config)
    src = jsa.build_source_jsa(dev.source, grid)
    T_u, T_v = device_transmissions(dev, grid)
    attenuated = jsa.apply_transmission(src, T_u, T_v)
    filt = _filter(config)
    w_c = 0.5 * config.pump_frequency

    def one(L):
        prof = coupler.rescale_length(dev.profile, L)
        th_u, th_v = coupler_phases(prof, grid)
        state = jsa.apply_coupler_phase(attenuated, th_u, th_v)
        if filt is not None:
            state = hom.apply_bandpass(state, filt)
        curve = hom.coincidence_curve(state, delays)
        return LengthPoint(L, hom.visibility(curve), crossed_transmission(prof, w_c), hom.asymmetry_score(curve))

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, lengths))
    return [one(L) for L in lengths]


def write_length_sweep(path, points: list[LengthPoint]) -> Path:
    return write_csv(
        path,
        ["length_m", "visibility", "crossed_transmission", "asymmetry_score"],
        ((p.length, p.visibility, p.crossed_transmission, p.asymmetry_score) for p in points),
    )


def propagate_config(config: DeviceConfig, couple: bool = True) -> DeviceStates:
    """Convenience wrapper: the device states for ``config`` on its own grid."""
    grid, _ = _grids(config)
    return propagate(build_device(config), grid, _filter(config), couple)
