"""A complete device: SPDC source plus an optional tapered coupler.

The signal photon (TE) and idler photon (TM) each leave the source through
the coupler section of their own polarization. Measured transmission
spectra, when supplied, override the simulated ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coupler import TaperProfile, TransmissionSpectrum, rescale_length, taper_phase, transmission_spectrum
from .dispersion import PhaseMismatchContext
from .hom import SpectralFilter, apply_bandpass
from .jsa import BiphotonSpectrum, apply_coupler_phase, apply_transmission, build_source_jsa

SIGNAL_POL = "TE"
IDLER_POL = "TM"


@dataclass(frozen=True, eq=False)
class Device:
    name: str
    source: PhaseMismatchContext
    profile: TaperProfile | None = None
    transmission: dict | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def has_coupler(self) -> bool:
        return self.profile is not None

    def with_length(self, length: float) -> "Device":
        if self.profile is None:
            raise ValueError("device has no taper to rescale")
        return Device(self.name, self.source, rescale_length(self.profile, length), self.transmission, self.metadata)

    def straight(self) -> "Device":
        return Device("straight", self.source, None, None, {"preset": "straight"})


def coupler_phases(profile: TaperProfile, grid) -> tuple[np.ndarray, np.ndarray]:
    """Signal-arm and idler-arm transfer phases, both sampled on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    return taper_phase(profile, SIGNAL_POL, grid), taper_phase(profile, IDLER_POL, grid)


def device_transmissions(device: Device, grid):
    if device.transmission:
        return device.transmission[SIGNAL_POL], device.transmission[IDLER_POL]
    return (
        transmission_spectrum(device.profile, SIGNAL_POL, grid),
        transmission_spectrum(device.profile, IDLER_POL, grid),
    )


@dataclass(frozen=True, eq=False)
class DeviceStates:
    source: BiphotonSpectrum
    coupled: BiphotonSpectrum | None = None
    filtered: BiphotonSpectrum | None = None
    T_u: TransmissionSpectrum | None = None
    T_v: TransmissionSpectrum | None = None

    @property
    def final(self) -> BiphotonSpectrum:
        for s in (self.filtered, self.coupled, self.source):
            if s is not None:
                return s
        raise AssertionError("unreachable")


def propagate(device: Device, grid, filt: SpectralFilter | None = None, couple: bool = True) -> DeviceStates:
    src = build_source_jsa(device.source, grid)
    coupled = None
    T_u = T_v = None
    if couple and device.has_coupler:
        T_u, T_v = device_transmissions(device, src.grid)
        th_u, th_v = coupler_phases(device.profile, src.grid)
        coupled = apply_coupler_phase(apply_transmission(src, T_u, T_v), th_u, th_v)
    filtered = None
    if filt is not None:
        filtered = apply_bandpass(coupled if coupled is not None else src, filt)
    return DeviceStates(src, coupled, filtered, T_u, T_v)
