"""Hong-Ou-Mandel interferograms and their analysis.

The coincidence probability for a monochromatic pump and a lossless
balanced splitter is

    P_c(tau) = 1/2 (1 - Re int q(omega_s) exp(i Omega tau) d omega_s),

with q = phi(omega_s) phi*(omega_p - omega_s) and Omega = omega_p - 2 omega_s.
Only the odd part of the spectral phase survives in q, which is what makes
dip shifts and exchange-type asymmetries visible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.interpolate import CubicSpline

from .errors import ConfigError, CoverageError, NoDipError, UndefinedScoreError
from .io import write_csv, write_json
from .jsa import BiphotonSpectrum

MIN_DELAY_POINTS = 1024
BASELINE_FRACTION = 0.10
_CHUNK = 256


def delay_grid(half_span: float, points: int = 2049) -> np.ndarray:
    """Uniform delays in [-half_span, half_span], exactly antisymmetric."""
    if not half_span > 0:
        raise ConfigError("delay half-span must be positive")
    if points < MIN_DELAY_POINTS:
        raise ConfigError(f"need at least {MIN_DELAY_POINTS} delay points")
    t = (2.0 * np.arange(points) - (points - 1)) / (points - 1)
    return half_span * t


def estimate_baseline(P: np.ndarray) -> float:
    """Mean of P over the outer 10 % of the delay grid (5 % per side)."""
    k = max(1, int(round(0.5 * BASELINE_FRACTION * P.size)))
    return float(np.mean(np.concatenate([P[:k], P[-k:]])))


@dataclass(frozen=True, eq=False)
class HomInterferogram:
    delays: np.ndarray
    P_c: np.ndarray
    baseline: float

    def __post_init__(self):
        tau = np.asarray(self.delays, dtype=float)
        P = np.asarray(self.P_c, dtype=float)
        object.__setattr__(self, "delays", tau)
        object.__setattr__(self, "P_c", P)
        if tau.ndim != 1 or tau.size < MIN_DELAY_POINTS or P.shape != tau.shape:
            raise ConfigError(f"interferogram needs >= {MIN_DELAY_POINTS} matching delay samples")
        step = (tau[-1] - tau[0]) / (tau.size - 1)
        if step <= 0 or np.max(np.abs(np.diff(tau) - step)) > 1e-7 * step:
            raise ConfigError("delay grid must be uniform and increasing")
        if np.max(np.abs(tau + tau[::-1])) > 1e-9 * step:
            raise ConfigError("delay grid must be symmetric about zero")
        if np.any(P < 0) or np.any(P > 1) or not np.all(np.isfinite(P)):
            raise ConfigError("coincidence probability must lie in [0, 1]")
        if not 0 < self.baseline <= 1:
            raise ConfigError(f"baseline {self.baseline!r} outside (0, 1]")

    @property
    def step(self) -> float:
        return (self.delays[-1] - self.delays[0]) / (self.delays.size - 1)

    @classmethod
    def from_samples(cls, delays, P_c) -> "HomInterferogram":
        P = np.asarray(P_c, dtype=float)
        return cls(np.asarray(delays, dtype=float), P, estimate_baseline(P))


def _trapezoid_weights(n: int, step: float) -> np.ndarray:
    w = np.full(n, step)
    w[0] = w[-1] = 0.5 * step
    return w


def overlap(state: BiphotonSpectrum, delays, derivative: bool = False):
    """Re int q e^{i Omega tau} d omega_s for a normalised copy of ``state``.

    With ``derivative`` also returns the tau-derivative of the same integral.
    """
    if state.norm <= 0:
        raise ConfigError("cannot form an interferogram from a zero-norm state")
    tau = np.asarray(delays, dtype=float)
    q = state.amplitude * np.conj(state.mirrored()) / state.norm
    big_omega = -2.0 * state.detuning
    wq = q * _trapezoid_weights(q.size, state.step)
    re = np.empty(tau.size)
    dre = np.empty(tau.size) if derivative else None
    for start in range(0, tau.size, _CHUNK):
        sl = slice(start, min(start + _CHUNK, tau.size))
        kernel = np.exp(1j * np.outer(tau[sl], big_omega))
        re[sl] = np.real(kernel @ wq)
        if derivative:
            dre[sl] = np.real(kernel @ (1j * big_omega * wq))
    return (re, dre) if derivative else re


def coincidence_curve(state: BiphotonSpectrum, delays) -> HomInterferogram:
    tau = np.asarray(delays, dtype=float)
    P = 0.5 * (1.0 - overlap(state, tau))
    # round-off can push an ideal dip a hair below zero
    P = np.clip(P, 0.0, 1.0)
    return HomInterferogram.from_samples(tau, P)


def _refined_min(curve: HomInterferogram) -> tuple[float, float]:
    P = curve.P_c
    i = int(np.argmin(P))
    if i == 0 or i == P.size - 1:
        raise NoDipError("coincidence curve has no interior minimum")
    y0, y1, y2 = P[i - 1 : i + 2]
    curv = y0 - 2 * y1 + y2
    if curv <= 0:
        return float(curve.delays[i]), float(y1)
    off = 0.5 * (y0 - y2) / curv
    return float(curve.delays[i] + off * curve.step), float(y1 - 0.25 * (y0 - y2) * off)


def dip_position(curve: HomInterferogram) -> float:
    return _refined_min(curve)[0]


def dip_shift(curve: HomInterferogram, reference: HomInterferogram) -> float:
    """Refined dip location of ``curve`` minus that of ``reference`` (s)."""
    if curve.delays.shape != reference.delays.shape or not np.allclose(
        curve.delays, reference.delays, rtol=0, atol=1e-9 * curve.step
    ):
        raise ConfigError("curves must share the delay grid")
    return dip_position(curve) - dip_position(reference)


def visibility(curve: HomInterferogram) -> float:
    """(baseline - refined minimum) / baseline, clipped to [0, 1]."""
    _, pmin = _refined_min(curve)
    v = (curve.baseline - pmin) / curve.baseline
    return float(min(max(v, 0.0), 1.0))


def dip_fwhm(curve: HomInterferogram) -> float:
    """Full width of the dip at half its depth, by linear interpolation."""
    _, pmin = _refined_min(curve)
    level = 0.5 * (curve.baseline + pmin)
    P, tau = curve.P_c, curve.delays
    i = int(np.argmin(P))
    above = P >= level
    right = np.flatnonzero(above[i:])
    left = np.flatnonzero(above[: i + 1][::-1])
    if right.size == 0 or left.size == 0:
        raise NoDipError("dip does not recover to half depth inside the delay window")
    r, ll = i + right[0], i - left[0]

    def cross(a, b):
        return tau[a] + (level - P[a]) * (tau[b] - tau[a]) / (P[b] - P[a])

    return float(cross(r - 1, r) - cross(ll + 1, ll))


def _centroid(spline, tau, step, guess, max_iter=200):
    """Centre c at which g^2, taken over the largest window symmetric about c, has its centroid."""
    c = guess
    for _ in range(max_iter):
        half = min(tau[-1] - c, c - tau[0])
        n = int(np.floor(half / step + 1e-9))
        t = c + step * np.arange(-n, n + 1)
        g2 = spline(t) ** 2
        total = np.sum(g2)
        if total == 0:
            break
        c_new = float(np.sum(t * g2) / total)
        if abs(c_new - c) <= 1e-9 * step:
            return c_new
        c = c_new
    return c


def asymmetry_score(curve: HomInterferogram, center: float | None = None, raw: bool = False) -> float:
    """Normalised odd-part energy of g(tau) = P_c(tau) - baseline.

    The curve is first re-centred. By default the centre is the point whose
    symmetric window has its g^2 centroid at the middle; pass ``center`` to
    override it. ``raw=True`` scores P_c itself instead of g.
    """
    tau, step = curve.delays, curve.step
    g = curve.P_c if raw else curve.P_c - curve.baseline
    if not np.any(g):
        raise UndefinedScoreError("baseline-subtracted interferogram is identically zero")
    spline = CubicSpline(tau, g)
    if center is None:
        g2 = g**2
        center = _centroid(spline, tau, step, float(np.sum(tau * g2) / np.sum(g2)))
    half = min(tau[-1] - center, center - tau[0])
    if half <= 0:
        raise UndefinedScoreError("scoring centre sits at the edge of the delay window")
    n = int(np.floor(half / step + 1e-9))
    k = np.arange(-n, n + 1)
    shift = (center - tau[0]) / step
    j = int(round(shift))
    if abs(shift - j) < 1e-9:
        # centre on a grid node: use the samples themselves
        gp = g[j - n : j + n + 1]
    else:
        gp = spline(center + step * k)
    gm = gp[::-1]
    w = _trapezoid_weights(gp.size, step)
    den = np.sum(w * gp**2)
    if den == 0:
        raise UndefinedScoreError("interferogram vanishes in the scoring window")
    s = np.sqrt(np.sum(w * 0.25 * (gp - gm) ** 2) / den)
    return float(min(max(s, 0.0), 1.0))


# --- filters and synthetic phases ---------------------------------------------


@dataclass(frozen=True)
class SpectralFilter:
    center: float
    full_width: float
    shape: str = "rectangular"

    def __post_init__(self):
        if self.shape != "rectangular":
            raise ConfigError(f"unsupported filter shape {self.shape!r}")
        if not self.full_width > 0:
            raise ConfigError("filter width must be positive")

    @classmethod
    def from_wavelength(cls, center: float, width: float) -> "SpectralFilter":
        """Rectangular filter of wavelength ``width`` (m) at angular frequency ``center``."""
        return cls(center, center**2 * width / (2 * np.pi * C_LIGHT))


def apply_bandpass(state: BiphotonSpectrum, filt: SpectralFilter) -> BiphotonSpectrum:
    half = 0.5 * filt.full_width
    tol = 1e-9 * state.step
    if filt.center - half < state.grid[0] - tol or filt.center + half > state.grid[-1] + tol:
        raise CoverageError("filter pass band extends beyond the state grid")
    inside = np.abs(state.grid - filt.center) <= half * (1 + 1e-12)
    return state.with_amplitude(np.where(inside, state.amplitude, 0.0))


def anyonic_phase(alpha: float, pump_frequency: float):
    """Step phase sign(omega_p - 2 omega) * alpha * pi / 2."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError("exchange parameter alpha must lie in [0, 1]")

    def theta(omega):
        return np.sign(pump_frequency - 2.0 * np.asarray(omega, dtype=float)) * alpha * np.pi / 2

    return theta


def anyonic_state(state: BiphotonSpectrum, alpha: float) -> BiphotonSpectrum:
    """Exchange-symmetric modulus of ``state`` carrying the anyonic step phase.

    The modulus is the geometric mean of |phi| and its mirror, so the
    product |phi(omega_s) phi(omega_p - omega_s)| is unchanged.
    """
    mod = np.sqrt(np.abs(state.amplitude) * np.abs(state.mirrored()))
    phase = np.sign(-state.detuning) * alpha * np.pi / 2
    return state.with_amplitude(mod * np.exp(1j * phase))


# --- outputs --------------------------------------------------------------------


@dataclass(frozen=True)
class HomReport:
    visibility: float
    dip_shift_s: float | None
    asymmetry_score: float
    baseline: float

    def to_dict(self) -> dict:
        return {
            "visibility": self.visibility,
            "dip_shift_s": self.dip_shift_s,
            "asymmetry_score": self.asymmetry_score,
            "baseline": self.baseline,
        }


def analyse(curve: HomInterferogram, reference: HomInterferogram | None = None) -> HomReport:
    shift = dip_shift(curve, reference) if reference is not None else None
    return HomReport(visibility(curve), shift, asymmetry_score(curve), curve.baseline)


def write_interferogram(path, curve: HomInterferogram) -> Path:
    return write_csv(path, ["tau_s", "P_c"], zip(curve.delays, curve.P_c))


def write_report(path, report: HomReport, extra: dict | None = None) -> Path:
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    return write_json(path, payload)


def read_interferogram(path) -> HomInterferogram:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return HomInterferogram.from_samples(data[:, 0], data[:, 1])


def report_from_json(path) -> HomReport:
    d = json.loads(Path(path).read_text())
    return HomReport(d["visibility"], d["dip_shift_s"], d["asymmetry_score"], d["baseline"])
