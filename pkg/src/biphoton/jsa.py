"""One-dimensional biphoton joint spectral amplitude under a monochromatic pump.

A :class:`BiphotonSpectrum` holds phi(omega_s) on a uniform signal grid that
is symmetric about omega_p / 2, so the idler partner of grid point ``i`` is
grid point ``n - 1 - i``. The norm is carried along explicitly; transforms
that remove photons (transmission, filtering) lower it rather than
renormalising.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.integrate import trapezoid

from .dispersion import PhaseMismatchContext, group_velocity, phase_mismatch
from .errors import ConfigError, DomainError, FitError, ParseError

MIN_GRID_POINTS = 2048
DEFAULT_GRID_POINTS = 4096
DEFAULT_SPAN = 40e-9
_UNIFORM_TOL = 1e-7
_SYMMETRY_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class BiphotonSpectrum:
    pump_frequency: float
    grid: np.ndarray
    amplitude: np.ndarray
    norm: float
    pol_assignment: tuple[str, str] = ("TE", "TM")

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        amp = np.asarray(self.amplitude, dtype=complex)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "pol_assignment", tuple(self.pol_assignment))
        if grid.ndim != 1 or grid.size < MIN_GRID_POINTS:
            raise ConfigError(f"signal grid needs at least {MIN_GRID_POINTS} points, got {grid.size}")
        if amp.shape != grid.shape:
            raise ConfigError("amplitude and grid lengths differ")
        if not np.all(np.isfinite(amp)):
            raise ConfigError("amplitude contains non-finite values")
        step = (grid[-1] - grid[0]) / (grid.size - 1)
        if step <= 0 or np.max(np.abs(np.diff(grid) - step)) > _UNIFORM_TOL * step:
            raise ConfigError("signal grid must be uniform and increasing")
        if np.max(np.abs(grid + grid[::-1] - self.pump_frequency)) > _SYMMETRY_TOL * self.pump_frequency:
            raise ConfigError("signal grid must be symmetric about omega_p / 2")
        expected = _norm(grid, amp)
        if self.norm < 0 or abs(self.norm - expected) > 1e-10 * max(expected, 1e-300):
            raise ConfigError(f"norm {self.norm!r} inconsistent with amplitude ({expected!r})")
        if len(self.pol_assignment) != 2 or set(self.pol_assignment) - {"TE", "TM"}:
            raise ConfigError(f"bad polarization assignment {self.pol_assignment!r}")

    @classmethod
    def from_amplitude(cls, pump_frequency, grid, amplitude, pol_assignment=("TE", "TM")):
        grid = np.asarray(grid, dtype=float)
        amplitude = np.asarray(amplitude, dtype=complex)
        return cls(float(pump_frequency), grid, amplitude, _norm(grid, amplitude), pol_assignment)

    @property
    def degenerate_frequency(self) -> float:
        return 0.5 * self.pump_frequency

    @property
    def detuning(self) -> np.ndarray:
        """omega_s - omega_p / 2, computed without cancellation."""
        return 0.5 * (self.grid - self.grid[::-1])

    @property
    def step(self) -> float:
        return (self.grid[-1] - self.grid[0]) / (self.grid.size - 1)

    def mirrored(self) -> np.ndarray:
        """phi(omega_p - omega_s) on the signal grid."""
        return self.amplitude[::-1]

    def normalized(self) -> "BiphotonSpectrum":
        if self.norm <= 0:
            raise ConfigError("cannot normalise a spectrum with zero norm")
        return BiphotonSpectrum.from_amplitude(
            self.pump_frequency, self.grid, self.amplitude / np.sqrt(self.norm), self.pol_assignment
        )

    def with_amplitude(self, amplitude) -> "BiphotonSpectrum":
        return BiphotonSpectrum.from_amplitude(self.pump_frequency, self.grid, amplitude, self.pol_assignment)


def _norm(grid, amp) -> float:
    return float(trapezoid(np.abs(amp) ** 2, grid))


def signal_grid(pump_frequency: float, span: float = DEFAULT_SPAN, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Uniform grid symmetric about omega_p / 2.

    ``span`` is the wavelength half-width about the degenerate wavelength,
    converted to angular frequency at first order.
    """
    if points < MIN_GRID_POINTS:
        raise ConfigError(f"need at least {MIN_GRID_POINTS} grid points")
    if not span > 0:
        raise ConfigError("grid span must be positive")
    center = 0.5 * pump_frequency
    lam0 = 2 * np.pi * C_LIGHT / center
    half = center * span / lam0
    # integer ramp so that t[i] == -t[n-1-i] exactly
    t = (2.0 * np.arange(points) - (points - 1)) / (points - 1)
    return center + half * t


def build_source_jsa(ctx: PhaseMismatchContext, grid) -> BiphotonSpectrum:
    """Phase-matching amplitude of a waveguide of length L, normalised to unit norm."""
    grid = np.asarray(grid, dtype=float)
    wp = ctx.pump_frequency
    half = 0.5 * phase_mismatch(ctx, grid) * ctx.length
    vs = group_velocity(ctx.signal_model, grid)
    vi = group_velocity(ctx.idler_model, wp - grid)
    phi = np.exp(1j * half) * np.sinc(half / np.pi) / np.sqrt(vs * vi)
    state = BiphotonSpectrum.from_amplitude(wp, grid, phi)
    return state.normalized()


def apply_transmission(state: BiphotonSpectrum, T_u, T_v) -> BiphotonSpectrum:
    """Scale |phi|^2 by T_u(omega_s) T_v(omega_p - omega_s); the norm drops accordingly."""
    tu = np.asarray(T_u(state.grid), dtype=float)
    tv = np.asarray(T_v(state.pump_frequency - state.grid), dtype=float)
    return state.with_amplitude(state.amplitude * np.sqrt(tu * tv))


def _phase_values(theta, omega, label):
    vals = np.asarray(theta(omega) if callable(theta) else theta, dtype=float)
    if vals.ndim == 0:
        vals = np.full(omega.shape, float(vals))
    if vals.shape != omega.shape:
        raise DomainError(f"{label}: phase samples do not match the grid")
    if not np.all(np.isfinite(vals)):
        raise DomainError(f"{label}: phase undefined at {int(np.sum(~np.isfinite(vals)))} grid point(s)")
    return vals


def apply_coupler_phase(state: BiphotonSpectrum, theta_u, theta_v) -> BiphotonSpectrum:
    """Multiply by exp(i [theta_u(omega_s) + theta_v(omega_p - omega_s)]).

    Each phase is a callable of angular frequency or an array sampled on
    the signal grid (``theta_v`` is then mirrored internally).
    """
    tu = _phase_values(theta_u, state.grid, "theta_u")
    if callable(theta_v):
        tv = _phase_values(theta_v, state.pump_frequency - state.grid, "theta_v")
    else:
        tv = _phase_values(theta_v, state.grid, "theta_v")[::-1]
    amp = state.amplitude * np.exp(1j * (tu + tv))
    # a pure phase leaves |phi| and the norm untouched
    return BiphotonSpectrum(state.pump_frequency, state.grid, amp, state.norm, state.pol_assignment)


@dataclass(frozen=True)
class PhaseCurve:
    omega: np.ndarray
    values: np.ndarray
    masked: np.ndarray

    @property
    def n_masked(self) -> int:
        return int(np.sum(self.masked))


def _unwrap_from_center(wrapped, valid):
    """Unwrap outward from the middle of the grid; invalid points are filled linearly."""
    n = wrapped.size
    idx = np.flatnonzero(valid)
    out = np.full(n, np.nan)
    if idx.size == 0:
        return out
    mid = (n - 1) / 2
    k = int(np.argmin(np.abs(idx - mid)))
    right = np.unwrap(wrapped[idx[k:]])
    left = np.unwrap(wrapped[idx[: k + 1]][::-1])[::-1]
    vals = np.concatenate([left[:-1], right])
    out[idx] = vals
    if idx.size < n:
        out = np.interp(np.arange(n), idx, vals)
    return out


def delta_theta(state: BiphotonSpectrum) -> PhaseCurve:
    """arg phi(omega_s) - arg phi(omega_p - omega_s), unwrapped from omega_p / 2."""
    q = state.amplitude * np.conj(state.mirrored())
    valid = q != 0
    vals = _unwrap_from_center(np.angle(q), valid)
    return PhaseCurve(state.grid, vals, ~valid)


def unwrapped_phase(state: BiphotonSpectrum) -> PhaseCurve:
    valid = state.amplitude != 0
    return PhaseCurve(state.grid, _unwrap_from_center(np.angle(state.amplitude), valid), ~valid)


@dataclass(frozen=True)
class PhaseCoefficients:
    """Taylor coefficients of the phase in x = omega_p/2 - omega_s (SI units, s^n)."""

    coeffs: tuple[float, ...]

    @property
    def theta0(self) -> float:
        return self.coeffs[0]

    @property
    def beta1(self) -> float:
        return self.coeffs[1]

    @property
    def beta2(self) -> float:
        return self.coeffs[2] if len(self.coeffs) > 2 else 0.0

    @property
    def beta3(self) -> float:
        return self.coeffs[3] if len(self.coeffs) > 3 else 0.0

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)


def fit_phase_polynomial(state: BiphotonSpectrum, order: int = 3, window: float | None = None) -> PhaseCoefficients:
    """|phi|^2-weighted least-squares fit of the unwrapped phase.

    ``window`` is the half-width (rad/s) about omega_p / 2 that enters the
    fit; ``None`` uses the whole grid.
    """
    if order < 0:
        raise ConfigError("polynomial order must be non-negative")
    x = -state.detuning
    if window is not None:
        if not window > 0:
            raise ConfigError("fit window must be positive")
        if window > np.max(np.abs(x)) * (1 + 1e-12):
            raise ConfigError("fit window extends beyond the grid")
        sel = np.abs(x) <= window
    else:
        sel = np.ones(x.shape, dtype=bool)
    weights = np.abs(state.amplitude[sel]) ** 2
    if np.count_nonzero(weights) < order + 1:
        raise FitError(f"need at least {order + 1} non-zero samples in the fit window")
    phase = unwrapped_phase(state).values[sel]
    xs = x[sel]
    scale = np.max(np.abs(xs))
    if scale == 0:
        raise FitError("fit window contains a single frequency")
    V = np.vander(xs / scale, order + 1, increasing=True)
    sw = np.sqrt(weights / weights.max())
    sol, _, rank, _ = np.linalg.lstsq(V * sw[:, None], phase * sw, rcond=None)
    if rank < order + 1:
        raise FitError("rank-deficient phase fit")
    return PhaseCoefficients(tuple(float(a / scale**k) for k, a in enumerate(sol)))


# --- serialization ------------------------------------------------------------


def write_state(path, state: BiphotonSpectrum) -> tuple[Path, Path]:
    """CSV of (omega_s, Re phi, Im phi) plus a JSON sidecar next to it."""
    from .io import atomic_write_text, format_csv

    path = Path(path)
    rows = zip(state.grid, state.amplitude.real, state.amplitude.imag)
    atomic_write_text(path, format_csv(["omega_s_rad_per_s", "re_phi", "im_phi"], rows))
    meta = {
        "pump_frequency": state.pump_frequency,
        "norm": state.norm,
        "pol_assignment": list(state.pol_assignment),
    }
    sidecar = path.with_suffix(".json")
    atomic_write_text(sidecar, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, sidecar


def read_state(path) -> BiphotonSpectrum:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    grid, amp = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["omega_s_rad_per_s", "re_phi", "im_phi"]:
            raise ParseError(f"{path}: unexpected header", line=1)
        for lineno, row in enumerate(reader, start=2):
            try:
                grid.append(float(row[0]))
                amp.append(complex(float(row[1]), float(row[2])))
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path}: cannot parse row", line=lineno) from exc
    return BiphotonSpectrum.from_amplitude(
        meta["pump_frequency"], grid, amp, meta.get("pol_assignment", ("TE", "TM"))
    )

