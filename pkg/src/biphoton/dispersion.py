"""Modal dispersion: effective index, wavevector, group velocity, phase mismatch.

Models are either a polynomial in ``omega - ref_omega`` or a cubic-spline
table of ``(omega, n_eff)`` pairs. All evaluations accept scalars or arrays
and refuse to extrapolate outside the validity window.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.interpolate import CubicSpline

from .errors import ConfigError, DomainError, ParseError
from .io import write_csv

MODE_LABELS = (
    "pump_TE",
    "signal_TE",
    "signal_TM",
    "idler_TE",
    "idler_TM",
    "si_TE",
    "si_TM",
)

_VALIDITY_SAMPLES = 513


def omega_from_wavelength(wavelength):
    return 2.0 * np.pi * C_LIGHT / np.asarray(wavelength, dtype=float)


def wavelength_from_omega(omega):
    return 2.0 * np.pi * C_LIGHT / np.asarray(omega, dtype=float)


@dataclass(frozen=True, eq=False)
class DispersionModel:
    """Effective index of one guided mode versus angular frequency.

    Build with :meth:`polynomial` or :meth:`tabulated`. ``window`` is the
    closed interval (rad/s) where the model may be evaluated.
    """

    mode_label: str
    window: tuple[float, float]
    ref_omega: float | None = None
    coeffs: tuple[float, ...] | None = None
    table_omega: np.ndarray | None = None
    table_index: np.ndarray | None = None
    _spline: CubicSpline | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        lo, hi = self.window
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ConfigError(f"{self.mode_label}: validity window must be finite and ordered, got {self.window}")
        if self.is_tabulated:
            w = self.table_omega
            if w.ndim != 1 or w.size < 4 or w.size != self.table_index.size:
                raise ConfigError(f"{self.mode_label}: table needs >= 4 matching (omega, n_eff) rows")
            if np.any(np.diff(w) <= 0):
                raise ConfigError(f"{self.mode_label}: table frequencies must be strictly increasing")
            object.__setattr__(self, "_spline", CubicSpline(w, self.table_index))
        elif self.coeffs is None or self.ref_omega is None:
            raise ConfigError(f"{self.mode_label}: need either polynomial coefficients or a table")
        probe = _evaluate(self, np.linspace(lo, hi, _VALIDITY_SAMPLES))
        if np.any(probe <= 1.0):
            raise ConfigError(f"{self.mode_label}: n_eff must exceed 1 over the validity window")

    @property
    def is_tabulated(self) -> bool:
        return self.table_omega is not None

    @classmethod
    def polynomial(cls, mode_label, ref_omega, coeffs, window):
        return cls(
            mode_label=mode_label,
            window=(float(window[0]), float(window[1])),
            ref_omega=float(ref_omega),
            coeffs=tuple(float(x) for x in coeffs),
        )

    @classmethod
    def constant(cls, mode_label, n0, window):
        return cls.polynomial(mode_label, 0.5 * (window[0] + window[1]), [n0], window)

    @classmethod
    def tabulated(cls, mode_label, omega, n_eff, window=None):
        omega = np.asarray(omega, dtype=float)
        n_eff = np.asarray(n_eff, dtype=float)
        if window is None:
            window = (omega[0], omega[-1])
        if window[0] < omega[0] or window[1] > omega[-1]:
            raise ConfigError(f"{mode_label}: validity window exceeds the tabulated range")
        return cls(
            mode_label=mode_label,
            window=(float(window[0]), float(window[1])),
            table_omega=omega,
            table_index=n_eff,
        )

    def __call__(self, omega):
        return eval_index(self, omega)


def _evaluate(model: DispersionModel, omega: np.ndarray) -> np.ndarray:
    if model.is_tabulated:
        return model._spline(omega)
    x = omega - model.ref_omega
    out = np.zeros_like(x, dtype=float)
    for a in reversed(model.coeffs):
        out = out * x + a
    return out


def _check_window(model: DispersionModel, omega: np.ndarray) -> None:
    lo, hi = model.window
    if np.any(~np.isfinite(omega)) or np.any(omega < lo) or np.any(omega > hi):
        bad = omega[(omega < lo) | (omega > hi) | ~np.isfinite(omega)]
        raise DomainError(
            f"{model.mode_label}: omega={bad.flat[0]:.6e} rad/s outside validity window "
            f"[{lo:.6e}, {hi:.6e}] rad/s"
        )


def eval_index(model: DispersionModel, omega):
    """Effective index at ``omega`` (rad/s)."""
    w = np.asarray(omega, dtype=float)
    _check_window(model, w)
    n = _evaluate(model, w)
    return n if n.ndim else float(n)


def wavevector(model: DispersionModel, omega):
    """k = n_eff(omega) * omega / c, in rad/m."""
    w = np.asarray(omega, dtype=float)
    k = eval_index(model, w) * w / C_LIGHT
    return k if np.ndim(k) else float(k)


def _k_unchecked(model, omega):
    return _evaluate(model, omega) * omega / C_LIGHT


def group_velocity(model: DispersionModel, omega, rel_step: float = 1e-6):
    """Group velocity (dk/domega)^-1 from a 5-point central difference.

    The step is ``rel_step * omega``; the whole stencil must sit inside the
    validity window.
    """
    w = np.asarray(omega, dtype=float)
    h = rel_step * w
    lo, hi = model.window
    if np.any(w - 2 * h < lo) or np.any(w + 2 * h > hi):
        raise DomainError(
            f"{model.mode_label}: finite-difference stencil around omega leaves the validity window "
            f"[{lo:.6e}, {hi:.6e}] rad/s"
        )
    dk = (
        -_k_unchecked(model, w + 2 * h)
        + 8 * _k_unchecked(model, w + h)
        - 8 * _k_unchecked(model, w - h)
        + _k_unchecked(model, w - 2 * h)
    ) / (12 * h)
    vg = 1.0 / dk
    return vg if vg.ndim else float(vg)


def group_index(model: DispersionModel, omega):
    return C_LIGHT / np.asarray(group_velocity(model, omega))


@dataclass(frozen=True, eq=False)
class PhaseMismatchContext:
    pump_frequency: float
    pump_model: DispersionModel
    signal_model: DispersionModel
    idler_model: DispersionModel
    length: float

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigError("waveguide length must be positive")
        wp = self.pump_frequency
        _check_window(self.pump_model, np.asarray(wp))
        _check_window(self.signal_model, np.asarray(wp / 2))
        _check_window(self.idler_model, np.asarray(wp / 2))

    @property
    def degenerate_frequency(self) -> float:
        return 0.5 * self.pump_frequency


def phase_mismatch(ctx: PhaseMismatchContext, omega_s):
    """Delta k(omega_s) = k_p(omega_p) - k_s(omega_s) - k_i(omega_p - omega_s), rad/m."""
    ws = np.asarray(omega_s, dtype=float)
    wp = ctx.pump_frequency
    dk = wavevector(ctx.pump_model, wp) - wavevector(ctx.signal_model, ws) - wavevector(ctx.idler_model, wp - ws)
    return dk if np.ndim(dk) else float(dk)


# --- file formats ---------------------------------------------------------


def read_dispersion_table(path, mode_label: str, window=None) -> DispersionModel:
    """Read a ``omega_rad_per_s,n_eff`` CSV."""
    path = Path(path)
    omega, n = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["omega_rad_per_s", "n_eff"]:
            raise ParseError(f"{path}: expected header 'omega_rad_per_s,n_eff'", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                omega.append(float(row[0]))
                n.append(float(row[1]))
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path}: cannot parse row {row!r}", line=lineno) from exc
    return DispersionModel.tabulated(mode_label, omega, n, window)


def write_dispersion_table(path, model: DispersionModel, omega=None) -> None:
    if omega is None:
        omega = model.table_omega if model.is_tabulated else np.linspace(*model.window, 257)
    n = eval_index(model, omega)
    write_csv(path, ["omega_rad_per_s", "n_eff"], zip(np.atleast_1d(omega), np.atleast_1d(n)))


def read_dispersion_polynomial(path, mode_label: str) -> DispersionModel:
    """Read ``{"ref_omega": ..., "coeffs": [...], "window": [lo, hi]}``; coeffs ascending."""
    try:
        spec = json.loads(Path(path).read_text())
        window = spec.get("window")
        if window is None:
            raise ConfigError(f"{path}: polynomial dispersion file needs a 'window'")
        return DispersionModel.polynomial(mode_label, spec["ref_omega"], spec["coeffs"], window)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: malformed polynomial dispersion file ({exc})") from exc


def polynomial_to_dict(model: DispersionModel) -> dict:
    return {"ref_omega": model.ref_omega, "coeffs": list(model.coeffs), "window": list(model.window)}


def load_dispersion(path, mode_label: str) -> DispersionModel:
    path = Path(path)
    if path.suffix.lower() == ".json":
        return read_dispersion_polynomial(path, mode_label)
    return read_dispersion_table(path, mode_label)
