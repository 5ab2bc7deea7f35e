"""Tapered evanescent coupler between a source guide and a destination guide.

Each polarization is described by a two-guide coupled-local-mode model:
the source-guide index depends on the local width ``w(z)`` and frequency,
the destination-guide index only on frequency, and a scalar coupling
coefficient ``kappa(omega)`` links them. From this we get supermode
indices, the adiabatically followed transfer phase, a direct coupled-mode
integration, an adiabaticity score and transmission spectra.
"""

from __future__ import annotations

import csv
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .dispersion import DispersionModel, eval_index
from .io import write_csv
from .errors import ConfigError, CoverageError, DegenerateCrossingError, DomainError, ParseError, StiffnessError

POLARIZATIONS = ("TE", "TM")
PROVENANCES = ("measured-file", "simulated", "synthetic-stand-in")

CMT_RTOL = 1e-10
CMT_ATOL = 1e-12
_CHUNK = 512


class LocalIndexTable:
    """Source-guide index on a (width, omega) grid, bicubic-spline interpolated.

    Calling ``table(w, omega)`` broadcasts its arguments like a numpy ufunc.
    """

    def __init__(self, widths, omegas, n_eff):
        w = np.asarray(widths, dtype=float)
        o = np.asarray(omegas, dtype=float)
        n = np.asarray(n_eff, dtype=float)
        if n.shape != (w.size, o.size):
            raise ConfigError(f"local index table shape {n.shape} does not match grid ({w.size}, {o.size})")
        if w.size < 4 or o.size < 4:
            raise ConfigError("local index table needs at least 4 widths and 4 frequencies")
        if np.any(np.diff(w) <= 0) or np.any(np.diff(o) <= 0):
            raise ConfigError("local index table axes must be strictly increasing")
        if np.any(w <= 0):
            raise ConfigError("local index table widths must be positive")
        self.widths, self.omegas, self.n_eff = w, o, n
        # normalised coordinates keep FITPACK well conditioned
        self._w0, self._ws = w[0], w[-1] - w[0]
        self._o0, self._os = o[0], o[-1] - o[0]
        self._spl = RectBivariateSpline((w - self._w0) / self._ws, (o - self._o0) / self._os, n, kx=3, ky=3, s=0)

    @property
    def width_range(self):
        return self.widths[0], self.widths[-1]

    @property
    def omega_range(self):
        return self.omegas[0], self.omegas[-1]

    def __call__(self, w, omega):
        w = np.asarray(w, dtype=float)
        omega = np.asarray(omega, dtype=float)
        lo, hi = self.width_range
        if np.any(w < lo * (1 - 1e-12)) or np.any(w > hi * (1 + 1e-12)):
            raise DomainError(f"width outside local index table range [{lo:.4e}, {hi:.4e}] m")
        lo, hi = self.omega_range
        if np.any(omega < lo) or np.any(omega > hi):
            raise DomainError(f"omega outside local index table range [{lo:.6e}, {hi:.6e}] rad/s")
        x = (w - self._w0) / self._ws
        y = (omega - self._o0) / self._os
        if x.ndim == 2 and y.ndim == 2 and x.shape[1] == 1 and y.shape[0] == 1:
            return self._outer(x[:, 0], y[0, :])
        x, y = np.broadcast_arrays(x, y)
        return self._spl.ev(x.ravel(), y.ravel()).reshape(x.shape)

    def _outer(self, x, y):
        # tensor-product evaluation needs sorted axes; undo the sort afterwards
        ix, iy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
        vals = self._spl(x[ix], y[iy], grid=True)
        out = np.empty_like(vals)
        out[np.ix_(ix, iy)] = vals
        return out


class KappaTable:
    """Coupling coefficient kappa(omega) in rad/m, cubic-spline interpolated."""

    def __init__(self, omegas, kappa):
        self.omegas = np.asarray(omegas, dtype=float)
        self.kappa = np.asarray(kappa, dtype=float)
        if np.any(self.kappa < 0):
            raise ConfigError("coupling coefficient must be non-negative")
        if self.omegas.size < 4 or np.any(np.diff(self.omegas) <= 0):
            raise ConfigError("kappa table needs >= 4 strictly increasing frequencies")
        self._spl = CubicSpline(self.omegas, self.kappa)

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        if np.any(omega < self.omegas[0]) or np.any(omega > self.omegas[-1]):
            raise DomainError(
                f"omega outside kappa table range [{self.omegas[0]:.6e}, {self.omegas[-1]:.6e}] rad/s"
            )
        return np.maximum(self._spl(omega), 0.0)


def constant_kappa(value: float) -> Callable:
    if value < 0:
        raise ConfigError("coupling coefficient must be non-negative")
    return lambda omega: np.full(np.shape(omega), float(value))


@dataclass(frozen=True, eq=False)
class LocalModes:
    """Coupled-local-mode data for one polarization.

    ``source_index(w, omega)`` and ``kappa(omega)`` are callables (tables
    or analytic functions); ``loss_source``/``loss_dest`` are power
    attenuation coefficients in 1/m.
    """

    source_index: Callable
    dest_model: DispersionModel
    kappa: Callable
    loss_source: float = 0.0
    loss_dest: float = 0.0


@dataclass(frozen=True, eq=False)
class TaperProfile:
    length: float
    z: np.ndarray
    width: np.ndarray
    modes: dict
    name: str = "custom"
    _width_spline: CubicSpline | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        w = np.asarray(self.width, dtype=float)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "width", w)
        if z.ndim != 1 or z.size < 64 or w.shape != z.shape:
            raise ConfigError("width profile needs >= 64 matching (z, w) samples")
        if np.any(np.diff(z) <= 0):
            raise ConfigError("z samples must be strictly increasing")
        if z[0] != 0.0 or not np.isclose(z[-1], self.length, rtol=1e-12, atol=0):
            raise ConfigError("z samples must start at 0 and end at the taper length")
        if np.any(w <= 0):
            raise ConfigError("widths must be positive")
        for pol in self.modes:
            if pol not in POLARIZATIONS:
                raise ConfigError(f"unknown polarization {pol!r}")
        object.__setattr__(self, "_width_spline", CubicSpline(z, w))

    def width_at(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z < 0) or np.any(z > self.length * (1 + 1e-12)):
            raise DomainError(f"z outside taper [0, {self.length:.6e}] m")
        return self._width_spline(z)

    def local_modes(self, pol: str) -> LocalModes:
        try:
            return self.modes[pol]
        except KeyError:
            raise ConfigError(f"profile has no local-mode data for polarization {pol!r}") from None


def rescale_length(profile: TaperProfile, length: float) -> TaperProfile:
    """Same width law stretched onto a new taper length."""
    if not length > 0:
        raise ConfigError("taper length must be positive")
    z = profile.z * (length / profile.length)
    z[-1] = length
    return replace(profile, length=float(length), z=z)


def _index_scale(omega):
    return C_LIGHT / omega


def _local(profile: TaperProfile, pol: str, z: np.ndarray, omega: np.ndarray):
    """n_a (len(z), len(omega)), n_b (len(omega)), K = kappa c / omega (len(omega))."""
    modes = profile.local_modes(pol)
    w = profile.width_at(z)
    n_a = modes.source_index(w[:, None], omega[None, :])
    n_b = eval_index(modes.dest_model, omega)
    kappa = np.asarray(modes.kappa(omega), dtype=float)
    if np.any(kappa < 0):
        raise ConfigError("coupling coefficient must be non-negative")
    return n_a, n_b, kappa * _index_scale(omega)


def supermode_indices(profile: TaperProfile, pol: str, z, omega):
    """Eigen-indices (n_plus, n_minus) of the local 2x2 coupled-mode matrix."""
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    o_arr = np.atleast_1d(np.asarray(omega, dtype=float))
    n_a, n_b, K = _local(profile, pol, z_arr, o_arr)
    mean = 0.5 * (n_a + n_b)
    split = np.sqrt((0.5 * (n_a - n_b)) ** 2 + K**2)
    n_plus, n_minus = mean + split, mean - split
    shape = np.broadcast_shapes(np.shape(z), np.shape(omega))
    if np.ndim(z) == 0 and np.ndim(omega) == 0:
        return float(n_plus[0, 0]), float(n_minus[0, 0])
    if np.ndim(z) == 0 or np.ndim(omega) == 0:
        return n_plus.reshape(shape), n_minus.reshape(shape)
    return n_plus, n_minus


def _followed_index(n_a, n_b, K):
    """Index of the supermode branch that starts localised in the source guide."""
    delta = n_a - n_b
    d0 = delta[0]
    uncoupled = K == 0
    ambiguous = d0 == 0
    if np.any(uncoupled):
        # without coupling the source mode keeps its own index; a crossing
        # or touching of the two indices leaves the branch undefined
        sgn = np.sign(delta[:, uncoupled])
        crossing = np.any(sgn != sgn[:1], axis=0) | np.any(sgn == 0, axis=0)
        ambiguous = ambiguous | (uncoupled & _scatter(crossing, uncoupled))
    if np.any(ambiguous):
        raise DegenerateCrossingError(
            "cannot follow the source-guide supermode: exact degeneracy of source and destination indices"
        )
    mean = 0.5 * (n_a + n_b)
    split = np.sqrt((0.5 * delta) ** 2 + K**2)
    return np.where(d0 > 0, mean + split, mean - split)


def _scatter(values, mask):
    out = np.zeros(mask.shape, dtype=bool)
    out[mask] = values
    return out


def taper_phase(profile: TaperProfile, pol: str, omega, branch: str = "adiabatic-follow"):
    """Transfer phase (omega/c) * integral_0^l n_follow(z, omega) dz, rad.

    ``n_follow`` is the supermode branch that carries the power when the
    transfer is adiabatic. With ``branch="source-guide"`` it is the bare
    source-guide index instead, i.e. the tapered source guide with no
    destination guide present. The z integral is composite Simpson over the
    width-profile samples.
    """
    if branch not in ("adiabatic-follow", "source-guide"):
        raise ConfigError(f"unsupported branch {branch!r}")
    o_arr = np.atleast_1d(np.asarray(omega, dtype=float))
    out = np.empty(o_arr.shape)
    for sl in _chunks(o_arr.size):
        n_a, n_b, K = _local(profile, pol, profile.z, o_arr[sl])
        n_f = n_a if branch == "source-guide" else _followed_index(n_a, n_b, K)
        out[sl] = o_arr[sl] / C_LIGHT * simpson(n_f, x=profile.z, axis=0)
    return out if np.ndim(omega) else float(out[0])


def _chunks(n, size=_CHUNK):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def cmt_transfer(profile: TaperProfile, pol: str, omega, rtol: float = CMT_RTOL, atol: float = CMT_ATOL):
    """Integrate the two-guide coupled-mode equations along the taper.

    d/dz [A, B] = i [[beta_a(z), kappa], [kappa, beta_b]] [A, B] with
    A(0) = 1, B(0) = 0 and beta = n omega / c (plus -i alpha/2 for loss).
    Integration runs in the frame rotating with beta_b, which removes the
    fast common phase without changing the result. Returns
    ``(B(l), A(l))``.
    """
    o_arr = np.atleast_1d(np.asarray(omega, dtype=float))
    dest = np.empty(o_arr.shape, dtype=complex)
    src = np.empty(o_arr.shape, dtype=complex)
    for sl in _chunks(o_arr.size, 256):
        b_l, a_l = _cmt_chunk(profile, pol, o_arr[sl], rtol, atol)
        dest[sl], src[sl] = b_l, a_l
    if np.ndim(omega) == 0:
        return complex(dest[0]), complex(src[0])
    return dest, src


def _cmt_chunk(profile, pol, omega, rtol, atol):
    modes = profile.local_modes(pol)
    z = profile.z
    n_a, n_b, K = _local(profile, pol, z, omega)
    k0 = omega / C_LIGHT
    dbeta = CubicSpline(z, (n_a - n_b) * k0[None, :], axis=0)
    kappa = K * k0
    half_loss_a = 0.5 * modes.loss_source
    half_loss_b = 0.5 * modes.loss_dest
    m = omega.size

    def rhs(zz, y):
        a, b = y[:m], y[m:]
        da = (1j * dbeta(zz) - half_loss_a) * a + 1j * kappa * b
        db = 1j * kappa * a - half_loss_b * b
        return np.concatenate([da, db])

    y0 = np.concatenate([np.ones(m, dtype=complex), np.zeros(m, dtype=complex)])
    sol = solve_ivp(rhs, (0.0, profile.length), y0, method="RK45", rtol=rtol, atol=atol)
    if not sol.success:
        raise StiffnessError(f"coupled-mode integration failed: {sol.message}")
    phase_b = np.exp(1j * n_b * k0 * profile.length)
    y_l = sol.y[:, -1]
    return y_l[m:] * phase_b, y_l[:m] * phase_b


def adiabaticity_score(profile: TaperProfile, pol: str, omega):
    """max_z |d theta_m/dz| / delta_beta(z), with theta_m the local mixing angle.

    theta_m = atan2(2K, n_a - n_b) / 2 with K = kappa c / omega, and
    delta_beta = (n_plus - n_minus) omega / c. Values well below one mean
    the power follows its supermode.
    """
    o_arr = np.atleast_1d(np.asarray(omega, dtype=float))
    out = np.empty(o_arr.shape)
    for sl in _chunks(o_arr.size):
        n_a, n_b, K = _local(profile, pol, profile.z, o_arr[sl])
        delta = n_a - n_b
        ddelta = np.gradient(delta, profile.z, axis=0, edge_order=2)
        gap2 = delta**2 + 4 * K**2
        dtheta = np.divide(K * np.abs(ddelta), gap2, out=np.zeros_like(gap2), where=gap2 > 0)
        dbeta = np.sqrt(gap2) * (o_arr[sl] / C_LIGHT)
        ratio = np.divide(dtheta, dbeta, out=np.zeros_like(gap2), where=dbeta > 0)
        out[sl] = ratio.max(axis=0)
    return out if np.ndim(omega) else float(out[0])


# --- transmission spectra ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class TransmissionSpectrum:
    polarization: str
    omega: np.ndarray
    T: np.ndarray
    provenance: str = "simulated"

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        T = np.asarray(self.T, dtype=float)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "T", T)
        if self.polarization not in POLARIZATIONS:
            raise ConfigError(f"unknown polarization {self.polarization!r}")
        if self.provenance not in PROVENANCES:
            raise ConfigError(f"unknown provenance {self.provenance!r}")
        if omega.ndim != 1 or omega.size < 2 or omega.shape != T.shape:
            raise ConfigError("transmission spectrum needs matching 1-D grid and values")
        if np.any(np.diff(omega) <= 0):
            raise ConfigError("transmission grid must be strictly increasing")
        if np.any(T < 0) or np.any(T > 1) or np.any(~np.isfinite(T)):
            raise ConfigError("transmission must lie in [0, 1]")

    def __call__(self, omega):
        """Linear interpolation; frequencies outside the grid are an error."""
        o = np.asarray(omega, dtype=float)
        lo, hi = self.omega[0], self.omega[-1]
        tol = 1e-12 * hi
        if np.any(o < lo - tol) or np.any(o > hi + tol):
            raise CoverageError(
                f"{self.polarization} transmission covers [{lo:.6e}, {hi:.6e}] rad/s, requested outside it"
            )
        return np.interp(o, self.omega, self.T)


def transmission_spectrum(profile: TaperProfile, pol: str, grid) -> TransmissionSpectrum:
    """T(omega) = |B(l)|^2 from :func:`cmt_transfer` on every grid point."""
    grid = np.asarray(grid, dtype=float)
    dest, _ = cmt_transfer(profile, pol, grid)
    T = np.clip(np.abs(dest) ** 2, 0.0, 1.0)
    return TransmissionSpectrum(pol, grid, T, provenance="simulated")


def flat_transmission(pol: str, omega_lo: float, omega_hi: float, value: float) -> TransmissionSpectrum:
    return TransmissionSpectrum(pol, np.array([omega_lo, omega_hi]), np.array([value, value]), "simulated")


# --- file formats -------------------------------------------------------------


def _read_rows(path, header):
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got is None or [h.strip() for h in got] != header:
            raise ParseError(f"{path}: expected header {','.join(header)!r}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: expected {len(header)} columns, got {len(row)}", line=lineno)
            try:
                rows.append((lineno, [float(v) for v in row]))
            except ValueError as exc:
                raise ParseError(f"{path}: non-numeric value in {row!r}", line=lineno) from exc
    return rows


def read_width_profile(path):
    rows = _read_rows(path, ["z_m", "w_m"])
    data = np.array([r for _, r in rows])
    return data[:, 0], data[:, 1]


def read_local_index_table(path) -> LocalIndexTable:
    rows = _read_rows(path, ["w_m", "omega_rad_per_s", "n_eff"])
    data = np.array([r for _, r in rows])
    widths = np.unique(data[:, 0])
    omegas = np.unique(data[:, 1])
    n = np.full((widths.size, omegas.size), np.nan)
    iw = np.searchsorted(widths, data[:, 0])
    io = np.searchsorted(omegas, data[:, 1])
    n[iw, io] = data[:, 2]
    if np.any(np.isnan(n)):
        raise ParseError(f"{path}: local index table is not a complete (w, omega) grid")
    return LocalIndexTable(widths, omegas, n)


def write_local_index_table(path, table: LocalIndexTable) -> None:
    rows = ((wi, oj, table.n_eff[i, j]) for i, wi in enumerate(table.widths) for j, oj in enumerate(table.omegas))
    write_csv(path, ["w_m", "omega_rad_per_s", "n_eff"], rows)


def read_kappa_table(path) -> KappaTable:
    rows = _read_rows(path, ["omega_rad_per_s", "kappa_rad_per_m"])
    data = np.array([r for _, r in rows])
    return KappaTable(data[:, 0], data[:, 1])


def read_transmission(path, polarization: str, provenance: str = "measured-file") -> TransmissionSpectrum:
    """Read ``omega_rad_per_s,T``; rows with T outside [0, 1] are reported by line."""
    rows = _read_rows(path, ["omega_rad_per_s", "T"])
    bad = [line for line, (_, t) in rows if not 0.0 <= t <= 1.0]
    if bad:
        raise ParseError(f"{path}: transmission outside [0, 1] on line(s) {', '.join(map(str, bad))}", line=bad[0])
    data = np.array([r for _, r in rows])
    if data.shape[0] < 2:
        raise ParseError(f"{path}: need at least two transmission rows")
    if np.any(np.diff(data[:, 0]) <= 0):
        raise ParseError(f"{path}: frequencies must be strictly increasing")
    return TransmissionSpectrum(polarization, data[:, 0], data[:, 1], provenance)


def write_transmission(path, spec: TransmissionSpectrum) -> None:
    write_csv(path, ["omega_rad_per_s", "T"], zip(spec.omega, spec.T))
