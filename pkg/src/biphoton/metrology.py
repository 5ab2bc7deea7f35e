"""Delay-estimation figures of merit: quantum and classical Fisher information.

The classical figure uses the HOM curve as a two-outcome measurement,
FI(tau) = (dP/dtau)^2 / (P (1 - P)). Reduced visibility is modelled by a
uniform interference contrast gamma multiplying the overlap term.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigError, ConvergenceError
from .hom import HomInterferogram, overlap, visibility
from .io import write_csv, write_json
from .jsa import BiphotonSpectrum

MASK_THRESHOLD = 1e-12
GAMMA_MODEL = "uniform-contrast"


def qfi(state: BiphotonSpectrum) -> float:
    """4 Var(omega_s) under |phi|^2 / norm (s^-2)."""
    if state.norm <= 0:
        raise ConfigError("QFI needs a state with non-zero norm")
    x = state.detuning
    p = np.abs(state.amplitude) ** 2 / state.norm
    m1 = trapezoid(p * x, dx=state.step)
    m2 = trapezoid(p * x * x, dx=state.step)
    return float(4.0 * max(m2 - m1 * m1, 0.0))


@dataclass(frozen=True, eq=False)
class FisherCurve:
    delays: np.ndarray
    P_c: np.ndarray
    dP_dtau: np.ndarray
    fi: np.ndarray
    masked: np.ndarray

    @property
    def max_fi(self) -> float:
        vals = self.fi[~self.masked]
        return float(vals.max()) if vals.size else 0.0

    @property
    def argmax_delay(self) -> float:
        vals = np.where(self.masked, -np.inf, self.fi)
        return float(self.delays[int(np.argmax(vals))])


def _fisher_from_overlap(delays, re, dre, gamma):
    P = 0.5 * (1.0 - gamma * re)
    dP = -0.5 * gamma * dre
    var = P * (1.0 - P)
    masked = var < MASK_THRESHOLD
    fi = np.full(P.shape, np.nan)
    fi[~masked] = dP[~masked] ** 2 / var[~masked]
    return FisherCurve(np.asarray(delays, dtype=float), P, dP, fi, masked)


def fisher_information(state: BiphotonSpectrum, delays, gamma: float = 1.0) -> FisherCurve:
    """Classical Fisher information of the coincidence measurement at each delay.

    Points where P_c (1 - P_c) falls below 1e-12 are masked (``fi`` is NaN
    there) rather than reported as infinite.
    """
    if not 0 < gamma <= 1:
        raise ConfigError("contrast gamma must lie in (0, 1]")
    re, dre = overlap(state, delays, derivative=True)
    return _fisher_from_overlap(delays, re, dre, gamma)


def _curve_visibility(delays, re, gamma):
    P = np.clip(0.5 * (1.0 - gamma * re), 0.0, 1.0)
    return visibility(HomInterferogram.from_samples(delays, P))


def solve_contrast(delays, re, target: float, tol: float = 1e-6, max_iter: int = 200) -> float:
    """Bisection for gamma such that the degraded curve has visibility ``target``."""
    if not 0 < target <= 1:
        raise ConfigError("target visibility must lie in (0, 1]")
    hi_v = _curve_visibility(delays, re, 1.0)
    if target > hi_v + tol:
        raise ConvergenceError(f"target visibility {target} exceeds the undegraded value {hi_v:.6f}")
    if abs(hi_v - target) <= tol:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        v = _curve_visibility(delays, re, mid)
        if abs(v - target) <= tol:
            return mid
        if v < target:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError(f"contrast bisection did not reach visibility {target} within {tol}")


@dataclass(frozen=True)
class ScalingPoint:
    visibility: float
    gamma: float
    max_fi: float
    ratio: float


def scaling_curve(state: BiphotonSpectrum, visibility_grid, delays, workers: int | None = None) -> list[ScalingPoint]:
    """max_tau FI / QFI for each target visibility, in input order."""
    targets = [float(v) for v in visibility_grid]
    if not targets:
        raise ConfigError("visibility grid is empty")
    delays = np.asarray(delays, dtype=float)
    re, dre = overlap(state, delays, derivative=True)
    q = qfi(state)

    def one(v):
        gamma = solve_contrast(delays, re, v)
        fc = _fisher_from_overlap(delays, re, dre, gamma)
        return ScalingPoint(v, gamma, fc.max_fi, fc.max_fi / q if q > 0 else 0.0)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, targets))
    return [one(v) for v in targets]


@dataclass(frozen=True)
class MetrologyReport:
    qfi: float
    fi_curve: FisherCurve
    max_fi: float
    ratio: float
    visibility: float

    def to_dict(self) -> dict:
        return {
            "qfi_s2": self.qfi,
            "max_fi_s2": self.max_fi,
            "ratio": self.ratio,
            "visibility": self.visibility,
            "gamma_model": GAMMA_MODEL,
        }


def metrology_report(state: BiphotonSpectrum, delays) -> MetrologyReport:
    q = qfi(state)
    fc = fisher_information(state, delays)
    v = visibility(HomInterferogram.from_samples(fc.delays, np.clip(fc.P_c, 0.0, 1.0)))
    return MetrologyReport(q, fc, fc.max_fi, fc.max_fi / q if q > 0 else 0.0, v)


def write_metrology_report(path, report: MetrologyReport):
    return write_json(path, report.to_dict())


def write_scaling(path, points: list[ScalingPoint]):
    return write_csv(path, ["V", "ratio"], ((p.visibility, p.ratio) for p in points))
