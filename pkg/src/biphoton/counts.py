"""Pair-counting statistics: singles, coincidences, accidentals, PGR and CAR.

Rates are modelled as independent Poisson processes. Accidentals follow the
usual uncorrelated-singles estimate S_s S_i w within a window w.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .errors import CarUndefinedError, ConfigError, ParseError
from .io import write_csv, write_json


@dataclass(frozen=True)
class CountsScenario:
    internal_pgr_per_mw: float
    pump_power: float
    arm_efficiency_s: float
    arm_efficiency_i: float
    dark_rate_s: float
    dark_rate_i: float
    coincidence_window: float
    integration_time: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("internal_pgr_per_mw", "pump_power", "dark_rate_s", "dark_rate_i", "integration_time"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and non-negative, got {v!r}")
        for name in ("arm_efficiency_s", "arm_efficiency_i"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {v!r}")
        if not self.coincidence_window > 0:
            raise ConfigError("coincidence_window must be positive")
        if int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            raise ConfigError("rng_seed must be a non-negative integer")

    @property
    def pair_rate(self) -> float:
        return self.internal_pgr_per_mw * self.pump_power

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CountsScenario":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad counts scenario: {exc}") from exc


@dataclass(frozen=True)
class CountsResult:
    singles_s: float
    singles_i: float
    true_coincidences: float
    accidentals: float
    car: float
    car_sigma: float
    estimated_pgr: float
    pgr_sigma: float = 0.0


def _car(true_rate, acc_rate):
    if acc_rate <= 0:
        raise CarUndefinedError("accidental rate is zero, CAR undefined")
    return (true_rate + acc_rate) / acc_rate


def expected_rates(scn: CountsScenario) -> CountsResult:
    """Expectation values (counts per second); no sampling."""
    R = scn.pair_rate
    eta = scn.arm_efficiency_s * scn.arm_efficiency_i
    s_s = scn.arm_efficiency_s * R + scn.dark_rate_s
    s_i = scn.arm_efficiency_i * R + scn.dark_rate_i
    true = eta * R
    acc = s_s * s_i * scn.coincidence_window
    car = _car(true, acc)
    return CountsResult(s_s, s_i, true, acc, car, 0.0, true / eta, 0.0)


def _sigmas(n_true, n_acc, eta, t):
    """First-order Poisson propagation for CAR = (N_t + N_a)/N_a and PGR = N_t/(eta t)."""
    car_sigma = np.sqrt(n_true / n_acc**2 + n_true**2 / n_acc**3)
    pgr_sigma = np.sqrt(n_true) / (eta * t)
    return float(car_sigma), float(pgr_sigma)


def sample_counts(scn: CountsScenario) -> CountsResult:
    """Poisson totals over ``integration_time``, reported as rates."""
    t = scn.integration_time
    if not t > 0:
        raise ConfigError("integration_time must be positive for sampling")
    mean = expected_rates(scn)
    rng = np.random.Generator(np.random.PCG64(int(scn.rng_seed)))
    n_s, n_i, n_t, n_a = (
        float(v)
        for v in rng.poisson([mean.singles_s * t, mean.singles_i * t, mean.true_coincidences * t, mean.accidentals * t])
    )
    if n_a == 0:
        raise CarUndefinedError("no accidental coincidences recorded; lengthen integration_time")
    eta = scn.arm_efficiency_s * scn.arm_efficiency_i
    car = (n_t + n_a) / n_a
    car_sigma, pgr_sigma = _sigmas(n_t, n_a, eta, t)
    return CountsResult(n_s / t, n_i / t, n_t / t, n_a / t, car, car_sigma, n_t / (eta * t), pgr_sigma)


@dataclass(frozen=True)
class SweepRow:
    power_mw: float
    pgr_per_s: float
    car: float
    car_sigma: float
    pgr_sigma: float


def power_sweep(template: CountsScenario, powers) -> list[SweepRow]:
    """One sampled point per pump power; point ``k`` uses seed ``rng_seed XOR k``."""
    powers = [float(p) for p in powers]
    if not powers:
        raise ConfigError("power list is empty")
    if any(not p > 0 for p in powers):
        raise ConfigError("pump powers must be positive")
    rows = []
    for k, p in enumerate(powers):
        res = sample_counts(replace(template, pump_power=p, rng_seed=int(template.rng_seed) ^ k))
        rows.append(SweepRow(p, res.estimated_pgr / p, res.car, res.car_sigma, res.pgr_sigma / p))
    return rows


def fit_pgr_slope(powers, pgr_rates, sigmas) -> tuple[float, float]:
    """Weighted least-squares slope through the origin of pair rate vs power."""
    x = np.asarray(powers, dtype=float)
    y = np.asarray(pgr_rates, dtype=float)
    s = np.asarray(sigmas, dtype=float)
    w = 1.0 / s**2
    slope = np.sum(w * x * y) / np.sum(w * x * x)
    return float(slope), float(1.0 / np.sqrt(np.sum(w * x * x)))


def write_sweep(path, rows: list[SweepRow]) -> Path:
    return write_csv(path, ["power_mw", "pgr_per_s", "car", "car_sigma"], ((r.power_mw, r.pgr_per_s, r.car, r.car_sigma) for r in rows))


def write_scenario(path, scn: CountsScenario) -> Path:
    return write_json(path, scn.to_dict())


def read_scenario(path) -> CountsScenario:
    return read_sweep_file(path)[0]


def read_sweep_file(path) -> tuple[CountsScenario, list[float] | None]:
    """A scenario file, plus the pump powers in mW when it carries a ``powers_mw`` list."""
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    powers = d.pop("powers_mw", None)
    if powers is not None:
        try:
            powers = [float(p) for p in powers]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: powers_mw must be a list of numbers") from exc
    return CountsScenario.from_dict(d), powers
