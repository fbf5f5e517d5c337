"""Scaling schedules ``lam = c * rho**(-a)`` and the regime they select."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, ParameterError
from ..grain_model import ModelParams
from ..heavytail import PARETO, VolumeLaw, c_gamma, pareto_unit_mean, quantile_reciprocal_tail

FINITE_VARIANCE = "finite_variance"
LARGE_GRAIN = "large_grain"
INTERMEDIATE = "intermediate"
SMALL_GRAIN = "small_grain"
REGIMES = (FINITE_VARIANCE, LARGE_GRAIN, INTERMEDIATE, SMALL_GRAIN)


@dataclass(frozen=True)
class ScalingSchedule:
    rho_grid: tuple
    a: float
    c: float
    law: VolumeLaw

    def __post_init__(self):
        grid = tuple(float(r) for r in self.rho_grid)
        object.__setattr__(self, "rho_grid", grid)
        if not grid:
            raise ParameterError("empty rho grid")
        if any(r <= 0.0 for r in grid) or any(b >= a for a, b in zip(grid, grid[1:])):
            raise ParameterError("rho grid must be positive and strictly decreasing")
        if not self.c > 0.0:
            raise ParameterError(f"prefactor must be positive, got {self.c}")

    @property
    def gamma(self) -> float:
        return self.law.gamma if self.law.kind == PARETO else math.nan

    def lam(self, rho: float) -> float:
        return self.c * rho ** (-self.a)

    def indicator(self, rho: float) -> float:
        """``lam F_rho-bar(1)``, the expected number of grains of volume above one per unit volume."""
        return float(self.lam(rho) * self.law.tail(1.0, rho))

    def params(self, rho: float, shape=None, rotated: bool = False) -> ModelParams:
        kw = {} if shape is None else {"shape": shape}
        return ModelParams(self.lam(rho), rho, self.law, rotated=rotated, **kw)

    def to_json(self) -> dict:
        return {"rho_grid": list(self.rho_grid), "a": self.a, "c": self.c, "law": self.law.to_json()}

    @classmethod
    def from_json(cls, data: dict) -> "ScalingSchedule":
        if "law" in data:
            law = VolumeLaw.from_json(data["law"])
        elif "gamma" in data:
            law = pareto_unit_mean(float(data["gamma"]))
        else:
            raise ConfigurationError("schedule needs either a law or a tail index gamma")
        return cls(tuple(data["rho_grid"]), float(data["a"]), float(data["c"]), law)


@dataclass
class RegimeReport:
    regime: str
    indicators: list
    labels: list
    sigma0: float | None = None
    exact: bool = True
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "regime": self.regime,
            "indicators": self.indicators,
            "labels": self.labels,
            "sigma0": self.sigma0,
            "exact": self.exact,
        }


def _trichotomy_label(slope: float, tol: float = 1e-9) -> str:
    # slope of log(indicator) against log(rho)
    if abs(slope) <= tol:
        return INTERMEDIATE
    return LARGE_GRAIN if slope < 0.0 else SMALL_GRAIN


def classify_regime(schedule: ScalingSchedule) -> RegimeReport:
    """Regime per grid point and overall.

    For Pareto volumes the indicator is ``c rho**(gamma - a) v_min**gamma``
    and the regime follows from the sign of ``a - gamma``.  Other laws are
    classified from the numeric tail along the grid; since they have finite
    variance the overall regime is the finite-variance one.
    """
    law = schedule.law
    rhos = schedule.rho_grid
    ind = [schedule.indicator(r) for r in rhos]
    if law.kind == PARETO:
        g = law.gamma
        diff = schedule.a - g
        label = INTERMEDIATE if abs(diff) <= 1e-12 else (LARGE_GRAIN if diff > 0.0 else SMALL_GRAIN)
        sigma0 = schedule.c * law.v_min**g if label == INTERMEDIATE else None
        return RegimeReport(label, ind, [label] * len(rhos), sigma0, True)
    labels = []
    for k in range(len(rhos)):
        j = k + 1 if k + 1 < len(rhos) else k - 1
        if j < 0:
            labels.append(SMALL_GRAIN if ind[k] < 1.0 else LARGE_GRAIN)
            continue
        a, b = (k, j) if j > k else (j, k)
        if ind[a] <= 0.0 or ind[b] <= 0.0:
            labels.append(SMALL_GRAIN)
            continue
        slope = (math.log(ind[b]) - math.log(ind[a])) / (math.log(rhos[b]) - math.log(rhos[a]))
        labels.append(_trichotomy_label(slope))
    overall = FINITE_VARIANCE if law.finite_variance else labels[-1]
    return RegimeReport(overall, ind, labels, None, False)


def normalizer(regime: str, params: ModelParams) -> float:
    """Normalizing constant ``b`` of the limit theorem matching ``regime``.

    * finite variance: ``rho (lam E V**2)**(1/2)``;
    * large grains: ``(gamma lam F_rho-bar(1))**(1/2)``;
    * intermediate: ``1``;
    * small grains: ``q / c_gamma`` with ``q`` the ``gamma lam`` quantile of ``1 / F_rho-bar``.
    """
    law, lam, rho = params.law, params.lam, params.rho
    if regime == FINITE_VARIANCE:
        if not law.finite_variance:
            raise ConfigurationError("finite-variance normalization needs E V**2 < inf")
        return rho * math.sqrt(lam * law.second_moment)
    if regime == INTERMEDIATE:
        return 1.0
    if regime not in (LARGE_GRAIN, SMALL_GRAIN):
        raise ConfigurationError(f"unknown regime {regime!r}")
    if law.kind != PARETO:
        raise ConfigurationError(f"regime {regime} needs a regularly varying (Pareto) law")
    g = law.gamma
    if regime == LARGE_GRAIN:
        return math.sqrt(g * lam * float(law.tail(1.0, rho)))
    level = g * lam
    if not level > 1.0:
        raise ConfigurationError(f"gamma * lam = {level} must exceed 1 for the quantile normalizer")
    return quantile_reciprocal_tail(law, rho, level) / c_gamma(g)


def indicator_trend(schedule: ScalingSchedule) -> np.ndarray:
    return np.array([schedule.indicator(r) for r in schedule.rho_grid])
