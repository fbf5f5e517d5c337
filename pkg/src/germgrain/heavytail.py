"""Grain-volume laws, stable laws and the special constants of the scaling limits.

Volume laws are normalized so that the *unscaled* volume ``V`` has the stated
law; the grain volumes of a model with mean volume ``rho`` are ``rho * V``.
The intensity measure ``lam * F_rho(dv)`` of the grain volumes is exposed as a
:class:`VolumeMeasure` so that simulation and quadrature share one object.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import DivergentMomentError, ParameterError

PARETO = "pareto"
EXPONENTIAL = "exponential"
DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class VolumeLaw:
    """Distribution of the normalized grain volume ``V``.

    Only the fields relevant to ``kind`` are meaningful: ``gamma`` and
    ``v_min`` for Pareto, ``rate`` for exponential, ``value`` for
    deterministic volumes.
    """

    kind: str
    gamma: float = float("nan")
    v_min: float = float("nan")
    rate: float = float("nan")
    value: float = float("nan")

    def __post_init__(self):
        if self.kind == PARETO:
            if not (self.gamma > 1.0 and self.v_min > 0.0):
                raise ParameterError(f"Pareto law needs gamma > 1 and v_min > 0, got {self}")
        elif self.kind == EXPONENTIAL:
            if not self.rate > 0.0:
                raise ParameterError(f"exponential rate must be positive, got {self.rate}")
        elif self.kind == DETERMINISTIC:
            if not self.value > 0.0:
                raise ParameterError(f"deterministic volume must be positive, got {self.value}")
        else:
            raise ParameterError(f"unknown volume law kind {self.kind!r}")

    @property
    def mean(self) -> float:
        if self.kind == PARETO:
            return self.gamma * self.v_min / (self.gamma - 1.0)
        if self.kind == EXPONENTIAL:
            return 1.0 / self.rate
        return self.value

    @property
    def second_moment(self) -> float:
        if self.kind == PARETO:
            return math.inf if self.gamma <= 2.0 else self.gamma * self.v_min**2 / (self.gamma - 2.0)
        if self.kind == EXPONENTIAL:
            return 2.0 / self.rate**2
        return self.value**2

    @property
    def finite_variance(self) -> bool:
        return math.isfinite(self.second_moment)

    def tail(self, v, rho: float = 1.0):
        """Tail ``1 - F_rho(v)`` of the scaled law ``F_rho(v) = F(v / rho)``."""
        x = np.asarray(v, dtype=float) / rho
        if self.kind == PARETO:
            out = np.where(x < self.v_min, 1.0, (np.maximum(x, self.v_min) / self.v_min) ** (-self.gamma))
        elif self.kind == EXPONENTIAL:
            out = np.where(x < 0.0, 1.0, np.exp(-self.rate * np.maximum(x, 0.0)))
        else:
            out = np.where(x < self.value, 1.0, 0.0)
        return out[()] if out.ndim == 0 else out

    def intensity(self, lam: float, rho: float) -> "VolumeMeasure":
        """The grain-volume intensity measure ``lam * F_rho(dv)``."""
        if self.kind == PARETO:
            lo = rho * self.v_min
            return PowerMeasure(lam * self.gamma * lo**self.gamma, self.gamma, lo)
        if self.kind == EXPONENTIAL:
            return ExponentialMeasure(lam, rho / self.rate)
        return AtomMeasure(lam, rho * self.value)

    def to_json(self) -> dict:
        keys = {PARETO: ("gamma", "v_min"), EXPONENTIAL: ("rate",), DETERMINISTIC: ("value",)}[self.kind]
        return {"kind": self.kind, **{k: getattr(self, k) for k in keys}}

    @classmethod
    def from_json(cls, data: dict) -> "VolumeLaw":
        data = dict(data)
        if data["kind"] == PARETO and "v_min" not in data:
            return pareto_unit_mean(data["gamma"])
        return cls(**data)


def pareto(gamma: float, v_min: float) -> VolumeLaw:
    return VolumeLaw(PARETO, gamma=gamma, v_min=v_min)


def pareto_unit_mean(gamma: float) -> VolumeLaw:
    """Pareto law with tail index ``gamma`` in (1, 2) and mean exactly one."""
    if not 1.0 < gamma < 2.0:
        raise ParameterError(f"tail index must lie in (1, 2), got {gamma}")
    return VolumeLaw(PARETO, gamma=gamma, v_min=(gamma - 1.0) / gamma)


def exponential(rate: float = 1.0) -> VolumeLaw:
    return VolumeLaw(EXPONENTIAL, rate=rate)


def deterministic(value: float = 1.0) -> VolumeLaw:
    return VolumeLaw(DETERMINISTIC, value=value)


def sample_volume(law: VolumeLaw, rng: np.random.Generator, size=None, rho: float = 1.0):
    """Draw i.i.d. volumes from ``F_rho``; Pareto uses the inverse CDF ``v_min * U**(-1/gamma)``."""
    if law.kind == PARETO:
        u = 1.0 - rng.random(size)  # (0, 1]
        return rho * law.v_min * u ** (-1.0 / law.gamma)
    if law.kind == EXPONENTIAL:
        return rho * rng.exponential(1.0 / law.rate, size)
    if size is None:
        return rho * law.value
    return np.full(size, rho * law.value)


def quantile_reciprocal_tail(law: VolumeLaw, rho: float, u: float) -> float:
    """``inf{v : 1 / (1 - F_rho(v)) >= u}`` for ``u > 1``."""
    if not u > 1.0:
        raise ParameterError(f"level must exceed 1, got {u}")
    if law.kind == PARETO:
        return rho * law.v_min * u ** (1.0 / law.gamma)
    if law.kind == EXPONENTIAL:
        return rho * math.log(u) / law.rate
    return rho * law.value


class TruncatedMoment(NamedTuple):
    exact: float
    karamata: float


def karamata_truncated_moment(law: VolumeLaw, exponent: float, a: float, side: str) -> TruncatedMoment:
    """Truncated power moment of a Pareto law and its Karamata asymptote.

    ``side="upper"`` gives ``int_{(a, inf)} v**p F(dv)`` (needs ``p < gamma``),
    ``side="lower"`` gives ``int_{[0, a]} v**q F(dv)`` (needs ``q > gamma``).
    The second field is ``gamma / |gamma - p| * Fbar(a) * a**p``.
    """
    if law.kind != PARETO:
        raise ParameterError("truncated moments are implemented for Pareto laws only")
    g, m, p = law.gamma, law.v_min, exponent
    fbar = float(law.tail(a))
    if side == "upper":
        if not p < g:
            raise DivergentMomentError(f"upper moment of order {p} diverges for tail index {g}")
        lo = max(a, m)
        exact = g * m**g * lo ** (p - g) / (g - p)
        return TruncatedMoment(exact, g / (g - p) * fbar * a**p)
    if side == "lower":
        if not p > g:
            raise DivergentMomentError(f"lower moment of order {p} diverges for tail index {g}")
        exact = 0.0 if a < m else g * m**g * (a ** (p - g) - m ** (p - g)) / (p - g)
        return TruncatedMoment(exact, g / (p - g) * fbar * a**p)
    raise ParameterError(f"side must be 'upper' or 'lower', got {side!r}")


# --------------------------------------------------------------------------
# intensity measures on the volume axis


class VolumeMeasure:
    """A sigma-finite measure ``mu(dv)`` on ``(0, inf)``.

    ``moment(p, a, b)`` is ``int_{(a, b]} v**p mu(dv)`` and
    ``sample_tilted(beta, size, rng)`` draws from the probability law
    proportional to ``v**beta mu(dv)``.
    """

    lo: float = 0.0

    def moment(self, p: float, a: float = 0.0, b: float = math.inf) -> float:
        raise NotImplementedError

    def sample_tilted(self, beta: float, size: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def density(self, v):
        raise NotImplementedError

    def restricted(self, lo: float) -> "VolumeMeasure":
        raise NotImplementedError


@dataclass(frozen=True)
class PowerMeasure(VolumeMeasure):
    """``scale * v**(-gamma - 1) dv`` on ``[lo, inf)``.

    Covers both a scaled Pareto intensity (``lo = rho * v_min``) and the
    Levy measure ``v**(-gamma-1) dv`` of the intermediate limit (``lo = 0``
    or a small-jump threshold).
    """

    scale: float
    gamma: float
    lo: float = 0.0

    def moment(self, p, a=0.0, b=math.inf):
        a = max(a, self.lo)
        if not b > a:
            return 0.0
        e = p - self.gamma
        if (a == 0.0 and e <= 0.0) or (math.isinf(b) and e >= 0.0):
            return math.inf
        upper = 0.0 if math.isinf(b) else b**e
        lower = 0.0 if a == 0.0 else a**e
        return self.scale * (upper - lower) / e

    def density(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(v >= self.lo, self.scale * np.maximum(v, 1e-300) ** (-self.gamma - 1.0), 0.0)

    def sample_tilted(self, beta, size, rng):
        e = self.gamma - beta
        if not (e > 0.0 and self.lo > 0.0):
            raise ParameterError("tilted power law must be normalizable")
        u = 1.0 - rng.random(size)
        return self.lo * u ** (-1.0 / e)

    def restricted(self, lo):
        return PowerMeasure(self.scale, self.gamma, max(lo, self.lo))


@dataclass(frozen=True)
class ExponentialMeasure(VolumeMeasure):
    """``mass * exp(-v / mean) / mean dv`` on ``(0, inf)``."""

    mass: float
    mean: float
    lo: float = 0.0

    def _cdf_gamma(self, k, x):
        return special.gammainc(k, x / self.mean) if math.isfinite(x) else 1.0

    def moment(self, p, a=0.0, b=math.inf):
        a = max(a, self.lo)
        if not b > a:
            return 0.0
        k = p + 1.0
        if k <= 0.0 and a == 0.0:
            return math.inf
        if math.isfinite(b) and b > 30.0 * self.mean + a and a < 30.0 * self.mean:
            b = math.inf
        if a > 0.0 and not math.isfinite(b):
            upper = special.gammaincc(k, a / self.mean)
        else:
            upper = self._cdf_gamma(k, b) - self._cdf_gamma(k, a)
        return self.mass * self.mean**p * special.gamma(k) * upper

    def density(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(v >= self.lo, self.mass * np.exp(-v / self.mean) / self.mean, 0.0)

    def sample_tilted(self, beta, size, rng):
        if self.lo > 0.0:
            raise ParameterError("restricted exponential measures are not sampled")
        return rng.gamma(1.0 + beta, self.mean, size)

    def restricted(self, lo):
        return ExponentialMeasure(self.mass, self.mean, max(lo, self.lo))


@dataclass(frozen=True)
class AtomMeasure(VolumeMeasure):
    """``mass`` units of volume ``at``."""

    mass: float
    at: float
    lo: float = 0.0

    def moment(self, p, a=0.0, b=math.inf):
        a = max(a, self.lo)
        return self.mass * self.at**p if a < self.at <= b else 0.0

    def sample_tilted(self, beta, size, rng):
        return np.full(size, self.at)

    def restricted(self, lo):
        return AtomMeasure(self.mass if self.at > lo else 0.0, self.at, max(lo, self.lo))


# --------------------------------------------------------------------------
# stable laws


@dataclass(frozen=True)
class StableParams:
    """Stable law with characteristic function
    ``exp(-sigma**gamma |t|**gamma (1 - i beta sgn(t) tan(pi gamma / 2)))``."""

    gamma: float
    sigma: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not 1.0 < self.gamma < 2.0:
            raise ParameterError(f"stability index must lie in (1, 2), got {self.gamma}")
        if self.sigma < 0.0:
            raise ParameterError(f"scale must be nonnegative, got {self.sigma}")
        if not -1.0 <= self.beta <= 1.0:
            raise ParameterError(f"skewness must lie in [-1, 1], got {self.beta}")


def stable_cf(params: StableParams, t):
    t = np.asarray(t, dtype=float)
    g = params.gamma
    tan = math.tan(math.pi * g / 2.0)
    out = np.exp(-(params.sigma**g) * np.abs(t) ** g * (1.0 - 1j * params.beta * np.sign(t) * tan))
    return out[()] if out.ndim == 0 else out


def stable_sample(params: StableParams, rng: np.random.Generator, size=None):
    """Chambers-Mallows-Stuck draw whose characteristic function is :func:`stable_cf`.

    For ``gamma != 1`` this parameterization needs no location shift.
    """
    g, beta = params.gamma, params.beta
    if params.sigma == 0.0:
        return 0.0 if size is None else np.zeros(size)
    tan = math.tan(math.pi * g / 2.0)
    shift = math.atan(beta * tan) / g
    scale = (1.0 + beta**2 * tan**2) ** (1.0 / (2.0 * g))
    v = rng.uniform(-math.pi / 2.0, math.pi / 2.0, size)
    w = rng.exponential(1.0, size)
    x = (
        scale
        * np.sin(g * (v + shift))
        / np.cos(v) ** (1.0 / g)
        * (np.cos(v - g * (v + shift)) / w) ** ((1.0 - g) / g)
    )
    return params.sigma * x


def _check_gamma(gamma):
    if not 1.0 < gamma < 2.0:
        raise ParameterError(f"tail index must lie in (1, 2), got {gamma}")


def c_gamma(gamma: float) -> float:
    """``(-Gamma(2-g) / (g (g-1)) cos(pi g / 2)) ** (-1/g)``."""
    _check_gamma(gamma)
    k = -math.gamma(2.0 - gamma) / (gamma * (gamma - 1.0)) * math.cos(math.pi * gamma / 2.0)
    return k ** (-1.0 / gamma)


def d_gamma(gamma: float) -> complex:
    """``int_0^inf psi(v) v**(-gamma-1) dv`` in closed form."""
    _check_gamma(gamma)
    r = math.gamma(2.0 - gamma) / (gamma * (gamma - 1.0)) * math.cos(math.pi * gamma / 2.0)
    return complex(r, -r * math.tan(math.pi * gamma / 2.0))


def c_alpha_d(alpha: float, d: int) -> float:
    """Normalizing constant of the Riesz inner product of order ``alpha`` in dimension ``d``."""
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    if int(d) != d or d < 1:
        raise ParameterError(f"dimension must be a positive integer, got {d}")
    return math.pi ** ((alpha - 0.5) * d) * math.gamma((1.0 - alpha) * d / 2.0) / math.gamma(alpha * d / 2.0)


# --------------------------------------------------------------------------
# psi(v) = e^{iv} - 1 - iv


def _sin_minus_id(u):
    """``sin(u) - u`` without cancellation near zero."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 0.5
    us = np.where(small, u, 0.0)
    u2 = us * us
    # Horner form of -u^3/3! + u^5/5! - ... up to u^17
    series = np.zeros_like(us)
    for k in range(8, 0, -1):
        series = (-1) ** k / math.factorial(2 * k + 1) + u2 * series
    series = us * u2 * series
    return np.where(small, series, np.sin(u) - u)


def _cos_minus_taylor2(u):
    """``cos(u) - 1 + u**2 / 2`` without cancellation near zero."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 0.5
    us = np.where(small, u, 0.0)
    u2 = us * us
    series = np.zeros_like(us)
    for k in range(8, 1, -1):
        series = (-1) ** k / math.factorial(2 * k) + u2 * series
    series = u2 * u2 * series
    return np.where(small, series, np.cos(u) - 1.0 + 0.5 * u * u)


def psi(v):
    """``exp(iv) - 1 - iv``, accurate for small ``v``."""
    v = np.asarray(v, dtype=float)
    out = -2.0 * np.sin(v / 2.0) ** 2 + 1j * _sin_minus_id(v)
    return out[()] if out.ndim == 0 else out


def psi_second_order(v):
    """``psi(v) + v**2 / 2``; its derivative times ``-i`` is ``psi``."""
    v = np.asarray(v, dtype=float)
    out = _cos_minus_taylor2(v) + 1j * _sin_minus_id(v)
    return out[()] if out.ndim == 0 else out
