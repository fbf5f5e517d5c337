"""Samplers for the three scaling limits on finite families of test measures.

* Gaussian fields are drawn from a Cholesky factor of their Gram matrix.
* Stable fields use independently scattered cell variables on a grid that
  refines every atom, which is exact for such measures.
* The intermediate field is a compensated Poisson integral with intensity
  ``dx v**(-gamma-1) dv``: jumps above ``delta`` are simulated grain by grain,
  and the compensated small jumps are replaced by a Gaussian vector with the
  same covariance (or dropped, with the omitted variance recorded).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, stats

from . import _profile
from .errors import DimensionError, GridError, IndefiniteGramError, ParameterError
from .geometry import Box, GrainShape, TestMeasure, dilate, gram
from .grain_model import GrainSampler, ReplicateBatch, batch_field_values, integrate_overlap_product, measure_names
from .heavytail import PowerMeasure, StableParams, stable_sample
from .kernels import KernelSpec, cov_limit, riesz_inner
from .streams import run_blocks

JITTER_CAP = 1e-8


def _replicates(n, draw, rng, threads=1):
    """Run ``draw(gen, count)`` from a generator or, for an integer seed, in counter-derived blocks."""
    if isinstance(rng, np.random.Generator):
        return np.asarray(draw(rng, n))
    return run_blocks(n, draw, int(rng), 0, threads)


def _seed_of(rng):
    return None if isinstance(rng, np.random.Generator) else int(rng)


def cholesky_with_jitter(g: np.ndarray, cap: float = JITTER_CAP):
    """Lower Cholesky factor of ``g + eps I`` with the smallest ``eps`` in a geometric ladder up to ``cap * max diag``."""
    g = np.asarray(g, dtype=float)
    if not np.allclose(g, g.T, rtol=1e-10, atol=1e-14):
        raise IndefiniteGramError("Gram matrix is not symmetric")
    scale = float(np.max(np.diag(g))) if g.size else 0.0
    if scale == 0.0:
        return np.zeros_like(g), 0.0
    for eps in [0.0] + [cap * 10.0**-k for k in range(8, -1, -1)]:
        try:
            return linalg.cholesky(g + eps * scale * np.eye(len(g)), lower=True), eps * scale
        except linalg.LinAlgError:
            continue
    raise IndefiniteGramError(f"Gram matrix is not positive semidefinite within jitter {cap} x max diagonal")


@dataclass
class GaussianFieldSpec:
    measures: list
    gram: np.ndarray
    chol: np.ndarray = None
    jitter: float = 0.0
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        self.gram = np.asarray(self.gram, dtype=float)
        if self.chol is None:
            self.chol, self.jitter = cholesky_with_jitter(self.gram)

    @classmethod
    def from_kernel(cls, spec: KernelSpec, measures: Sequence[TestMeasure]) -> "GaussianFieldSpec":
        """The Gaussian limit ``W_{gamma,C}`` with covariance ``cov_limit``."""
        g = gram(list(measures), lambda a, b: cov_limit(spec, a, b))
        return cls(list(measures), g, description={"kind": "kernel", **spec.to_json()})

    @classmethod
    def from_hurst(cls, hurst: float, measures: Sequence[TestMeasure], scale: float = 1.0) -> "GaussianFieldSpec":
        """``scale * W_H``: covariance ``scale**2 <phi, psi>_{2H-1}``."""
        alpha = 2.0 * hurst - 1.0
        g = gram(list(measures), lambda a, b: scale**2 * riesz_inner(a, b, alpha))
        return cls(list(measures), g, description={"kind": "hurst", "H": hurst, "scale": scale})

    @classmethod
    def white_noise(cls, measures: Sequence[TestMeasure], scale: float = 1.0) -> "GaussianFieldSpec":
        """``scale * W`` with ``Cov(W(phi), W(psi)) = int phi psi``."""
        g = gram(list(measures), lambda a, b: scale**2 * a.inner_l2(b))
        return cls(list(measures), g, description={"kind": "white", "scale": scale})


def sample_gaussian_field(spec: GaussianFieldSpec, n: int, rng, threads: int = 1) -> ReplicateBatch:
    m = len(spec.measures)

    def draw(gen, count):
        return gen.standard_normal((count, m)) @ spec.chol.T

    values = _replicates(n, draw, rng, threads).reshape(n, m)
    meta = {"seed": _seed_of(rng), "jitter": spec.jitter, **spec.description}
    return ReplicateBatch(values, measure_names(spec.measures), meta)


# --------------------------------------------------------------------------
# stable limit


def stable_marginal_params(phi: TestMeasure, gamma: float) -> StableParams:
    """Scale ``||phi||_gamma`` and skewness ``(||phi_+||^g - ||phi_-||^g) / ||phi||^g``."""
    pos, neg = phi.signed_lp_powers(gamma)
    total = pos + neg
    if total == 0.0:
        return StableParams(gamma, 0.0, 1.0)
    return StableParams(gamma, total ** (1.0 / gamma), (pos - neg) / total)


def sample_stable_marginal(phi: TestMeasure, gamma: float, rng: np.random.Generator, size=None):
    """Draws of ``Lambda_gamma(phi)``."""
    return stable_sample(stable_marginal_params(phi, gamma), rng, size)


def _stable_grid(measures: Sequence[TestMeasure], h: float):
    d = measures[0].d
    side = h ** (1.0 / d)
    lo = np.min([m.support_bbox()[0] for m in measures], axis=0)
    hi = np.max([m.support_bbox()[1] for m in measures], axis=0)
    for m in measures:
        for _, r in m.atoms:
            if not isinstance(r, Box):
                raise GridError("stable grid sampling needs box atoms")
            for x in r.lo + r.hi:
                k = x / side
                if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)):
                    raise GridError(f"cell side {side} does not divide atom endpoint {x}")
    start = np.round(lo / side).astype(int)
    stop = np.round(hi / side).astype(int)
    axes = [(np.arange(a, b) + 0.5) * side for a, b in zip(start, stop)]
    centers = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    return centers


def sample_stable_field(measures: Sequence[TestMeasure], gamma: float, grid_resolution: float, rng, n: int = 1, threads: int = 1) -> ReplicateBatch:
    """Joint draws of ``Lambda_gamma(phi_k)`` from cell variables of volume ``grid_resolution``."""
    measures = list(measures)
    centers = _stable_grid(measures, grid_resolution)
    values_at = np.stack([m.value(centers) for m in measures], axis=0)  # (m, cells)
    cell = StableParams(gamma, grid_resolution ** (1.0 / gamma), 1.0)

    def draw(gen, count):
        out = np.empty((count, len(measures)))
        for r in range(count):
            out[r] = values_at @ stable_sample(cell, gen, len(centers))
        return out

    values = _replicates(n, draw, rng, threads).reshape(n, len(measures))
    meta = {"seed": _seed_of(rng), "gamma": gamma, "grid_resolution": grid_resolution, "cells": len(centers)}
    return ReplicateBatch(values, measure_names(measures), meta)


# --------------------------------------------------------------------------
# intermediate limit


@dataclass(frozen=True)
class IntermediateFieldSpec:
    gamma: float
    shape: GrainShape
    sigma0: float
    delta: float | None = None
    small_jump_mode: str = "gaussian"
    rotated: bool = False

    def __post_init__(self):
        if not 1.0 < self.gamma < 2.0:
            raise ParameterError(f"tail index must lie in (1, 2), got {self.gamma}")
        if not self.sigma0 > 0.0:
            raise ParameterError(f"sigma0 must be positive, got {self.sigma0}")
        if self.delta is not None and not self.delta > 0.0:
            raise ParameterError(f"delta must be positive, got {self.delta}")
        if self.small_jump_mode not in ("gaussian", "neglect"):
            raise ParameterError(f"unknown small-jump mode {self.small_jump_mode!r}")

    @classmethod
    def unit(cls, gamma: float, shape: GrainShape, **kw) -> "IntermediateFieldSpec":
        """The spec whose dilatation scale is exactly one, so it samples ``J*(phi)`` itself."""
        return cls(gamma, shape, 1.0 / gamma, **kw)

    @property
    def d(self) -> int:
        return self.shape.d

    @property
    def sigma(self) -> float:
        return (self.gamma * self.sigma0) ** (1.0 / ((self.gamma - 1.0) * self.d))

    @property
    def levy(self) -> PowerMeasure:
        return PowerMeasure(1.0, self.gamma, 0.0)

    def dilated(self, measures: Sequence[TestMeasure]) -> list:
        s = self.sigma
        return [dilate(m, s) if s != 1.0 else m for m in measures]

    def threshold(self, dilated: Sequence[TestMeasure]) -> float:
        if self.delta is not None:
            return self.delta
        return 0.1 * min(m.min_atom_diameter for m in dilated if m.atoms) ** self.d


def small_jump_covariance(spec: IntermediateFieldSpec, dilated: Sequence[TestMeasure], delta: float) -> np.ndarray:
    """``int_0^delta int phi_i(x + v**(1/d) C) phi_j(x + v**(1/d) C) dx v**(-gamma-1) dv``."""
    return gram(
        list(dilated),
        lambda a, b: integrate_overlap_product(a, b, spec.shape, spec.levy, spec.rotated, vmax=delta, rtol=1e-8),
    )


def sample_intermediate(spec: IntermediateFieldSpec, measures: Sequence[TestMeasure], n: int, rng, threads: int = 1) -> ReplicateBatch:
    """Draws of ``(J*(phi_1 sigma), ..., J*(phi_m sigma))``."""
    measures = list(measures)
    if any(m.d != spec.d for m in measures):
        raise DimensionError("measure and shape dimensions differ")
    phis = spec.dilated(measures)
    delta = spec.threshold(phis)
    scale = min((m.min_atom_diameter for m in phis if m.atoms), default=1.0) ** spec.d
    if delta > scale:
        warnings.warn(f"small-jump threshold {delta} exceeds the atom scale {scale}", RuntimeWarning)
    g = spec.gamma
    lo = np.min([m.support_bbox()[0] for m in phis], axis=0)
    hi = np.max([m.support_bbox()[1] for m in phis], axis=0)
    sampler = GrainSampler(PowerMeasure(1.0, g, delta), spec.shape, lo, hi, spec.rotated)
    compensator = np.array([m.total_mass for m in phis]) * delta ** (1.0 - g) / (g - 1.0)
    small = small_jump_covariance(spec, phis, delta)
    chol = cholesky_with_jitter(small)[0] if spec.small_jump_mode == "gaussian" else None
    m = len(phis)

    def draw(gen, count):
        out = batch_field_values(phis, sampler, gen, count) - compensator
        if chol is not None:
            out += gen.standard_normal((count, m)) @ chol.T
        return out

    values = _replicates(n, draw, rng, threads).reshape(n, m)
    meta = {
        "seed": _seed_of(rng),
        "gamma": g,
        "sigma0": spec.sigma0,
        "sigma": spec.sigma,
        "delta": delta,
        "small_jump_mode": spec.small_jump_mode,
        "omitted_variance": np.diag(small).tolist() if chol is None else [0.0] * m,
        "expected_large_jumps": sampler.expected_count,
    }
    return ReplicateBatch(values, measure_names(measures), meta)


def intermediate_cf(spec: IntermediateFieldSpec, phi: TestMeasure, t: float) -> complex:
    """``E exp(i t J*(phi_sigma))`` by quadrature of the Poisson exponent (d = 1)."""
    if spec.d != 1:
        raise DimensionError("the intermediate characteristic function is implemented for d = 1")
    if t == 0.0:
        return 1.0 + 0.0j
    phis = spec.dilated([phi])[0]
    return complex(np.exp(_profile.integrate_cf_profile(phis, t, spec.levy)))


def intermediate_variance(spec: IntermediateFieldSpec, phi: TestMeasure) -> float:
    """``Var J*(phi_sigma)``, which equals the Gaussian-limit variance of ``phi_sigma``."""
    return cov_limit(KernelSpec(spec.gamma, spec.shape, spec.rotated), *(spec.dilated([phi]) * 2))


# --------------------------------------------------------------------------
# reports


def ks_critical_value(n: int, m: int, level: float = 0.01) -> float:
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    return math.sqrt(-0.5 * math.log(level / 2.0)) * math.sqrt((n + m) / (n * m))


def aggregate_similarity_check(gamma: float, shape: GrainShape, phi: TestMeasure, n_agg: int, reps: int, rng, level: float = 0.01) -> dict:
    """Compare ``sum_{k <= n_agg} J*_k(phi)`` with ``J*(phi_s)``, ``s = n_agg**(1/((gamma-1)d))``."""
    if n_agg < 1:
        raise ParameterError("n_agg must be positive")
    spec = IntermediateFieldSpec.unit(gamma, shape)
    s = n_agg ** (1.0 / ((gamma - 1.0) * shape.d))
    gen = rng if isinstance(rng, np.random.Generator) else np.random.Generator(np.random.Philox(int(rng)))
    single = sample_intermediate(spec, [phi], reps * n_agg, gen).values[:, 0]
    agg = single.reshape(reps, n_agg).sum(axis=1)
    scaled = sample_intermediate(spec, [dilate(phi, s)], reps, gen).values[:, 0]
    res = stats.ks_2samp(agg, scaled)
    crit = ks_critical_value(reps, reps, level)
    return {
        "statistic": float(res.statistic),
        "critical_value": crit,
        "pvalue": float(res.pvalue),
        "pass": bool(res.statistic < crit),
        "n": reps,
        "n_agg": n_agg,
        "s": s,
        "seed": _seed_of(rng),
        "var_aggregate": float(np.var(agg, ddof=1)),
        "var_single": float(np.var(single, ddof=1)),
    }


def _cf_stats(x: np.ndarray, t: float):
    z = np.exp(1j * t * x)
    mean = z.mean()
    modulus = abs(mean)
    # delta method for |mean|: project the sample onto the direction of the mean
    direction = mean / modulus if modulus > 0 else 1.0
    proj = (z * np.conj(direction)).real
    return modulus, float(proj.std(ddof=1) / math.sqrt(len(x)))


def non_self_similarity_witness(gamma: float, shape: GrainShape, phi: TestMeasure, s_grid, reps: int, rng, t: float = 1.0, gaussian_control: bool = False) -> dict:
    """CF modulus of ``J*(phi_s) / s**((gamma-1)d/2)`` across ``s_grid``.

    The rescaling keeps the variance fixed, so a self-similar field would give
    a constant modulus; a spread above five standard errors witnesses the
    failure of self-similarity.  ``gaussian_control`` runs the same statistic
    on the Gaussian limit instead.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(np.diff(s_grid) <= 0.0):
        raise ParameterError("s_grid must be increasing")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.Generator(np.random.Philox(int(rng)))
    spec = IntermediateFieldSpec.unit(gamma, shape)
    kspec = KernelSpec(gamma, shape)
    rows = []
    for s in s_grid:
        phis = dilate(phi, s)
        norm = s ** ((gamma - 1.0) * shape.d / 2.0)
        if gaussian_control:
            x = sample_gaussian_field(GaussianFieldSpec.from_kernel(kspec, [phis]), reps, gen).values[:, 0]
        else:
            x = sample_intermediate(spec, [phis], reps, gen).values[:, 0]
        x = x / norm
        mod, se = _cf_stats(x, t)
        rows.append({"s": float(s), "cf_modulus": mod, "se": se, "variance": float(np.var(x, ddof=1))})
    mods = np.array([r["cf_modulus"] for r in rows])
    se = max(r["se"] for r in rows)
    spread = float(mods.max() - mods.min())
    return {
        "rows": rows,
        "spread": spread,
        "se": se,
        "non_constant": bool(spread > 5.0 * se),
        "inconclusive": bool(se > 0.05),
        "n": reps,
        "seed": _seed_of(rng),
        "gaussian_control": gaussian_control,
    }
