"""Exact simulation and exact moments of the pre-limit field.

The field is ``J(phi) = sum_j phi(X_j + (rho V_j)**(1/d) theta_j C)`` over a
Poisson process of germs with intensity ``lam`` and volumes ``rho V``.

Only grains that can meet the support of ``phi`` matter.  A grain of volume
``v`` can do so only if its centre lies in the support box widened by
``e v**(1/d)`` (``e`` the half extent of ``C``), a window whose volume is a
polynomial in ``v**(1/d)``.  Sampling each monomial of that polynomial
separately, with volumes from the correspondingly tilted law, gives an exact
sampler with no volume truncation at all.  A finite ``v_cut`` is applied by
thinning the untruncated sample, so runs with different cuts are coupled.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate

from . import _profile
from .errors import ContractViolation, DimensionError, ParameterError, QuadratureError
from .geometry import (
    INTERVAL,
    Ball,
    Box,
    Grain,
    GrainShape,
    TestMeasure,
    cross_covariogram,
    measure_of_grains,
)
from .heavytail import PowerMeasure, VolumeLaw, VolumeMeasure
from .streams import run_blocks


@dataclass(frozen=True)
class ModelParams:
    lam: float
    rho: float
    law: VolumeLaw
    shape: GrainShape = INTERVAL
    rotated: bool = False

    def __post_init__(self):
        if not (self.lam > 0.0 and self.rho > 0.0):
            raise ParameterError(f"need lam > 0 and rho > 0, got lam={self.lam}, rho={self.rho}")
        if self.rotated and self.shape.d > 2:
            raise DimensionError("rotated grains are supported for d <= 2")

    @property
    def d(self) -> int:
        return self.shape.d

    @property
    def intensity(self) -> VolumeMeasure:
        """The volume intensity ``lam F_rho(dv)``."""
        return self.law.intensity(self.lam, self.rho)

    def to_json(self) -> dict:
        return {
            "lam": self.lam,
            "rho": self.rho,
            "law": self.law.to_json(),
            "shape": self.shape.to_json(),
            "rotated": self.rotated,
        }


# --------------------------------------------------------------------------
# sampling


class GrainSampler:
    """Poisson grains of volume intensity ``measure`` that may meet ``[lo, hi]``."""

    def __init__(self, measure: VolumeMeasure, shape: GrainShape, lo, hi, rotated: bool = False, v_cut: float = math.inf):
        self.measure = measure
        self.shape = shape
        self.d = shape.d
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.rotated = bool(rotated) and shape.d == 2 and shape.is_box
        self.half = shape.half_extent(rotated)
        self.v_cut = v_cut
        # |W(v)| = prod_i (L_i + 2 e s), s = v**(1/d), as polynomial coefficients in s
        coef = np.array([1.0])
        for length in self.hi - self.lo:
            coef = np.convolve(coef, [length, 2.0 * self.half])
        self.coef = coef
        self.masses = np.array(
            [c * measure.moment(k / self.d) if c > 0.0 else 0.0 for k, c in enumerate(coef)]
        )

    @property
    def expected_count(self) -> float:
        return float(self.masses.sum())

    def window(self, v):
        s = np.asarray(v, dtype=float) ** (1.0 / self.d)
        return self.lo - self.half * s[..., None], self.hi + self.half * s[..., None]

    def draw(self, rng: np.random.Generator):
        counts = rng.poisson(self.masses)
        parts = [self.measure.sample_tilted(k / self.d, n, rng) for k, n in enumerate(counts) if n > 0]
        vols = np.concatenate(parts) if parts else np.empty(0)
        wlo, whi = self.window(vols)
        centers = wlo + rng.random((len(vols), self.d)) * (whi - wlo)
        angles = rng.uniform(0.0, 2.0 * math.pi, len(vols)) if self.rotated else None
        if math.isfinite(self.v_cut):
            keep = vols <= self.v_cut
            vols, centers = vols[keep], centers[keep]
            angles = angles[keep] if angles is not None else None
        return centers, vols, angles

    def draw_batch(self, rng: np.random.Generator, count: int):
        """Grains of ``count`` independent replicates, with ``owner`` giving each grain's replicate."""
        counts = rng.poisson(self.masses, size=(count, len(self.masses)))
        owners, parts = [], []
        for k in range(len(self.masses)):
            total = int(counts[:, k].sum())
            if total:
                parts.append(self.measure.sample_tilted(k / self.d, total, rng))
                owners.append(np.repeat(np.arange(count), counts[:, k]))
        vols = np.concatenate(parts) if parts else np.empty(0)
        owner = np.concatenate(owners) if owners else np.empty(0, dtype=int)
        wlo, whi = self.window(vols)
        centers = wlo + rng.random((len(vols), self.d)) * (whi - wlo)
        angles = rng.uniform(0.0, 2.0 * math.pi, len(vols)) if self.rotated else None
        if math.isfinite(self.v_cut):
            keep = vols <= self.v_cut
            vols, centers, owner = vols[keep], centers[keep], owner[keep]
            angles = angles[keep] if angles is not None else None
        return centers, vols, angles, owner


@dataclass
class GrainRealization:
    centers: np.ndarray
    volumes: np.ndarray
    angles: np.ndarray | None
    shape: GrainShape
    support_lo: np.ndarray
    support_hi: np.ndarray
    half_extent: float
    v_cut: float
    bias_bound: float

    def __len__(self) -> int:
        return len(self.volumes)

    @property
    def grains(self) -> list:
        ang = self.angles if self.angles is not None else np.zeros(len(self))
        return [Grain(c, v, a, self.shape) for c, v, a in zip(self.centers, self.volumes, ang)]

    def window(self, v):
        s = float(v) ** (1.0 / self.shape.d)
        return self.support_lo - self.half_extent * s, self.support_hi + self.half_extent * s


def truncation_bias(measure: VolumeMeasure, phi: TestMeasure, v_cut: float) -> float:
    """``|phi(R^d)| int_{v > v_cut} v mu(dv)``: the mean lost by dropping large grains."""
    if not math.isfinite(v_cut):
        return 0.0
    return abs(phi.total_mass) * measure.moment(1.0, v_cut, math.inf)


def simulate_grains(params: ModelParams, phi: TestMeasure, rng: np.random.Generator, v_cut: float = math.inf) -> GrainRealization:
    if phi.d != params.d:
        raise DimensionError("measure and model dimensions differ")
    measure = params.intensity
    if not v_cut > 0.0 or measure.moment(0.0, 0.0, v_cut) == 0.0:
        raise ParameterError(f"v_cut={v_cut} leaves an empty volume law")
    lo, hi = phi.support_bbox()
    sampler = GrainSampler(measure, params.shape, lo, hi, params.rotated, v_cut)
    centers, vols, angles = sampler.draw(rng)
    return GrainRealization(
        centers, vols, angles, params.shape, lo, hi, sampler.half, v_cut, truncation_bias(measure, phi, v_cut)
    )


def evaluate_J(realization: GrainRealization, phi: TestMeasure) -> float:
    lo, hi = phi.support_bbox()
    tol = 1e-12 * (1.0 + np.max(np.abs(np.concatenate([lo, hi]))))
    if np.any(lo < realization.support_lo - tol) or np.any(hi > realization.support_hi + tol):
        raise ContractViolation("measure support exceeds the region the realization was simulated for")
    if len(realization) == 0:
        return 0.0
    return float(np.sum(measure_of_grains(phi, realization.shape, realization.centers, realization.volumes, realization.angles)))


def field_values(phis: Sequence[TestMeasure], sampler: GrainSampler, rng: np.random.Generator) -> np.ndarray:
    """One replicate of ``(J(phi_1), ..., J(phi_m))`` from a shared grain sample."""
    centers, vols, angles = sampler.draw(rng)
    if len(vols) == 0:
        return np.zeros(len(phis))
    return np.array([np.sum(measure_of_grains(p, sampler.shape, centers, vols, angles)) for p in phis])


MAX_BATCH_GRAINS = 2_000_000


def batch_field_values(phis: Sequence[TestMeasure], sampler: GrainSampler, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` replicates of ``(J(phi_1), ..., J(phi_m))``, drawn in memory-bounded sub-batches."""
    out = np.empty((count, len(phis)))
    step = max(1, int(MAX_BATCH_GRAINS / max(sampler.expected_count, 1.0)))
    for start in range(0, count, step):
        k = min(step, count - start)
        centers, vols, angles, owner = sampler.draw_batch(rng, k)
        for j, p in enumerate(phis):
            vals = measure_of_grains(p, sampler.shape, centers, vols, angles) if len(vols) else np.empty(0)
            out[start : start + k, j] = np.bincount(owner, weights=vals, minlength=k)
    return out


# --------------------------------------------------------------------------
# replicate batches


@dataclass
class ReplicateBatch:
    """Replicates x measures matrix with provenance."""

    values: np.ndarray
    names: list
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def column(self, k) -> np.ndarray:
        if isinstance(k, str):
            k = self.names.index(k)
        return self.values[:, k]

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.names)
        for row in self.values:
            writer.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv_text())
        path.with_suffix(".json").write_text(json.dumps(self.meta, indent=2, sort_keys=True, default=_jsonable))
        return path

    @classmethod
    def load(cls, path) -> "ReplicateBatch":
        path = Path(path)
        with path.open() as fh:
            rows = list(csv.reader(fh))
        side = path.with_suffix(".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        values = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(rows[0]))
        return cls(values, rows[0], meta)

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv_text().encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "to_json"):
        return obj.to_json()
    raise TypeError(f"not serializable: {type(obj)}")


def measure_names(phis: Sequence[TestMeasure]) -> list:
    return [p.name or f"phi{k}" for k, p in enumerate(phis)]


def simulate_replicates(
    params: ModelParams,
    phis: Sequence[TestMeasure],
    n: int,
    seed: int,
    grid: int = 0,
    threads: int = 1,
    v_cut: float = math.inf,
    center: bool = True,
    b: float = 1.0,
) -> ReplicateBatch:
    """``n`` replicates of ``(J(phi_k) - E J(phi_k)) / b`` (or raw ``J`` if ``center`` is false)."""
    phis = list(phis)
    d = params.d
    if any(p.d != d for p in phis):
        raise DimensionError("measure and model dimensions differ")
    boxes = [p.support_bbox() for p in phis if p.atoms]
    lo = np.min([bx[0] for bx in boxes], axis=0) if boxes else np.zeros(d)
    hi = np.max([bx[1] for bx in boxes], axis=0) if boxes else np.zeros(d)
    measure = params.intensity
    sampler = GrainSampler(measure, params.shape, lo, hi, params.rotated, v_cut)
    shift = np.array([mean_J(params, p) for p in phis]) if center else np.zeros(len(phis))

    def draw(rng, count):
        return (batch_field_values(phis, sampler, rng, count) - shift) / b

    values = run_blocks(n, draw, seed, grid, threads).reshape(n, len(phis))
    meta = {
        "seed": int(seed),
        "grid": int(grid),
        "params": params.to_json(),
        "measures": [p.to_json() for p in phis],
        "v_cut": v_cut if math.isfinite(v_cut) else "inf",
        "bias_bound": max((truncation_bias(measure, p, v_cut) for p in phis), default=0.0) / b,
        "normalizer": b,
        "centered": center,
    }
    return ReplicateBatch(values, measure_names(phis), meta)


# --------------------------------------------------------------------------
# exact moments


def mean_J(params: ModelParams, phi: TestMeasure) -> float:
    """``E J(phi) = lam rho EV phi(R^d)``."""
    return params.lam * params.rho * params.law.mean * phi.total_mass


def overlap_product(phi: TestMeasure, psi: TestMeasure, shape: GrainShape, v, rotated: bool = False):
    """``h(v) = int phi(x + v**(1/d) theta C) psi(x + v**(1/d) theta C) dx`` (rotation averaged)."""
    if phi.d != psi.d or phi.d != shape.d:
        raise DimensionError("measures and shape must share the dimension")
    if shape.d == 1:
        return _profile.overlap_product(phi, psi, v)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return np.array([_overlap_product_nd(phi, psi, shape, float(x), rotated) for x in v])


_GL8 = np.polynomial.legendre.leggauss(8)


def _composite(a, b, cells):
    s, w = _GL8
    edges = np.linspace(a, b, cells + 1)
    h = np.diff(edges)[:, None]
    nodes = (edges[:-1, None] + 0.5 * h * (s + 1.0)).ravel()
    return nodes, (0.5 * h * w).ravel()


def _overlap_product_nd(phi, psi, shape, v, rotated):
    # h(v) = int C_phi,psi(w) g_{sC}(w) dw = v s^d int C(s u) g_C(u) du with s = v^(1/d)
    d = shape.d
    s = v ** (1.0 / d)
    boxes = all(isinstance(r, Box) for _, r in phi.atoms + psi.atoms)
    if shape.is_box and not rotated and boxes:
        # cube grains and box atoms: the overlap product factorizes over coordinates
        total = 0.0
        for a, A in phi.atoms:
            for b, B in psi.atoms:
                term = a * b
                for k in range(d):
                    fa = TestMeasure.indicator(Box((A.lo[k],), (A.hi[k],)))
                    fb = TestMeasure.indicator(Box((B.lo[k],), (B.hi[k],)))
                    term *= float(_profile.overlap_product(fa, fb, [s])[0])
                total += term
        return total
    if d > 2:
        raise DimensionError("overlap products with ball atoms or ball grains are implemented for d <= 2")
    if shape.is_box and not rotated:
        x, wx = _composite(-1.0, 1.0, 48)
        U = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2)
        W = np.outer(wx, wx).ravel()
        g = shape.covariogram(U)
    else:
        reach = shape.covariogram_reach(rotated)
        r, wr = _composite(0.0, reach, 16)
        t, wt = _composite(0.0, 2.0 * math.pi, 32)
        R, T = np.meshgrid(r, t, indexing="ij")
        U = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
        W = (np.outer(wr * r, wt)).ravel()
        g = np.repeat(shape.radial_covariogram(r, rotated), len(t))
    return v * s**d * float(np.sum(W * g * cross_covariogram(phi, psi, s * U)))


def integrate_overlap_product(
    phi: TestMeasure,
    psi: TestMeasure,
    shape: GrainShape,
    measure: VolumeMeasure,
    rotated: bool = False,
    vmax: float = math.inf,
    rtol: float = 1e-6,
) -> float:
    """``int h(v) mu(dv)``: exact in d = 1, adaptive quadrature for d = 2."""
    if shape.d == 1:
        return _profile.integrate_overlap_product(phi, psi, measure, vmax)
    from .heavytail import AtomMeasure

    if isinstance(measure, AtomMeasure):
        return float(measure.mass * overlap_product(phi, psi, shape, measure.at, rotated)[0]) if measure.at <= vmax else 0.0
    h = lambda v: float(overlap_product(phi, psi, shape, v, rotated)[0])
    lo = measure.lo
    if isinstance(measure, PowerMeasure):
        # t = v**(-gamma) turns the power density into Lebesgue measure
        g = measure.gamma
        t_hi = math.inf if lo == 0.0 else lo ** (-g)
        t_lo = 0.0 if not math.isfinite(vmax) else vmax ** (-g)
        fn = lambda t: h(t ** (-1.0 / g)) if t > 0.0 else 0.0
        pieces = [(t_lo, min(t_hi, 1.0)), (min(t_hi, 1.0), t_hi)]
        total, err = 0.0, 0.0
        for a, b in pieces:
            if b > a:
                val, e = integrate.quad(fn, a, b, epsrel=rtol, limit=400)
                total, err = total + val, err + e
        total *= measure.scale / g
    else:
        val, err = integrate.quad(lambda v: h(v) * float(measure.density(v)), lo, vmax, epsrel=rtol, limit=400)
        total = val
    if not np.isfinite(total) or err > 1e3 * rtol * max(abs(total), 1e-300):
        raise QuadratureError(f"overlap-product integral did not converge (value {total}, error {err})")
    return float(total)


def cov_J(params: ModelParams, phi: TestMeasure, psi: TestMeasure, v_cut: float = math.inf) -> float:
    """``Cov(J(phi), J(psi)) = lam int int phi(x + v**(1/d) C) psi(x + v**(1/d) C) dx F_rho(dv)``."""
    rtol = 1e-6 if params.d == 1 else 1e-3
    return integrate_overlap_product(phi, psi, params.shape, params.intensity, params.rotated, v_cut, rtol)


def char_functional_J(params: ModelParams, phi: TestMeasure, b: float, t: float) -> complex:
    """``E exp(i t (J(phi) - E J(phi)) / b)`` from the Poisson exponent (d = 1)."""
    if params.d != 1:
        raise DimensionError("the characteristic-functional quadrature is implemented for d = 1")
    if not b > 0.0:
        raise ParameterError(f"normalizer must be positive, got {b}")
    if t == 0.0:
        return 1.0 + 0.0j
    return complex(np.exp(_profile.integrate_cf_profile(phi, t / b, params.intensity)))


def ball_and_annulus(d: int, r: float):
    """``(1_{B_1}, 1_{B_r} - 1_{B_1})`` for centred balls of radius 1 and ``r``."""
    if not r > 1.0:
        raise ParameterError(f"annulus radius must exceed 1, got {r}")
    b1 = TestMeasure.indicator(Ball(np.zeros(d), 1.0))
    br = TestMeasure.indicator(Ball(np.zeros(d), r))
    return b1, br - b1


def lrd_covariance_curve(params: ModelParams, r_grid) -> np.ndarray:
    """``Cov(J(B_1), J(B_r \\ B_1))`` along ``r_grid``."""
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(np.diff(r_grid) <= 0.0):
        raise ParameterError("r_grid must be increasing")
    out = []
    for r in r_grid:
        b1, ann = ball_and_annulus(params.d, r)
        out.append(cov_J(params, b1, ann))
    return np.array(out)
