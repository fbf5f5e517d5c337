"""Second-order objects of the Gaussian and intermediate limits.

With ``g(w) = |C & (C + w)|`` the covariogram of the grain shape, the limit
covariance kernel is

    K(x) = int_0^inf g(v**(-1/d) x) v**(-gamma) dv
         = d |x|**(d(1-gamma)) int_0^U g(u x/|x|) u**(d gamma - d - 1) du,

which is homogeneous of degree ``-(gamma-1) d``.  For the interval and the
cube the covariogram is a polynomial along rays, so ``K`` is exact; for balls
the radial integral uses an algebraic-weight quadrature.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate

from . import _profile
from .errors import DimensionError, ParameterError, QuadratureError, SingularityError
from .geometry import Ball, GrainShape, TestMeasure, cross_covariogram, gram
from .grain_model import ball_and_annulus, integrate_overlap_product
from .heavytail import PowerMeasure, c_alpha_d


@dataclass(frozen=True)
class KernelSpec:
    gamma: float
    shape: GrainShape
    rotated: bool = False

    def __post_init__(self):
        if not 1.0 < self.gamma < 2.0:
            raise ParameterError(f"tail index must lie in (1, 2), got {self.gamma}")
        if self.rotated and self.shape.d > 2:
            raise DimensionError("rotation averages are implemented for d <= 2")

    @property
    def d(self) -> int:
        return self.shape.d

    @property
    def hurst(self) -> float:
        return (3.0 - self.gamma) / 2.0

    @property
    def alpha(self) -> float:
        """Riesz order ``2H - 1 = 2 - gamma`` of the matching fractional noise."""
        return 2.0 - self.gamma

    @property
    def isotropic(self) -> bool:
        return self.d == 1 or not self.shape.is_box or self.rotated

    def to_json(self) -> dict:
        return {"gamma": self.gamma, "shape": self.shape.to_json(), "rotated": self.rotated}


def _radial_integral(spec: KernelSpec) -> float:
    """``d int_0^U gbar(u) u**(d gamma - d - 1) du`` for isotropic covariograms (d >= 2)."""
    d, g = spec.d, spec.gamma
    e = d * g - d - 1.0
    reach = spec.shape.covariogram_reach(spec.rotated)
    if d == 2:
        fn = lambda u: float(spec.shape.radial_covariogram(u, spec.rotated))
    else:
        R = spec.shape.radius
        fn = lambda u: math.pi / 12.0 * (4.0 * R + u) * (2.0 * R - u) ** 2
    pts = [1.0] if spec.shape.is_box else []
    total = 0.0
    edges = [0.0] + pts + [reach]
    for a, b in zip(edges[:-1], edges[1:]):
        if a == 0.0:
            val, err = integrate.quad(fn, a, b, weight="alg", wvar=(e, 0.0), epsabs=0.0, epsrel=1e-13, limit=200)
        else:
            val, err = integrate.quad(lambda u: fn(u) * u**e, a, b, epsabs=0.0, epsrel=1e-13, limit=200)
        if err > 1e-9 * max(abs(val), 1e-300):
            raise QuadratureError(f"radial kernel integral error {err} too large")
        total += val
    return d * total


def _cube_ray(gamma: float, direction) -> np.ndarray:
    """``d int_0^U prod_i (1 - u a_i) u**(d gamma - d - 1) du`` for unit directions (n, d)."""
    a = np.abs(np.atleast_2d(direction))
    n, d = a.shape
    e = d * gamma - d
    U = 1.0 / a.max(axis=1)
    out = np.zeros(n)
    for row in range(n):
        coef = np.array([1.0])
        for ai in a[row]:
            coef = np.convolve(coef, [1.0, -ai])
        k = np.arange(len(coef))
        out[row] = d * np.sum(coef * U[row] ** (k + e) / (k + e))
    return out


def kernel_K(spec: KernelSpec, x) -> np.ndarray | float:
    """``K_{gamma,C}(x)`` at a point (shape (d,)) or points (shape (n, d))."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    pts = x.reshape(-1, spec.d)
    r = np.linalg.norm(pts, axis=1)
    if np.any(r == 0.0):
        raise SingularityError("K is infinite at the origin")
    radial = r ** (spec.d * (1.0 - spec.gamma))
    if spec.d == 1:
        out = radial / (spec.gamma * (spec.gamma - 1.0))
    elif spec.isotropic:
        out = radial * _radial_integral(spec)
    else:
        out = radial * _cube_ray(spec.gamma, pts / r[:, None])
    return float(out[0]) if single else out


def kernel_K_direct(spec: KernelSpec, x) -> float:
    """``int_0^inf |(v**(-1/d) x + C) & C| v**(-gamma) dv`` by adaptive quadrature (no rotation)."""
    x = np.asarray(x, dtype=float).reshape(spec.d)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise SingularityError("K is infinite at the origin")
    d, g = spec.d, spec.gamma
    cov = lambda v: float(spec.shape.covariogram(v ** (-1.0 / d) * x))
    reach = spec.shape.covariogram_reach(False) if d > 1 else 1.0
    v0 = (r / reach) ** d  # the covariogram vanishes for v < v0
    val, err = integrate.quad(lambda v: cov(v) * v ** (-g), v0, math.inf, epsabs=0.0, epsrel=1e-11, limit=500)
    return val


def rotation_average(spec: KernelSpec, r: float = 1.0, nodes: int = 32) -> float:
    """Mean of the unrotated kernel over the circle of radius ``r`` (Gauss-Legendre per octant)."""
    if spec.d != 2:
        raise DimensionError("rotation averages are implemented for d = 2")
    base = KernelSpec(spec.gamma, spec.shape, False)
    s, w = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for k in range(8):
        a, b = k * math.pi / 4.0, (k + 1) * math.pi / 4.0
        th = a + (b - a) * 0.5 * (s + 1.0)
        pts = r * np.stack([np.cos(th), np.sin(th)], axis=1)
        total += np.sum(0.5 * (b - a) * w * kernel_K(base, pts))
    return total / (2.0 * math.pi)


def _d1_atoms(phi: TestMeasure):
    return [(w, r.lo[0], r.hi[0]) for w, r in phi.atoms]


def _power_double_integral_1d(phi: TestMeasure, psi: TestMeasure, beta: float) -> float:
    """``int int phi(x) psi(y) |x - y|**(-beta) dx dy`` in closed form for interval atoms."""
    G = lambda z: abs(z) ** (2.0 - beta) / ((1.0 - beta) * (2.0 - beta))
    total = 0.0
    for w, a, b in _d1_atoms(phi):
        for u, c, e in _d1_atoms(psi):
            total += w * u * (G(b - c) - G(a - c) - G(b - e) + G(a - e))
    return total


def _support_reach(phi: TestMeasure, psi: TestMeasure) -> float:
    lo1, hi1 = phi.support_bbox()
    lo2, hi2 = psi.support_bbox()
    return float(np.linalg.norm(np.maximum(np.abs(hi1 - lo2), np.abs(hi2 - lo1))))


def _polar_2d(phi: TestMeasure, psi: TestMeasure, exponent: float, angular, rtol: float) -> float:
    """``int_theta angular(theta) int_0^R r**exponent C(r e_theta) dr dtheta`` in the plane.

    The substitution ``r = R t**(1/(exponent+1))`` removes the radial
    singularity; composite Gauss-Legendre rules are refined until two
    successive levels agree to ``rtol``.
    """
    R = _support_reach(phi, psi)
    q = exponent + 1.0
    s, w = np.polynomial.legendre.leggauss(8)

    def rule(a, b, cells):
        edges = np.linspace(a, b, cells + 1)
        h = np.diff(edges)[:, None]
        return (edges[:-1, None] + 0.5 * h * (s + 1.0)).ravel(), (0.5 * h * w).ravel()

    def level(cells):
        t, wt = rule(0.0, 1.0, cells)
        r = R * t ** (1.0 / q)
        th, wth = rule(0.0, 2.0 * math.pi, 8 * max(cells // 8, 1))
        ang = np.array([angular(x) for x in th])
        total = 0.0
        for k in range(len(th)):
            e = np.array([math.cos(th[k]), math.sin(th[k])])
            vals = cross_covariogram(phi, psi, r[:, None] * e)
            total += wth[k] * ang[k] * np.sum(wt * vals)
        return total * R**q / q

    cells, prev = 16, level(16)
    for _ in range(4):
        cells *= 2
        cur = level(cells)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-12):
            return cur
        prev = cur
    raise QuadratureError(f"polar quadrature did not reach rtol={rtol} (last change {abs(cur - prev)})")


def riesz_inner(phi: TestMeasure, psi: TestMeasure, alpha: float, rtol: float = 1e-5) -> float:
    """``c_{alpha,d} int int phi(dx) psi(dy) / |x - y|**((1 - alpha) d)``."""
    if phi.d != psi.d:
        raise DimensionError("measures of different dimension")
    d = phi.d
    c = c_alpha_d(alpha, d)
    if not phi.atoms or not psi.atoms:
        return 0.0
    if d == 1:
        return c * _power_double_integral_1d(phi, psi, 1.0 - alpha)
    if d == 2:
        return c * _polar_2d(phi, psi, 1.0 - 2.0 * (1.0 - alpha), lambda th: 1.0, rtol)
    raise DimensionError("Riesz inner products are implemented for d <= 2")


def cov_limit(spec: KernelSpec, phi: TestMeasure, psi: TestMeasure, rtol: float = 1e-5) -> float:
    """``int int phi(dx) K(x - y) psi(dy)``, the Gaussian-limit covariance."""
    if not (phi.d == psi.d == spec.d):
        raise DimensionError("measures and kernel must share the dimension")
    if not phi.atoms or not psi.atoms:
        return 0.0
    g = spec.gamma
    if spec.d == 1:
        return _power_double_integral_1d(phi, psi, g - 1.0) / (g * (g - 1.0))
    if spec.d == 2:
        if spec.isotropic:
            k1 = kernel_K(spec, np.array([1.0, 0.0]))
            angular = lambda th: k1
        else:
            angular = lambda th: kernel_K(spec, np.array([math.cos(th), math.sin(th)]))
        return _polar_2d(phi, psi, 1.0 - 2.0 * (g - 1.0), angular, rtol)
    raise DimensionError("limit covariances are implemented for d <= 2")


def cov_limit_overlap_form(spec: KernelSpec, phi: TestMeasure, psi: TestMeasure, rtol: float = 1e-7) -> float:
    """The same covariance as ``int int phi(x + v**(1/d) C) psi(x + v**(1/d) C) dx v**(-gamma-1) dv``."""
    return integrate_overlap_product(phi, psi, spec.shape, PowerMeasure(1.0, spec.gamma, 0.0), spec.rotated, rtol=rtol)


def rotated_grain_constant(gamma: float, shape: GrainShape, d: int | None = None, nodes: int | None = None) -> float:
    """Constant ``c`` with ``W_{gamma, theta C} = c W_H`` for randomly rotated grains.

    ``c = (Kbar(e_1) / c_{2H-1,d})**(1/2)`` with ``Kbar`` the rotation-averaged
    kernel; ``nodes`` switches the average from the closed-form radial
    covariogram to a Gauss-Legendre rule with that many nodes per octant.
    """
    d = shape.d if d is None else d
    if d != shape.d:
        raise DimensionError("shape and dimension disagree")
    if d > 2:
        raise DimensionError("the rotated constant is implemented for d <= 2")
    spec = KernelSpec(gamma, shape, rotated=d == 2)
    e1 = np.eye(d)[0]
    kbar = rotation_average(spec, 1.0, nodes) if (nodes is not None and d == 2) else kernel_K(spec, e1)
    return math.sqrt(kbar / c_alpha_d(spec.alpha, d))


def lrd_limit_divergence(spec: KernelSpec, r_grid) -> np.ndarray:
    """``Cov(W(B_1), W(B_r \\ B_1))`` along an increasing ``r_grid``."""
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(np.diff(r_grid) <= 0.0):
        raise ParameterError("r_grid must be increasing")
    out = []
    for r in r_grid:
        b1, ann = ball_and_annulus(spec.d, r)
        out.append(cov_limit(spec, b1, ann))
    return np.array(out)


def limit_gram(spec: KernelSpec, measures: Sequence[TestMeasure]) -> np.ndarray:
    return gram(list(measures), lambda a, b: cov_limit(spec, a, b))


def write_kernel_table(spec: KernelSpec, points, path) -> Path:
    path = Path(path)
    pts = np.asarray(points, dtype=float).reshape(-1, spec.d)
    values = kernel_K(spec, pts)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{k}" for k in range(spec.d)] + ["K"])
        for p, v in zip(pts, np.atleast_1d(values)):
            writer.writerow([repr(float(t)) for t in p] + [repr(float(v))])
    return path


def write_gram_table(matrix, path) -> Path:
    path = Path(path)
    matrix = np.asarray(matrix)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["i", "j", "cov"])
        for i in range(matrix.shape[0]):
            for j in range(matrix.shape[1]):
                writer.writerow([i, j, repr(float(matrix[i, j]))])
    return path
