"""Exact one-dimensional grain profiles.

For an interval grain and a piecewise-constant ``phi`` on the line, the map
``x -> phi(x + vC)`` is piecewise linear with breakpoints ``e +- v/2`` (``e``
running over the atom endpoints).  Consequently

* ``h(v) = int phi(x + vC) psi(x + vC) dx`` is a cubic polynomial between the
  kinks ``v = |e_k - e_l|`` and affine beyond the span ``D`` of the endpoints;
* ``f(v) = int Psi(tau phi(x + vC)) dx`` is analytic between kinks and affine
  beyond ``D`` with slope ``Psi(tau phi(R))``.

Integrals of ``h`` against a volume measure are then sums of power moments,
and integrals of ``f`` need Gauss-Legendre rules on a geometric partition.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import DimensionError
from .geometry import Box, TestMeasure
from .heavytail import AtomMeasure, PowerMeasure, VolumeMeasure, psi, psi_second_order

_GL16 = np.polynomial.legendre.leggauss(16)
_GL8 = np.polynomial.legendre.leggauss(8)


def _atoms(phi: TestMeasure):
    if phi.d != 1:
        raise DimensionError("exact profiles are available in d = 1 only")
    w = np.array([a[0] for a in phi.atoms])
    lo = np.array([a[1].lo[0] for a in phi.atoms])
    hi = np.array([a[1].hi[0] for a in phi.atoms])
    return w, lo, hi


def endpoints(*measures: TestMeasure) -> np.ndarray:
    pts = []
    for m in measures:
        _, lo, hi = _atoms(m)
        pts.extend(lo)
        pts.extend(hi)
    return np.unique(pts)


def kinks(*measures: TestMeasure) -> np.ndarray:
    """Sorted volumes at which the breakpoint order changes, including 0."""
    e = endpoints(*measures)
    k = np.unique(np.abs(e[:, None] - e[None, :]).ravel())
    return k if k.size else np.zeros(1)


def profile(phi: TestMeasure, x, v):
    """``phi(x + vC)`` for the interval shape (broadcasting over ``x`` and ``v``)."""
    w, lo, hi = _atoms(phi)
    x = np.asarray(x, dtype=float)[..., None]
    half = 0.5 * np.asarray(v, dtype=float)[..., None]
    ov = np.clip(np.minimum(hi, x + half) - np.maximum(lo, x - half), 0.0, None)
    return ov @ w


def _breaks(e, v):
    half = 0.5 * np.asarray(v, dtype=float)[:, None]
    return np.sort(np.concatenate([e[None, :] - half, e[None, :] + half], axis=1), axis=1)


def overlap_product(phi: TestMeasure, psi_: TestMeasure, v):
    """``h(v) = int phi(x + vC) psi(x + vC) dx`` evaluated exactly (Simpson per linear piece)."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    e = endpoints(phi, psi_)
    if e.size == 0:
        return np.zeros(v.shape)
    X = _breaks(e, v)
    mid = 0.5 * (X[:, 1:] + X[:, :-1])
    vv = v[:, None]
    fa, fm, fb = (profile(phi, X[:, :-1], vv), profile(phi, mid, vv), profile(phi, X[:, 1:], vv))
    ga, gm, gb = (profile(psi_, X[:, :-1], vv), profile(psi_, mid, vv), profile(psi_, X[:, 1:], vv))
    return np.sum(np.diff(X, axis=1) * (fa * ga + 4.0 * fm * gm + fb * gb) / 6.0, axis=1)


def cf_profile(phi: TestMeasure, tau: float, v):
    """``f(v) = int Psi(tau phi(x + vC)) dx`` evaluated exactly per linear piece."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    e = endpoints(phi)
    if e.size == 0:
        return np.zeros(v.shape, dtype=complex)
    X = _breaks(e, v)
    u = tau * profile(phi, X, v[:, None])
    u0, u1 = u[:, :-1], u[:, 1:]
    du = u1 - u0
    length = np.diff(X, axis=1)
    big = np.abs(du) >= 0.5
    closed = -1j * (psi_second_order(u1) - psi_second_order(u0)) / np.where(big, du, 1.0)
    s, wts = _GL8
    nodes = u0[..., None] + du[..., None] * (0.5 * (s + 1.0))
    gauss = np.sum(0.5 * wts * psi(nodes), axis=-1)
    return np.sum(length * np.where(big, closed, gauss), axis=1)


def _cubic_fit(h, a, b, through_origin):
    """Monomial coefficients of the cubic ``h`` on ``[a, b]``."""
    if through_origin:
        t = np.array([0.5, 1.0]) * b
        vals = h(t)
        m = np.stack([t**2, t**3], axis=1)
        c2, c3 = np.linalg.solve(m, vals)
        return np.array([0.0, 0.0, c2, c3])
    t = a + (b - a) * (0.5 - 0.5 * np.cos(np.pi * np.arange(4) / 3.0))
    return np.linalg.solve(np.vander(t, 4, increasing=True), h(t))


def integrate_overlap_product(
    phi: TestMeasure, psi_: TestMeasure, measure: VolumeMeasure, vmax: float = math.inf
) -> float:
    """``int h(v) mu(dv)`` over ``(0, vmax]``, exact up to rounding."""
    if not phi.atoms or not psi_.atoms:
        return 0.0
    k = kinks(phi, psi_)
    span = float(k[-1])
    h = lambda t: overlap_product(phi, psi_, t)
    if isinstance(measure, AtomMeasure):
        return float(measure.mass * h(np.array([measure.at]))[0]) if measure.at <= vmax else 0.0
    total = 0.0
    for a, b in zip(k[:-1], k[1:]):
        if a >= vmax:
            break
        hi = min(b, vmax)
        if hi <= measure.lo:
            continue
        c = _cubic_fit(h, a, b, a == 0.0)
        total += sum(c[p] * measure.moment(p, a, hi) for p in range(4) if c[p] != 0.0)
    if vmax > span:
        hd = float(h(np.array([span]))[0])
        slope = phi.total_mass * psi_.total_mass
        m0 = measure.moment(0.0, span, vmax)
        m1 = measure.moment(1.0, span, vmax)
        total += hd * m0 + (slope * (m1 - span * m0) if slope != 0.0 else 0.0)
    return float(total)


def _gl_pieces(a, b, ratio=2.0):
    """Geometric partition of ``[a, b]`` with ``a > 0``."""
    pts = [a]
    while pts[-1] * ratio < b:
        pts.append(pts[-1] * ratio)
    pts.append(b)
    return pts


def _gl(fn, pts):
    s, w = _GL16
    lo = np.asarray(pts[:-1])[:, None]
    hi = np.asarray(pts[1:])[:, None]
    nodes = (lo + (hi - lo) * 0.5 * (s + 1.0)).ravel()
    vals = fn(nodes).reshape(len(pts) - 1, -1)
    return np.sum(vals * (0.5 * (hi - lo) * w))


def integrate_cf_profile(phi: TestMeasure, tau: float, measure: VolumeMeasure, vmax: float = math.inf) -> complex:
    """``int f(v) mu(dv)`` over ``(0, vmax]`` with ``f`` from :func:`cf_profile`."""
    if not phi.atoms or tau == 0.0:
        return 0.0 + 0.0j
    f = lambda t: cf_profile(phi, tau, t)
    if isinstance(measure, AtomMeasure):
        return complex(measure.mass * f(np.array([measure.at]))[0]) if measure.at <= vmax else 0j
    k = kinks(phi)
    span = float(k[-1])
    total = 0.0 + 0.0j
    for a, b in zip(k[:-1], k[1:]):
        hi = min(b, vmax)
        a = max(a, measure.lo)
        if hi <= a:
            continue
        if a == 0.0 and isinstance(measure, PowerMeasure):
            total += _levy_origin_piece(f, measure, hi)
        elif a == 0.0:
            pts = [0.0] + _gl_pieces(hi * 2.0**-30, hi)
            total += _gl(lambda t: f(t) * measure.density(t), pts)
        else:
            total += _gl(lambda t: f(t) * measure.density(t), _gl_pieces(a, hi))
    if vmax > span:
        fd = complex(f(np.array([span]))[0])
        slope = complex(psi(tau * phi.total_mass))
        m0 = measure.moment(0.0, span, vmax)
        m1 = measure.moment(1.0, span, vmax)
        total += fd * m0 + (slope * (m1 - span * m0) if slope != 0.0 else 0.0)
    return complex(total)


def _levy_origin_piece(f, measure: PowerMeasure, b):
    """``int_0^b f(v) s v**(-g-1) dv`` through ``v = b w**m``, ``m = 1 / (2 - g)``."""
    g = measure.gamma
    m = 1.0 / (2.0 - g)
    pts = [0.0] + [2.0**-j for j in range(40, -1, -1)]
    pref = measure.scale * m * b ** (-g)

    def integrand(w):
        return f(b * w**m) * w ** (-m * g - 1.0)

    return pref * _gl(integrand, pts)


def box_atoms(phi: TestMeasure) -> bool:
    return phi.d == 1 and all(isinstance(r, Box) for _, r in phi.atoms)
