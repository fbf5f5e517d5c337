"""Grain shapes, test measures and intersection volumes.

A test measure is a finite signed sum ``phi = sum_i w_i 1_{R_i}`` of weighted
boxes and balls; the weights are densities, so ``phi(A) = sum_i w_i |R_i & A|``.
Grains are ``x + v**(1/d) theta C`` for a unit-volume shape ``C``.

Intersection volumes are exact for box/box, ball/ball (lens formulas up to
d = 3), disk/rectangle in the plane, and rotated squares against boxes.
Remaining pairs (box/ball in d = 3, rotated squares against disks) use a fixed
unscrambled Sobol point set, so they are deterministic.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
from scipy.stats import qmc

from .errors import DimensionError, ParameterError

QMC_LOG2 = 14


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def unit_volume_radius(d: int) -> float:
    """Radius of the ball of volume one in ``R^d``."""
    return unit_ball_volume(d) ** (-1.0 / d)


@lru_cache(maxsize=8)
def _sobol(d: int, log2: int = QMC_LOG2) -> np.ndarray:
    pts = qmc.Sobol(d, scramble=False).random_base2(log2)
    return pts + 0.5 / 2**log2  # centre the points in their elementary cells


# --------------------------------------------------------------------------
# regions


def _vec(x) -> tuple:
    return tuple(float(t) for t in np.atleast_1d(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", _vec(self.lo))
        object.__setattr__(self, "hi", _vec(self.hi))
        if len(self.lo) != len(self.hi):
            raise DimensionError("box corners have different dimensions")
        if any(h < l for l, h in zip(self.lo, self.hi)):
            raise ParameterError(f"box has negative side: {self.lo} .. {self.hi}")

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def bbox(self):
        return np.array(self.lo), np.array(self.hi)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=-1)

    def scaled(self, factor: float) -> "Box":
        return Box(np.multiply(self.lo, factor), np.multiply(self.hi, factor))

    def shifted(self, offset) -> "Box":
        return Box(np.add(self.lo, offset), np.add(self.hi, offset))

    def to_json(self) -> dict:
        return {"type": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius < 0.0:
            raise ParameterError(f"negative radius {self.radius}")

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def volume(self) -> float:
        return unit_ball_volume(self.d) * self.radius**self.d

    def bbox(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.sum((pts - np.array(self.center)) ** 2, axis=-1) <= self.radius**2

    def scaled(self, factor: float) -> "Ball":
        return Ball(np.multiply(self.center, factor), self.radius * factor)

    def shifted(self, offset) -> "Ball":
        return Ball(np.add(self.center, offset), self.radius)

    def as_box(self) -> Box:
        lo, hi = self.bbox()
        return Box(lo, hi)

    def to_json(self) -> dict:
        return {"type": "ball", "center": list(self.center), "radius": self.radius}


Region = Union[Box, Ball]


def region_from_json(data: dict) -> Region:
    if data["type"] == "box":
        return Box(data["lo"], data["hi"])
    if data["type"] == "ball":
        return Ball(data["center"], data["radius"])
    raise ParameterError(f"unknown region type {data['type']!r}")


def interval(a: float, b: float) -> Box:
    return Box((a,), (b,))


# --------------------------------------------------------------------------
# grain shapes


@dataclass(frozen=True)
class GrainShape:
    """Unit-volume grain shape ``C``: ``interval`` (d = 1), ``cube`` or ``ball``."""

    kind: str
    d: int = 1

    def __post_init__(self):
        if self.kind == "interval" and self.d != 1:
            raise DimensionError("the interval shape lives in d = 1")
        if self.kind not in ("interval", "cube", "ball"):
            raise ParameterError(f"unknown grain shape {self.kind!r}")
        if self.kind == "ball" and self.d not in (1, 2, 3):
            raise DimensionError("ball grains are supported for d <= 3")
        if self.d < 1:
            raise DimensionError(f"dimension must be positive, got {self.d}")

    @property
    def is_box(self) -> bool:
        return self.kind in ("interval", "cube") or self.d == 1

    @property
    def radius(self) -> float:
        return unit_volume_radius(self.d) if not self.is_box else 0.5

    def half_extent(self, rotated: bool = False) -> float:
        """Half side of the smallest centred cube containing every ``theta C``."""
        if not self.is_box:
            return self.radius
        return 0.5 * math.sqrt(self.d) if (rotated and self.d >= 2) else 0.5

    @property
    def symmetric(self) -> bool:
        return self.kind == "ball" or self.d == 1

    def region(self, center, volume: float) -> Region:
        s = volume ** (1.0 / self.d)
        c = np.asarray(center, dtype=float)
        if self.is_box:
            return Box(c - 0.5 * s, c + 0.5 * s)
        return Ball(c, self.radius * s)

    def covariogram(self, w):
        """``|C & (C + w)|`` for points ``w`` of shape (..., d); unrotated."""
        w = np.asarray(w, dtype=float)
        if self.is_box:
            return np.prod(np.clip(1.0 - np.abs(w), 0.0, None), axis=-1)
        r = np.linalg.norm(w, axis=-1)
        return _lens(np.full_like(r, self.radius), np.full_like(r, self.radius), r, self.d)

    def radial_covariogram(self, r, rotated: bool = False):
        """Rotation-averaged covariogram ``mean_theta |C & (C + r theta e_1)|`` (d = 2).

        Equals the plain covariogram for balls; for the rotated square it is
        the closed form of the angular average of ``(1 - r|cos|)(1 - r|sin|)``.
        """
        r = np.asarray(r, dtype=float)
        if self.d != 2:
            raise DimensionError("radial covariograms are implemented for d = 2")
        if not self.is_box:
            return _lens(self.radius, self.radius, r, 2)
        if not rotated:
            raise ParameterError("the unrotated square has no radial covariogram")
        inner = 1.0 - 4.0 * r / math.pi + r * r / math.pi
        rr = np.clip(r, 1.0, math.sqrt(2.0))
        theta0 = np.arccos(1.0 / rr)
        outer = (math.pi / 2.0 - 2.0 * theta0 - 1.0 + 2.0 * np.sqrt(rr * rr - 1.0) - 0.5 * rr * rr) * 2.0 / math.pi
        return np.where(r <= 1.0, inner, np.where(r < math.sqrt(2.0), np.clip(outer, 0.0, None), 0.0))

    def covariogram_reach(self, rotated: bool = False) -> float:
        """Largest ``|w|`` with ``|C & (C + w)| > 0``."""
        if not self.is_box:
            return 2.0 * self.radius
        return math.sqrt(self.d) if (rotated or self.d > 1) else 1.0

    def to_json(self) -> dict:
        return {"kind": self.kind, "d": self.d}


INTERVAL = GrainShape("interval", 1)


@dataclass(frozen=True)
class Grain:
    center: tuple
    volume: float
    angle: float = 0.0
    shape: GrainShape = INTERVAL

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if len(self.center) != self.shape.d:
            raise DimensionError("grain centre and shape dimensions differ")
        if not self.volume > 0.0:
            raise ParameterError(f"grain volume must be positive, got {self.volume}")

    @property
    def region(self) -> Region:
        return self.shape.region(self.center, self.volume)


def random_rotation(d: int, rng: np.random.Generator) -> float:
    """Haar-distributed rotation, encoded by its angle (0 in d = 1)."""
    if d == 1:
        return 0.0
    if d == 2:
        return float(rng.uniform(0.0, 2.0 * math.pi))
    raise DimensionError(f"random rotations are supported for d <= 2, got d = {d}")


def unit_volume_estimate(shape: GrainShape) -> float:
    """Volume of ``C`` from the fixed point set (exact for box shapes)."""
    if shape.is_box:
        return 1.0
    r = shape.radius
    pts = (2.0 * _sobol(shape.d) - 1.0) * r
    inside = np.sum(pts**2, axis=1) <= r * r
    return float(inside.mean() * (2.0 * r) ** shape.d)


# --------------------------------------------------------------------------
# vectorized intersection kernels


def _interval_overlap(a0, a1, b0, b1):
    return np.clip(np.minimum(a1, b1) - np.maximum(a0, b0), 0.0, None)


def _box_box(lo1, hi1, lo2, hi2):
    return np.prod(_interval_overlap(lo1, hi1, lo2, hi2), axis=-1)


def _lens(r1, r2, dist, d):
    """Volume of the intersection of two balls in dimension ``d <= 3``."""
    r1, r2, dist = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (r1, r2, dist)))
    if d == 1:
        return _interval_overlap(-r1, r1, dist - r2, dist + r2)
    rmin = np.minimum(r1, r2)
    inside = dist <= np.abs(r1 - r2)
    apart = dist >= r1 + r2
    safe = np.where(inside | apart, 1.0, dist)
    if d == 2:
        c1 = np.clip((safe**2 + r1**2 - r2**2) / (2.0 * safe * np.maximum(r1, 1e-300)), -1.0, 1.0)
        c2 = np.clip((safe**2 + r2**2 - r1**2) / (2.0 * safe * np.maximum(r2, 1e-300)), -1.0, 1.0)
        k = (-safe + r1 + r2) * (safe + r1 - r2) * (safe - r1 + r2) * (safe + r1 + r2)
        part = r1**2 * np.arccos(c1) + r2**2 * np.arccos(c2) - 0.5 * np.sqrt(np.clip(k, 0.0, None))
        full = math.pi * rmin**2
    elif d == 3:
        part = math.pi * (r1 + r2 - safe) ** 2 * (safe**2 + 2.0 * safe * (r1 + r2) - 3.0 * (r1 - r2) ** 2) / (12.0 * safe)
        full = 4.0 / 3.0 * math.pi * rmin**3
    else:
        raise DimensionError(f"lens volumes are implemented for d <= 3, got {d}")
    return np.where(apart, 0.0, np.where(inside, full, part))


def _corner(a, b, radius):
    """Area of ``{x >= a, y >= b}`` inside the disk of the given radius at the origin."""
    R = radius
    a = np.clip(a, -R, R)
    xb = np.sqrt(np.clip(R * R - b * b, 0.0, None))

    def prim(x):
        x = np.clip(x, -R, R)
        return 0.5 * (x * np.sqrt(np.clip(R * R - x * x, 0.0, None)) + R * R * np.arcsin(np.clip(x / np.maximum(R, 1e-300), -1.0, 1.0)))

    lo = np.maximum(a, -xb)
    inner = np.where(lo < xb, prim(xb) - prim(lo) - b * (xb - lo), 0.0)
    neg = b < 0.0
    left = np.where(neg & (a < -xb), 2.0 * (prim(-xb) - prim(a)), 0.0)
    right_lo = np.maximum(a, xb)
    right = np.where(neg, 2.0 * (prim(R) - prim(right_lo)), 0.0)
    return np.where(b >= R, 0.0, inner + left + right)


def _disk_rect(cx, cy, radius, x0, x1, y0, y1):
    """Exact area of a disk intersected with an axis-aligned rectangle."""
    X0, X1, Y0, Y1 = x0 - cx, x1 - cx, y0 - cy, y1 - cy

    def below(X, Y):  # area of {x <= X, y <= Y} in the disk
        return _corner(-X, -Y, radius)

    out = below(X1, Y1) - below(X0, Y1) - below(X1, Y0) + below(X0, Y0)
    return np.clip(out, 0.0, None)


def _qmc_overlap(small: Region, others_contain, n_regions: int, chunk: int = 64):
    """Fraction of the point set over ``small`` falling in each other region."""
    lo, hi = small.bbox()
    pts = lo + _sobol(small.d) * (hi - lo)
    pts = pts[small.contains(pts)] if isinstance(small, Ball) else pts
    cell = np.prod(hi - lo) / _sobol(small.d).shape[0]
    out = np.empty(n_regions)
    for s in range(0, n_regions, chunk):
        idx = np.arange(s, min(s + chunk, n_regions))
        out[idx] = others_contain(pts, idx).sum(axis=1) * cell
    return out


def _rotated_square_box(box: Box, centers, sides, angles):
    import shapely

    c, s = np.cos(angles), np.sin(angles)
    corners = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
    x = centers[:, None, 0] + sides[:, None] * (c[:, None] * corners[:, 0] - s[:, None] * corners[:, 1])
    y = centers[:, None, 1] + sides[:, None] * (s[:, None] * corners[:, 0] + c[:, None] * corners[:, 1])
    polys = shapely.polygons(np.stack([x, y], axis=-1))
    target = shapely.box(box.lo[0], box.lo[1], box.hi[0], box.hi[1])
    return shapely.area(shapely.intersection(polys, target))


def _rotated_square_ball(ball: Ball, centers, sides, angles):
    base = _sobol(2) - 0.5
    out = np.empty(len(sides))
    c0 = np.array(ball.center)
    for k in range(len(sides)):
        c, s = math.cos(angles[k]), math.sin(angles[k])
        pts = centers[k] + sides[k] * (base @ np.array([[c, s], [-s, c]]))
        out[k] = np.mean(np.sum((pts - c0) ** 2, axis=1) <= ball.radius**2) * sides[k] ** 2
    return out


def grain_overlaps(region: Region, shape: GrainShape, centers, volumes, angles=None) -> np.ndarray:
    """``|region & (x_j + v_j**(1/d) theta_j C)|`` for arrays of grains."""
    d = shape.d
    if region.d != d:
        raise DimensionError(f"region has dimension {region.d}, grains have {d}")
    centers = np.asarray(centers, dtype=float).reshape(-1, d)
    volumes = np.asarray(volumes, dtype=float).reshape(-1)
    sides = volumes ** (1.0 / d)
    if d == 1:
        box = region.as_box() if isinstance(region, Ball) else region
        half = 0.5 * sides
        return _interval_overlap(box.lo[0], box.hi[0], centers[:, 0] - half, centers[:, 0] + half)
    rotated = angles is not None and shape.is_box and np.any(np.asarray(angles) != 0.0)
    if rotated:
        if d != 2:
            raise DimensionError("rotated grains are supported in d = 2 only")
        angles = np.broadcast_to(np.asarray(angles, dtype=float), sides.shape)
        if isinstance(region, Box):
            return _rotated_square_box(region, centers, sides, angles)
        return _rotated_square_ball(region, centers, sides, angles)
    if shape.is_box:
        lo, hi = centers - 0.5 * sides[:, None], centers + 0.5 * sides[:, None]
        if isinstance(region, Box):
            return _box_box(np.array(region.lo), np.array(region.hi), lo, hi)
        if d == 2:
            return _disk_rect(region.center[0], region.center[1], region.radius, lo[:, 0], hi[:, 0], lo[:, 1], hi[:, 1])
        return _qmc_overlap(region, lambda p, idx: np.all((p[None] >= lo[idx, None]) & (p[None] <= hi[idx, None]), axis=-1), len(sides))
    radii = shape.radius * sides
    if isinstance(region, Ball):
        dist = np.linalg.norm(centers - np.array(region.center), axis=1)
        return _lens(region.radius, radii, dist, d)
    if d == 2:
        return _disk_rect(centers[:, 0], centers[:, 1], radii, region.lo[0], region.hi[0], region.lo[1], region.hi[1])
    return _qmc_overlap(region, lambda p, idx: np.sum((p[None] - centers[idx, None]) ** 2, axis=-1) <= radii[idx, None] ** 2, len(sides))


def overlap_volume(region: Region, grain: Grain) -> float:
    """``|region & grain|`` for a single grain."""
    angles = None if grain.angle == 0.0 else np.array([grain.angle])
    return float(grain_overlaps(region, grain.shape, np.array([grain.center]), np.array([grain.volume]), angles)[0])


def region_overlap(a: Region, b: Region) -> float:
    """``|a & b|`` for two unrotated regions."""
    if a.d != b.d:
        raise DimensionError("regions of different dimension")
    d = a.d
    if d == 1:
        a = a.as_box() if isinstance(a, Ball) else a
        b = b.as_box() if isinstance(b, Ball) else b
    if isinstance(a, Box) and isinstance(b, Box):
        return float(_box_box(np.array(a.lo), np.array(a.hi), np.array(b.lo), np.array(b.hi)))
    if isinstance(a, Ball) and isinstance(b, Ball):
        return float(_lens(a.radius, b.radius, np.linalg.norm(np.subtract(a.center, b.center)), d))
    box, ball = (a, b) if isinstance(a, Box) else (b, a)
    if d == 2:
        return float(_disk_rect(ball.center[0], ball.center[1], ball.radius, box.lo[0], box.hi[0], box.lo[1], box.hi[1]))
    small = box if box.volume <= ball.volume else ball
    other = ball if small is box else box
    return float(_qmc_overlap(small, lambda p, idx: other.contains(p)[None, :], 1)[0])


# --------------------------------------------------------------------------
# test measures


@dataclass(frozen=True)
class TestMeasure:
    """Signed sum of weighted boxes and balls, ``phi(x) = sum_i w_i 1_{R_i}(x)``."""

    __test__ = False  # keep pytest from collecting this class

    atoms: tuple
    d: int = 1
    name: str = ""

    def __post_init__(self):
        atoms = []
        for w, region in self.atoms:
            if region.d != self.d:
                raise DimensionError(f"atom of dimension {region.d} in a measure on R^{self.d}")
            if self.d == 1 and isinstance(region, Ball):
                region = region.as_box()
            atoms.append((float(w), region))
        object.__setattr__(self, "atoms", tuple(atoms))

    @classmethod
    def indicator(cls, region: Region, weight: float = 1.0, name: str = "") -> "TestMeasure":
        return cls(((weight, region),), region.d, name)

    @classmethod
    def zero(cls, d: int = 1) -> "TestMeasure":
        return cls((), d)

    def __add__(self, other: "TestMeasure") -> "TestMeasure":
        if other.d != self.d:
            raise DimensionError("cannot add measures of different dimension")
        return TestMeasure(self.atoms + other.atoms, self.d)

    def __mul__(self, c: float) -> "TestMeasure":
        return TestMeasure(tuple((c * w, r) for w, r in self.atoms), self.d)

    __rmul__ = __mul__

    def __neg__(self) -> "TestMeasure":
        return self * -1.0

    def __sub__(self, other: "TestMeasure") -> "TestMeasure":
        return self + (-other)

    def named(self, name: str) -> "TestMeasure":
        return TestMeasure(self.atoms, self.d, name)

    @property
    def total_mass(self) -> float:
        """``phi(R^d)``."""
        return float(sum(w * r.volume for w, r in self.atoms))

    def support_bbox(self):
        if not self.atoms:
            z = np.zeros(self.d)
            return z, z.copy()
        boxes = [r.bbox() for _, r in self.atoms]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def value(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float).reshape(-1, self.d))
        out = np.zeros(len(pts))
        for w, r in self.atoms:
            out += w * r.contains(pts)
        return out

    @property
    def min_atom_diameter(self) -> float:
        return min(r.diameter / math.sqrt(self.d) if isinstance(r, Box) else r.diameter for _, r in self.atoms)

    def dilate(self, s: float) -> "TestMeasure":
        return dilate(self, s)

    def cells(self):
        """Piecewise-constant decomposition ``[(value, volume), ...]`` of ``phi``.

        Exact when all atoms are boxes, all balls are concentric, or the atoms
        are pairwise disjoint; otherwise a point-set estimate.
        """
        if not self.atoms:
            return []
        regions = [r for _, r in self.atoms]
        if all(isinstance(r, Box) for r in regions):
            edges = [np.unique(np.concatenate([[r.lo[k], r.hi[k]] for r in regions])) for k in range(self.d)]
            mids = np.meshgrid(*[0.5 * (e[1:] + e[:-1]) for e in edges], indexing="ij")
            sizes = np.meshgrid(*[np.diff(e) for e in edges], indexing="ij")
            vol = np.prod(sizes, axis=0).ravel()
            vals = self.value(np.stack([m.ravel() for m in mids], axis=1))
            return list(zip(vals, vol))
        if all(isinstance(r, Ball) for r in regions) and len({r.center for r in regions}) == 1:
            radii = np.unique([0.0] + [r.radius for r in regions])
            c = np.array(regions[0].center)
            out = []
            for r0, r1 in zip(radii[:-1], radii[1:]):
                probe = c.copy()
                probe[0] += 0.5 * (r0 + r1)
                out.append((float(self.value(probe)[0]), unit_ball_volume(self.d) * (r1**self.d - r0**self.d)))
            return out
        disjoint = all(
            region_overlap(regions[i], regions[j]) == 0.0 for i in range(len(regions)) for j in range(i)
        )
        if disjoint:
            return [(w, r.volume) for w, r in self.atoms]
        lo, hi = self.support_bbox()
        pts = lo + _sobol(self.d, 16) * (hi - lo)
        cell = float(np.prod(hi - lo)) / len(pts)
        return [(v, cell) for v in self.value(pts)]

    def lp_power(self, p: float) -> float:
        """``int |phi|**p dx``."""
        return float(sum(abs(v) ** p * vol for v, vol in self.cells()))

    def signed_lp_powers(self, p: float):
        """``(int phi_+**p, int phi_-**p)``."""
        pos = sum(v**p * vol for v, vol in self.cells() if v > 0.0)
        neg = sum((-v) ** p * vol for v, vol in self.cells() if v < 0.0)
        return float(pos), float(neg)

    @property
    def l1_norm(self) -> float:
        return self.lp_power(1.0)

    def inner_l2(self, other: "TestMeasure") -> float:
        """``int phi psi dx``."""
        return float(sum(w * u * region_overlap(r, q) for w, r in self.atoms for u, q in other.atoms))

    def to_json(self) -> dict:
        out = {"d": self.d, "atoms": [{"w": w, "region": r.to_json()} for w, r in self.atoms]}
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_json(cls, data) -> "TestMeasure":
        if isinstance(data, str):
            data = json.loads(data)
        atoms = tuple((a["w"], region_from_json(a["region"])) for a in data["atoms"])
        return cls(atoms, int(data["d"]), data.get("name", ""))


def indicator_interval(a: float, b: float, weight: float = 1.0) -> TestMeasure:
    return TestMeasure.indicator(interval(a, b), weight)


def centred_ball(d: int, radius: float) -> Region:
    return Ball(np.zeros(d), radius)


def dilate(phi: TestMeasure, s: float) -> TestMeasure:
    """The dilatation ``phi_s(A) = phi(sA)``; as a density ``s**d phi(s x)``."""
    if not s > 0.0:
        raise ParameterError(f"dilatation scale must be positive, got {s}")
    return TestMeasure(tuple((w * s**phi.d, r.scaled(1.0 / s)) for w, r in phi.atoms), phi.d, phi.name)


def measure_of_grains(phi: TestMeasure, shape: GrainShape, centers, volumes, angles=None) -> np.ndarray:
    """``phi(x_j + v_j**(1/d) theta_j C)`` for arrays of grains."""
    volumes = np.asarray(volumes, dtype=float).reshape(-1)
    out = np.zeros(volumes.shape)
    for w, r in phi.atoms:
        out += w * grain_overlaps(r, shape, centers, volumes, angles)
    return out


def measure_of_grain(phi: TestMeasure, grain: Grain) -> float:
    if grain.shape.d != phi.d:
        raise DimensionError("grain and measure dimensions differ")
    angles = None if grain.angle == 0.0 else np.array([grain.angle])
    return float(measure_of_grains(phi, grain.shape, np.array([grain.center]), np.array([grain.volume]), angles)[0])


def gram(measures: Sequence[TestMeasure], form) -> np.ndarray:
    """Symmetric matrix ``form(m_i, m_j)``."""
    n = len(measures)
    g = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            g[i, j] = g[j, i] = form(measures[i], measures[j])
    return g


def cross_covariogram(phi: TestMeasure, psi: TestMeasure, w) -> np.ndarray:
    """``int phi(y + w) psi(y) dy`` at points ``w`` of shape (n, d)."""
    d = phi.d
    w = np.asarray(w, dtype=float).reshape(-1, d)
    out = np.zeros(len(w))
    for a, ra in phi.atoms:
        for b, rb in psi.atoms:
            if d == 1:
                ra = ra.as_box() if isinstance(ra, Ball) else ra
                rb = rb.as_box() if isinstance(rb, Ball) else rb
            if isinstance(ra, Box) and isinstance(rb, Box):
                val = _box_box(np.array(ra.lo) - w, np.array(ra.hi) - w, np.array(rb.lo), np.array(rb.hi))
            elif isinstance(ra, Ball) and isinstance(rb, Ball):
                dist = np.linalg.norm(np.array(ra.center) - w - np.array(rb.center), axis=1)
                val = _lens(ra.radius, rb.radius, dist, d)
            elif d == 2:
                box, ball, sign = (ra, rb, 1.0) if isinstance(ra, Box) else (rb, ra, -1.0)
                # the box moves by -w when it comes from phi, the ball by -w otherwise
                shift = w if sign > 0 else -w
                c = np.array(ball.center) + shift
                val = _disk_rect(c[:, 0], c[:, 1], ball.radius, box.lo[0], box.hi[0], box.lo[1], box.hi[1])
            else:
                raise DimensionError("box/ball covariograms are exact only for d <= 2")
            out += a * b * val
    return out
