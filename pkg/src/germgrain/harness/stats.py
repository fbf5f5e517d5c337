from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import InfiniteVarianceError, ParameterError

MIN_SAMPLES = 1000


def empirical_cf(samples, t_grid):
    """Empirical characteristic function and componentwise standard errors.

    Returns ``(cf, se)``: ``cf[k]`` is the mean of ``exp(i t_k X)`` and
    ``se[k]`` is the complex number ``se_re + i se_im``.
    """
    x = np.asarray(samples, dtype=float).reshape(-1)
    if len(x) < MIN_SAMPLES:
        raise ParameterError(f"need at least {MIN_SAMPLES} samples, got {len(x)}")
    t = np.asarray(t_grid, dtype=float).reshape(-1)
    phase = np.outer(t, x)
    c, s = np.cos(phase), np.sin(phase)
    n = len(x)
    cf = c.mean(axis=1) + 1j * s.mean(axis=1)
    se = c.std(axis=1, ddof=1) / math.sqrt(n) + 1j * s.std(axis=1, ddof=1) / math.sqrt(n)
    return cf, se


@dataclass
class CovarianceEstimate:
    cov: np.ndarray
    se: np.ndarray
    n: int

    @property
    def corr(self) -> np.ndarray:
        sd = np.sqrt(np.diag(self.cov))
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.cov / np.outer(sd, sd)

    def z_scores(self, target) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            z = (self.cov - np.asarray(target)) / self.se
        return np.where(self.se > 0.0, z, np.where(np.isclose(self.cov, target), 0.0, np.inf))

    def to_json(self) -> dict:
        return {"cov": self.cov.tolist(), "se": self.se.tolist(), "n": self.n}


def estimate_covariance(samples, groups: int = 200, regime: str | None = None) -> CovarianceEstimate:
    """Unbiased sample covariance with delete-a-group jackknife standard errors."""
    if regime == "small_grain":
        warnings.warn("covariances do not exist in the stable regime", RuntimeWarning)
        raise InfiniteVarianceError("refusing to estimate covariances of stable-regime samples")
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < MIN_SAMPLES:
        raise ParameterError(f"need at least {MIN_SAMPLES} samples, got {n}")
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    g = min(groups, n)
    labels = np.arange(n) * g // n
    sums = np.zeros((g, x.shape[1]))
    cross = np.zeros((g, x.shape[1], x.shape[1]))
    counts = np.bincount(labels, minlength=g)
    np.add.at(sums, labels, x)
    for k in range(g):
        blk = x[labels == k]
        cross[k] = blk.T @ blk
    tot_s, tot_c = sums.sum(axis=0), cross.sum(axis=0)
    reps = np.empty((g, x.shape[1], x.shape[1]))
    for k in range(g):
        m = n - counts[k]
        s = tot_s - sums[k]
        reps[k] = (tot_c - cross[k] - np.outer(s, s) / m) / (m - 1)
    se = np.sqrt((g - 1) / g * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))
    return CovarianceEstimate(cov, se, n)
