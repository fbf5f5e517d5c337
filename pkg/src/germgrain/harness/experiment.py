"""Convergence experiments: pre-limit replicates against the matching limit law."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ConfigurationError
from ..geometry import INTERVAL, GrainShape, TestMeasure, gram
from ..grain_model import ReplicateBatch, char_functional_J, simulate_replicates
from ..heavytail import stable_cf
from ..kernels import KernelSpec, cov_limit
from ..limit_fields import IntermediateFieldSpec, intermediate_cf, stable_marginal_params
from .schedule import FINITE_VARIANCE, INTERMEDIATE, LARGE_GRAIN, SMALL_GRAIN, ScalingSchedule, classify_regime, normalizer
from .stats import MIN_SAMPLES, estimate_covariance, empirical_cf

DEFAULT_T_GRID = (-2.0, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 2.0)


@dataclass
class ExperimentConfig:
    schedule: ScalingSchedule
    measures: list
    replicates: int = 10_000
    t_grid: tuple = DEFAULT_T_GRID
    seed: int = 0
    out_dir: str | None = None
    tolerance: float = 1e-3  # quadrature part of the CF tolerance
    shape: GrainShape = INTERVAL
    rotated: bool = False
    small_jump_mode: str = "gaussian"
    threads: int = 1
    cov_sigmas: float = 4.0

    def __post_init__(self):
        self.measures = list(self.measures)
        if not self.measures:
            raise ConfigurationError("no test measures")
        if self.replicates < MIN_SAMPLES:
            raise ConfigurationError(f"CF comparisons need at least {MIN_SAMPLES} replicates")
        if any(m.d != self.shape.d for m in self.measures):
            raise ConfigurationError("measure and shape dimensions differ")
        self.t_grid = tuple(float(t) for t in self.t_grid)

    def to_json(self) -> dict:
        return {
            "schedule": self.schedule.to_json(),
            "measures": [m.to_json() for m in self.measures],
            "replicates": self.replicates,
            "t_grid": list(self.t_grid),
            "seed": self.seed,
            "tolerance": self.tolerance,
            "shape": self.shape.to_json(),
            "rotated": self.rotated,
            "small_jump_mode": self.small_jump_mode,
            "cov_sigmas": self.cov_sigmas,
        }

    @property
    def config_hash(self) -> str:
        # thread count and output location do not change any number
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_json(cls, data: dict, **overrides) -> "ExperimentConfig":
        sched = dict(data["schedule"])
        schedule = ScalingSchedule.from_json(sched)
        shape = data.get("shape", {"kind": "interval", "d": 1})
        if isinstance(shape, str):
            shape = {"kind": shape, "d": 1 if shape == "interval" else int(data.get("d", 1))}
        kw = {
            "schedule": schedule,
            "measures": [TestMeasure.from_json(m) for m in data["measures"]],
            "replicates": int(data.get("replicates", 10_000)),
            "t_grid": tuple(data.get("t_grid", DEFAULT_T_GRID)),
            "seed": int(data.get("seed", 0)),
            "out_dir": data.get("out_dir"),
            "tolerance": float(data.get("tolerance", 1e-3)),
            "shape": GrainShape(shape["kind"], int(shape["d"])),
            "rotated": bool(data.get("rotated", False)),
            "small_jump_mode": data.get("small_jump_mode", "gaussian"),
            "cov_sigmas": float(data.get("cov_sigmas", 4.0)),
        }
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)


@dataclass
class ExperimentReport:
    config_hash: str
    seed: int
    regime: dict
    rows: list = field(default_factory=list)
    assertions: dict = field(default_factory=dict)
    covariance: dict | None = None
    error: str | None = None
    batches: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.error is None and bool(self.assertions) and all(self.assertions.values())

    @property
    def distances(self) -> list:
        return [r["sup_distance"] for r in self.rows]

    def to_json(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "regime": self.regime,
            "rows": [{k: v for k, v in r.items() if k != "cf_table"} for r in self.rows],
            "assertions": self.assertions,
            "covariance": self.covariance,
            "passed": self.passed,
            "error": self.error,
        }

    def save(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))
        with (out / "cf_table.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["grid", "rho", "measure", "t", "emp_re", "emp_im", "se_re", "se_im", "target_re", "target_im"])
            for k, row in enumerate(self.rows):
                for rec in row["cf_table"]:
                    w.writerow([k, repr(row["rho"])] + [rec[0]] + [repr(float(x)) for x in rec[1:]])
        return out


def target_cf(regime: str, measure: TestMeasure, t_grid, *, gamma=None, shape=INTERVAL, rotated=False, sigma0=None):
    """Characteristic function of the limit law of one coordinate on ``t_grid``."""
    t = np.asarray(t_grid, dtype=float)
    if regime == FINITE_VARIANCE:
        return np.exp(-0.5 * t**2 * measure.inner_l2(measure)).astype(complex)
    if regime == LARGE_GRAIN:
        var = cov_limit(KernelSpec(gamma, shape, rotated), measure, measure)
        return np.exp(-0.5 * t**2 * var).astype(complex)
    if regime == INTERMEDIATE:
        if shape.d != 1:
            raise ConfigurationError("intermediate-limit CF targets are available in d = 1")
        spec = IntermediateFieldSpec(gamma, shape, sigma0, rotated=rotated)
        return np.array([intermediate_cf(spec, measure, x) for x in t])
    if regime == SMALL_GRAIN:
        return np.asarray(stable_cf(stable_marginal_params(measure, gamma), t), dtype=complex)
    raise ConfigurationError(f"unknown regime {regime!r}")


def target_gram(regime: str, measures: Sequence[TestMeasure], *, gamma=None, shape=INTERVAL, rotated=False, sigma0=None):
    if regime == FINITE_VARIANCE:
        return gram(list(measures), lambda a, b: a.inner_l2(b))
    if regime == LARGE_GRAIN:
        spec = KernelSpec(gamma, shape, rotated)
        return gram(list(measures), lambda a, b: cov_limit(spec, a, b))
    if regime == INTERMEDIATE:
        ispec = IntermediateFieldSpec(gamma, shape, sigma0, rotated=rotated)
        kspec = KernelSpec(gamma, shape, rotated)
        return gram(ispec.dilated(measures), lambda a, b: cov_limit(kspec, a, b))
    raise ConfigurationError(f"no covariance target in regime {regime!r}")


def trend_ok(distances: Sequence[float], tol: float, allowed: int = 1) -> bool:
    """Non-increasing distances, except for at most ``allowed`` increases each no larger than ``tol``."""
    ups = [b - a for a, b in zip(distances, distances[1:]) if b > a]
    return all(u <= tol for u in ups) and len(ups) <= allowed


def run_convergence_experiment(config: ExperimentConfig) -> ExperimentReport:
    sched = config.schedule
    regime = classify_regime(sched)
    report = ExperimentReport(config.config_hash, config.seed, regime.to_json())
    kw = {"gamma": sched.gamma, "shape": config.shape, "rotated": config.rotated, "sigma0": regime.sigma0}
    n = config.replicates
    mc_tol = 4.0 / math.sqrt(n)
    tol = mc_tol + config.tolerance
    try:
        targets = [target_cf(regime.regime, m, config.t_grid, **kw) for m in config.measures]
        for k, rho in enumerate(sched.rho_grid):
            params = sched.params(rho, config.shape, config.rotated)
            b = normalizer(regime.regime, params)
            batch = simulate_replicates(params, config.measures, n, config.seed, grid=k, threads=config.threads, b=b)
            batch.meta.update({"config_hash": config.config_hash, "regime": regime.regime})
            report.batches.append(batch)
            if config.out_dir is not None:
                batch.save(Path(config.out_dir) / f"replicates_grid{k}.csv")
            dist, table, bias = 0.0, [], None
            for j, (m, target) in enumerate(zip(config.measures, targets)):
                cf, se = empirical_cf(batch.values[:, j], config.t_grid)
                dist = max(dist, float(np.max(np.abs(cf - target))))
                name = batch.names[j]
                table += [(name, t, c.real, c.imag, s.real, s.imag, g.real, g.imag) for t, c, s, g in zip(config.t_grid, cf, se, target)]
                if config.shape.d == 1:
                    exact = np.array([char_functional_J(params, m, b, t) for t in config.t_grid])
                    bias = max(bias or 0.0, float(np.max(np.abs(exact - target))))
            report.rows.append(
                {
                    "rho": rho,
                    "lam": params.lam,
                    "b": b,
                    "indicator": regime.indicators[k],
                    "label": regime.labels[k],
                    "sup_distance": dist,
                    "tolerance": tol,
                    "mc_tolerance": mc_tol,
                    "quadrature_tolerance": config.tolerance,
                    "margin": tol - dist,
                    "exact_prelimit_distance": bias,
                    "bias_bound": batch.meta["bias_bound"],
                    "seed": config.seed,
                    "config_hash": config.config_hash,
                    "digest": batch.digest(),
                    "cf_table": table,
                }
            )
        report.assertions["final_distance"] = report.rows[-1]["sup_distance"] <= tol
        if len(report.rows) > 1:
            report.assertions["trend"] = trend_ok(report.distances, mc_tol)
        if regime.regime != SMALL_GRAIN:
            est = estimate_covariance(report.batches[-1].values, regime=regime.regime)
            target = target_gram(regime.regime, config.measures, **kw)
            z = est.z_scores(target)
            report.covariance = {**est.to_json(), "target": target.tolist(), "z": z.tolist()}
            report.assertions["covariance"] = bool(np.all(np.abs(z) <= config.cov_sigmas))
    except Exception as exc:  # partial report on any failure
        report.error = f"{type(exc).__name__}: {exc}"
    if config.out_dir is not None:
        report.save(config.out_dir)
        meta = {"config": config.to_json(), "config_hash": config.config_hash, "seed": config.seed}
        (Path(config.out_dir) / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return report
