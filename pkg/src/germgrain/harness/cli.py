"""Command line entry point: ``germgrain {kernel,simulate,limit,converge,lrd}``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from ..geometry import GrainShape, TestMeasure
from ..grain_model import ModelParams, lrd_covariance_curve, simulate_replicates
from ..heavytail import VolumeLaw, pareto_unit_mean
from ..kernels import KernelSpec, kernel_K, limit_gram, riesz_inner, write_gram_table, write_kernel_table
from ..limit_fields import (
    GaussianFieldSpec,
    IntermediateFieldSpec,
    sample_gaussian_field,
    sample_intermediate,
    sample_stable_field,
)
from .experiment import ExperimentConfig, run_convergence_experiment
from .schedule import ScalingSchedule

log = logging.getLogger("germgrain")


def _shape(cfg: dict) -> GrainShape:
    shape = cfg.get("shape", "interval")
    if isinstance(shape, dict):
        return GrainShape(shape["kind"], int(shape["d"]))
    return GrainShape(shape, 1 if shape == "interval" else int(cfg.get("d", 1)))


def _measures(cfg: dict) -> list:
    return [TestMeasure.from_json(m) for m in cfg.get("measures", [])]


def _law(cfg: dict) -> VolumeLaw:
    if "law" in cfg:
        return VolumeLaw.from_json(cfg["law"])
    return pareto_unit_mean(float(cfg["gamma"]))


def _write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True))


def cmd_kernel(cfg: dict, args) -> bool:
    spec = KernelSpec(float(cfg["gamma"]), _shape(cfg), bool(cfg.get("rotated", False)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    points = cfg.get("points") or [[float(r)] + [0.0] * (spec.d - 1) for r in np.geomspace(0.1, 10.0, 21)]
    write_kernel_table(spec, points, out / "kernel.csv")
    report = {"spec": spec.to_json(), "seed": args.seed}
    measures = _measures(cfg)
    if measures:
        write_gram_table(limit_gram(spec, measures), out / "gram.csv")
        alphas = cfg.get("alphas", [spec.alpha])
        report["riesz_energies"] = {str(a): [riesz_inner(m, m, float(a)) for m in measures] for a in alphas}
    ok = bool(np.all(np.isfinite(np.atleast_1d(kernel_K(spec, np.asarray(points, dtype=float))))))
    report["pass"] = ok
    _write_json(out / "report.json", report)
    return ok


def cmd_simulate(cfg: dict, args) -> bool:
    law = _law(cfg.get("schedule", cfg))
    if "schedule" in cfg:
        sched = ScalingSchedule.from_json(cfg["schedule"])
        rho = sched.rho_grid[0]
        lam = sched.lam(rho)
    else:
        rho, lam = float(cfg["rho"]), float(cfg["lam"])
    params = ModelParams(lam, rho, law, _shape(cfg), bool(cfg.get("rotated", False)))
    n = int(cfg.get("replicates", 1000))
    v_cut = float(cfg.get("v_cut", math.inf))
    batch = simulate_replicates(params, _measures(cfg), n, args.seed, threads=args.threads, v_cut=v_cut, center=bool(cfg.get("center", False)))
    batch.save(Path(args.out) / "replicates.csv")
    _write_json(Path(args.out) / "report.json", {"seed": args.seed, "n": n, "bias_bound": batch.meta["bias_bound"], "pass": True})
    return True


def cmd_limit(cfg: dict, args) -> bool:
    kind = cfg.get("kind", "gaussian")
    measures = _measures(cfg)
    n = int(cfg.get("replicates", 1000))
    shape = _shape(cfg)
    if kind == "gaussian":
        spec = GaussianFieldSpec.from_kernel(KernelSpec(float(cfg["gamma"]), shape, bool(cfg.get("rotated", False))), measures)
        batch = sample_gaussian_field(spec, n, args.seed, args.threads)
    elif kind == "hurst":
        spec = GaussianFieldSpec.from_hurst(float(cfg["H"]), measures, float(cfg.get("scale", 1.0)))
        batch = sample_gaussian_field(spec, n, args.seed, args.threads)
    elif kind == "white":
        batch = sample_gaussian_field(GaussianFieldSpec.white_noise(measures), n, args.seed, args.threads)
    elif kind == "stable":
        batch = sample_stable_field(measures, float(cfg["gamma"]), float(cfg["grid_resolution"]), args.seed, n, args.threads)
    elif kind == "intermediate":
        spec = IntermediateFieldSpec(
            float(cfg["gamma"]),
            shape,
            float(cfg.get("sigma0", 1.0 / float(cfg["gamma"]))),
            cfg.get("delta"),
            cfg.get("small_jump_mode", "gaussian"),
            bool(cfg.get("rotated", False)),
        )
        batch = sample_intermediate(spec, measures, n, args.seed, args.threads)
    else:
        raise ConfigurationError(f"unknown limit kind {kind!r}")
    batch.save(Path(args.out) / "replicates.csv")
    _write_json(Path(args.out) / "report.json", {"seed": args.seed, "kind": kind, "n": n, "pass": True})
    return True


def cmd_converge(cfg: dict, args) -> bool:
    config = ExperimentConfig.from_json(cfg, seed=args.seed, out_dir=args.out, tolerance=args.tolerance)
    config.threads = args.threads
    report = run_convergence_experiment(config)
    for row in report.rows:
        log.info("rho=%g b=%.6g sup-distance=%.4g tolerance=%.4g", row["rho"], row["b"], row["sup_distance"], row["tolerance"])
    if report.error:
        log.error("experiment aborted: %s", report.error)
    return report.passed


def cmd_lrd(cfg: dict, args) -> bool:
    law = _law(cfg)
    params = ModelParams(float(cfg.get("lam", 1.0)), float(cfg.get("rho", 1.0)), law, _shape(cfg))
    r_grid = np.asarray(cfg.get("r_grid", np.geomspace(2.0, 64.0, 11)), dtype=float)
    curve = lrd_covariance_curve(params, r_grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "lrd_curve.csv").open("w") as fh:
        fh.write("r,cov\n")
        for r, c in zip(r_grid, curve):
            fh.write(f"{r!r},{float(c)!r}\n")
    rel = abs(curve[-1] - curve[-2]) / abs(curve[-1]) if len(curve) > 1 and curve[-1] != 0 else None
    slope = None
    if len(curve) > 1 and np.all(curve > 0):
        slope = float(np.polyfit(np.log(r_grid), np.log(curve), 1)[0])
    _write_json(out / "report.json", {"seed": args.seed, "law": law.to_json(), "relative_increment": rel, "loglog_slope": slope, "pass": True})
    return True


HELP = {
    "kernel": "tabulate the limit kernel and Riesz energies",
    "simulate": "raw grain-field replicates",
    "limit": "sample a limit field",
    "converge": "run a convergence experiment",
    "lrd": "covariance curves for ball and annulus",
}
COMMANDS = {"kernel": cmd_kernel, "simulate": cmd_simulate, "limit": cmd_limit, "converge": cmd_converge, "lrd": cmd_lrd}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="germgrain", description="Germ-grain random fields and their scaling limits")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None, help="64-bit experiment seed (overrides the config)")
        p.add_argument("--out", default="out")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--tolerance", type=float, default=None, help="quadrature part of the CF tolerance")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    cfg = json.loads(Path(args.config).read_text())
    if args.seed is None:
        args.seed = int(cfg.get("seed", 0))
    try:
        ok = COMMANDS[args.command](cfg, args)
    except ConfigurationError as exc:
        log.error("%s", exc)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
