"""Acceptance suite: one ``criterion N: PASS/FAIL`` line per criterion.

Pipeline parameters (prefactor ``c``, grids) are pinned regression values;
the reasoning behind each choice is kept in the decisions ledger.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest
from scipy import integrate

from conftest import record
from germgrain.geometry import INTERVAL, Box, GrainShape, TestMeasure, indicator_interval
from germgrain.grain_model import ModelParams, cov_J, lrd_covariance_curve, simulate_replicates
from germgrain.harness import ExperimentConfig, ScalingSchedule, estimate_covariance, run_convergence_experiment
from germgrain.heavytail import (
    StableParams,
    c_alpha_d,
    deterministic,
    exponential,
    karamata_truncated_moment,
    pareto,
    pareto_unit_mean,
    psi,
    stable_cf,
    stable_sample,
)
from germgrain.kernels import KernelSpec, cov_limit, kernel_K, kernel_K_direct, riesz_inner, rotated_grain_constant
from germgrain.limit_fields import (
    IntermediateFieldSpec,
    aggregate_similarity_check,
    intermediate_variance,
    sample_intermediate,
    stable_marginal_params,
)

DISK = GrainShape("ball", 2)
SQUARE = GrainShape("cube", 2)
T_GRID = (-2.0, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 2.0)
N = 10_000


def _var_se(x):
    return float(np.std((x - x.mean()) ** 2, ddof=1) / math.sqrt(len(x)))


def _pipeline(law, a, c, grid, measures, tolerance, **kw):
    cfg = ExperimentConfig(
        ScalingSchedule(grid, a, c, law), measures, replicates=N, t_grid=T_GRID, seed=kw.pop("seed", 2024), tolerance=tolerance, **kw
    )
    start = time.perf_counter()
    report = run_convergence_experiment(cfg)
    return cfg, report, time.perf_counter() - start


def _distances(report):
    return ", ".join(f"rho={r['rho']:g}: {r['sup_distance']:.4f}" for r in report.rows)


def test_criterion_01_kernel_closed_form():
    start = time.perf_counter()
    spec = KernelSpec(1.5, INTERVAL)
    closed, direct = kernel_K(spec, 1.0), kernel_K_direct(spec, 1.0)
    elapsed = time.perf_counter() - start
    ok = abs(closed - 4.0 / 3.0) <= 1e-8 and abs(direct - closed) <= 1e-6 and elapsed < 1.0
    record("1", ok, f"K(1)={closed:.12f}, quadrature={direct:.12f}, {elapsed:.3f}s")
    assert ok


def test_criterion_02_kernel_scaling():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for shape in (INTERVAL, SQUARE, DISK):
        spec = KernelSpec(1.5, shape)
        xs = rng.normal(size=(20, shape.d))
        base = np.atleast_1d(kernel_K(spec, xs))
        for a in (0.5, 2.0, 10.0):
            scaled = np.atleast_1d(kernel_K(spec, a * xs))
            target = a ** (-(spec.gamma - 1.0) * shape.d) * base
            worst = max(worst, float(np.max(np.abs(scaled / target - 1.0))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 10.0
    record("2", ok, f"max relative error {worst:.2e} over interval, square, disk; {elapsed:.2f}s")
    assert ok


def test_criterion_03_riesz_energy():
    phi = indicator_interval(0.0, 1.0)
    closed = riesz_inner(phi, phi, 0.5)
    quad = 2.0 * integrate.quad(lambda u: 1.0 - u, 0.0, 1.0, weight="alg", wvar=(-0.5, 0.0), epsabs=1e-14)[0]
    consts = [c_alpha_d(0.5, d) for d in (1, 2, 3)]
    ok = abs(closed - 8.0 / 3.0) <= 1e-6 and abs(quad - 8.0 / 3.0) <= 1e-6 and consts == [1.0, 1.0, 1.0]
    record("3", ok, f"closed form {closed:.10f}, quadrature {quad:.10f}, c_(1/2,d)={consts}")
    assert ok


def test_criterion_04_prelimit_moments():
    start = time.perf_counter()
    params = ModelParams(2.0, 1.0, deterministic(1.0))
    phi = indicator_interval(0.0, 1.0)
    exact = cov_J(params, phi, phi)
    x = simulate_replicates(params, [phi], N, seed=4).values[:, 0]
    var, se = float(x.var(ddof=1)), _var_se(x)
    elapsed = time.perf_counter() - start
    ok = abs(exact - 4.0 / 3.0) <= 1e-8 and abs(var - 4.0 / 3.0) <= 3.0 * se and elapsed < 30.0
    record("4", ok, f"quadrature {exact:.12f}, MC {var:.4f} +- {se:.4f}, {elapsed:.1f}s")
    assert ok


def _psi_violations(u, v):
    d = np.abs(psi(v) - psi(u))
    first = d > np.minimum(2.0 * np.abs(v - u), np.abs(v**2 - u**2) / 2.0) * (1 + 1e-12)
    second = np.abs(psi(v)) > np.minimum(2.0 * np.abs(v), v**2 / 2.0) * (1 + 1e-12)
    third = np.abs(psi(v) + v**2 / 2.0) > np.minimum(v**2, np.abs(v) ** 3 / 6.0) * (1 + 1e-12)
    return int(first.sum()), int(second.sum()), int(third.sum())


@pytest.mark.xfail(strict=True, reason="the |v^2 - u^2| / 2 half of the first bound fails for arguments of opposite sign")
def test_criterion_05_psi_bounds_literal():
    rng = np.random.default_rng(5)
    u, v = rng.uniform(-50.0, 50.0, (2, 10_000))
    counts = _psi_violations(u, v)
    record("5", sum(counts) == 0, f"violations per inequality {counts} on 10^4 points; e.g. u=-1, v=1")
    assert sum(counts) == 0


def test_criterion_05b_psi_bounds_valid_forms():
    rng = np.random.default_rng(5)
    u, v = rng.uniform(-50.0, 50.0, (2, 10_000))
    same = np.sign(u) == np.sign(v)
    d = np.abs(psi(v) - psi(u))
    linear = int(np.sum(d > 2.0 * np.abs(v - u) * (1 + 1e-12)))
    quad_same = int(np.sum(d[same] > np.abs(v[same] ** 2 - u[same] ** 2) / 2.0 * (1 + 1e-12)))
    _, second, third = _psi_violations(u, v)
    ok = linear == quad_same == second == third == 0
    record("5b", ok, f"linear {linear}, quadratic same-sign {quad_same}, second {second}, third {third} violations")
    assert ok


def test_criterion_06_karamata_upper():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(20):
        g = rng.uniform(1.05, 1.95)
        law = pareto(g, rng.uniform(0.1, 1.0))
        a = law.v_min * rng.uniform(1.0, 100.0)
        p = rng.uniform(0.0, g - 0.05)
        m = karamata_truncated_moment(law, p, a, "upper")
        worst = max(worst, abs(m.exact / m.karamata - 1.0))
    ok = worst <= 1e-12
    record("6", ok, f"upper truncated moments, max relative gap {worst:.1e} over 20 pairs")
    assert ok


@pytest.mark.xfail(strict=True, reason="the lower truncated moment differs from its asymptote by gamma v_min^q / (q - gamma)")
def test_criterion_06b_karamata_lower():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(20):
        g = rng.uniform(1.05, 1.95)
        law = pareto(g, rng.uniform(0.1, 1.0))
        a = law.v_min * rng.uniform(1.0, 100.0)
        q = rng.uniform(g + 0.1, 4.0)
        m = karamata_truncated_moment(law, q, a, "lower")
        worst = max(worst, abs(m.exact / m.karamata - 1.0))
    record("6b", worst <= 1e-12, f"lower truncated moments, max relative gap {worst:.3g}")
    assert worst <= 1e-12


def test_criterion_07_finite_variance_pipeline():
    phi, psi_ = indicator_interval(0.0, 1.0), indicator_interval(1.5, 2.5)
    cfg, rep, elapsed = _pipeline(exponential(1.0), 2.5, 0.25, (0.1, 0.03, 0.01), [phi, psi_], 0.0)
    est = estimate_covariance(rep.batches[-1].values) if rep.batches else None
    cross_ok = est is not None and abs(est.cov[0, 1]) <= 3.0 * est.se[0, 1]
    final = rep.rows[-1]["sup_distance"] if rep.rows else math.inf
    ok = rep.error is None and final <= 4.0 / math.sqrt(N) and cross_ok and elapsed < 300.0
    detail = f"{_distances(rep)} vs {4.0 / math.sqrt(N):.3f}; disjoint cov {est.cov[0, 1]:.4f} +- {est.se[0, 1]:.4f}; {elapsed:.0f}s"
    record("7", ok, detail)
    assert ok, rep.error


@pytest.fixture(scope="module")
def criterion8(tmp_path_factory):
    out = tmp_path_factory.mktemp("crit8_threads1")
    result = _pipeline(pareto_unit_mean(1.5), 2.0, 10.0, (0.1, 0.03, 0.01), [indicator_interval(0.0, 1.0)], 1e-3, out_dir=str(out))
    return (*result, out)


def test_criterion_08_large_grain_pipeline(criterion8):
    cfg, rep, elapsed, _ = criterion8
    x = rep.batches[-1].values[:, 0]
    var, se = float(x.var(ddof=1)), _var_se(x)
    target = cov_limit(KernelSpec(1.5, INTERVAL), *[indicator_interval(0.0, 1.0)] * 2)
    tol = 4.0 / math.sqrt(N) + 1e-3
    ok = (
        rep.error is None
        and abs(var - target) <= 4.0 * se
        and rep.rows[-1]["sup_distance"] <= tol
        and rep.assertions.get("trend", False)
        and elapsed < 600.0
    )
    record("8", ok, f"var {var:.4f} +- {se:.4f} vs {target:.4f}; {_distances(rep)} vs {tol:.4f}; {elapsed:.0f}s")
    assert ok, rep.error


def test_criterion_09_intermediate_pipeline():
    cfg, rep, elapsed = _pipeline(pareto_unit_mean(1.5), 1.5, 1.0, (0.1, 0.01, 0.001), [indicator_interval(0.0, 1.0)], 1e-3)
    tol = 4.0 / math.sqrt(N) + 1e-3
    ok = rep.passed and rep.rows[-1]["b"] == 1.0 and rep.rows[-1]["sup_distance"] <= tol and elapsed < 600.0
    record("9", ok, f"sigma0={rep.regime['sigma0']:.5f}; {_distances(rep)} vs {tol:.4f}; {elapsed:.0f}s")
    assert ok, rep.error


def test_criterion_10_small_grain_pipeline():
    cfg, rep, elapsed = _pipeline(pareto_unit_mean(1.5), 1.0, 1.0, (1e-3, 1e-4, 1e-5), [indicator_interval(0.0, 1.0)], 1e-3)
    tol = 4.0 / math.sqrt(N) + 1e-3
    ok = rep.passed and rep.rows[-1]["sup_distance"] <= tol and elapsed < 300.0
    record("10", ok, f"{_distances(rep)} vs {tol:.4f}; {elapsed:.0f}s")
    assert ok, rep.error


def test_criterion_11_intermediate_properties():
    phi = indicator_interval(0.0, 1.0)
    spec = IntermediateFieldSpec(1.5, INTERVAL, 3.0**-1.5)
    n = 10**5
    x = sample_intermediate(spec, [phi], n, 11).values[:, 0]
    target = intermediate_variance(spec, phi)
    var_ok = abs(x.var(ddof=1) - target) <= 3.0 * _var_se(x)
    agg = aggregate_similarity_check(1.5, INTERVAL, phi, 4, N, 12)
    delta = spec.threshold(spec.dilated([phi]))
    half = IntermediateFieldSpec(1.5, INTERVAL, 3.0**-1.5, delta=delta / 2.0)
    y = sample_intermediate(half, [phi], n, 13).values[:, 0]
    halving_ok = abs(x.var(ddof=1) - y.var(ddof=1)) <= 3.0 * math.hypot(_var_se(x), _var_se(y))
    ok = var_ok and agg["pass"] and agg["s"] == pytest.approx(16.0) and halving_ok
    detail = (
        f"var {x.var(ddof=1):.4f} vs {target:.4f}; KS {agg['statistic']:.4f} < {agg['critical_value']:.4f} (s={agg['s']:g}); "
        f"delta/2 var {y.var(ddof=1):.4f}"
    )
    record("11", ok, detail)
    assert ok


def test_criterion_12_stable_sampler():
    n = 10**5
    rng = np.random.default_rng(12)
    t = np.array(T_GRID)
    worst = 0.0
    for params in (StableParams(1.5, 1.0, 1.0), StableParams(1.5, 0.7, -0.4), StableParams(1.2, 1.3, 0.0)):
        x = stable_sample(params, rng, n)
        emp = np.exp(1j * t[:, None] * x[None, :]).mean(axis=1)
        worst = max(worst, float(np.max(np.abs(emp - stable_cf(params, t)))))
    beta = stable_marginal_params(indicator_interval(0.0, 1.0) - indicator_interval(1.0, 2.0), 1.5).beta
    ok = worst <= 4.0 / math.sqrt(n) and beta == 0.0
    record("12", ok, f"max CF gap {worst:.4f} vs {4.0 / math.sqrt(n):.4f}; balanced beta={beta}")
    assert ok


def _loglog_slope(r, c):
    return float(np.polyfit(np.log(r), np.log(c), 1)[0])


@pytest.mark.xfail(strict=True, reason="over [8, 64] the pre-limit slope is 0.635; 1/2 is reached only as r grows")
def test_criterion_13_lrd_trichotomy_literal():
    r = np.array([8.0, 16.0, 32.0, 64.0])
    expo = lrd_covariance_curve(ModelParams(1.0, 1.0, exponential(1.0)), np.array([32.0, 64.0]))
    rel = abs(expo[1] - expo[0]) / abs(expo[1])
    slope = _loglog_slope(r, lrd_covariance_curve(ModelParams(1.0, 1.0, pareto_unit_mean(1.5)), r))
    ok = rel < 0.01 and abs(slope - 0.5) <= 0.05
    record("13", ok, f"exponential increment {rel:.1e}; Pareto slope on [8, 64] {slope:.3f}")
    assert ok


def test_criterion_13b_lrd_asymptotic_slope():
    r = np.geomspace(8.0, 8192.0, 11)
    curve = lrd_covariance_curve(ModelParams(1.0, 1.0, pareto_unit_mean(1.5)), r)
    local = np.diff(np.log(curve)) / np.diff(np.log(r))
    far = _loglog_slope(r[-3:], curve[-3:])
    expo = lrd_covariance_curve(ModelParams(1.0, 1.0, exponential(1.0)), np.array([32.0, 64.0]))
    rel = abs(expo[1] - expo[0]) / abs(expo[1])
    ok = rel < 0.01 and abs(far - 0.5) <= 0.05 and bool(np.all(np.diff(local) < 0.0)) and bool(np.all(local > 0.5))
    record("13b", ok, f"exponential increment {rel:.1e}; Pareto local slopes {local[0]:.3f} -> {local[-1]:.3f}, slope on [2048, 8192] {far:.3f}")
    assert ok


def test_criterion_14_rotated_balls():
    phi = TestMeasure.indicator(Box((0.0, 0.0), (1.0, 1.0)))
    psi_ = TestMeasure.indicator(Box((0.5, 0.0), (1.5, 0.5)))
    rot, plain = KernelSpec(1.5, DISK, True), KernelSpec(1.5, DISK, False)
    gaps = [
        abs(cov_limit(rot, phi, psi_) / cov_limit(plain, phi, psi_) - 1.0),
        abs(kernel_K(rot, np.array([0.6, 0.8])) / kernel_K(plain, np.array([1.0, 0.0])) - 1.0),
    ]
    pr, pp = ModelParams(2.0, 0.5, exponential(), DISK, rotated=True), ModelParams(2.0, 0.5, exponential(), DISK)
    gaps.append(abs(cov_J(pr, phi, psi_) / cov_J(pp, phi, psi_) - 1.0))
    c_rot = rotated_grain_constant(1.5, DISK)
    c_plain = math.sqrt(kernel_K(plain, np.array([1.0, 0.0])) / c_alpha_d(0.5, 2))
    gaps.append(abs(c_rot / c_plain - 1.0))
    refine = [abs(rotated_grain_constant(1.5, s, nodes=16) / rotated_grain_constant(1.5, s, nodes=32) - 1.0) for s in (DISK, SQUARE)]
    x = simulate_replicates(pr, [phi], 4000, seed=14).values[:, 0]
    mc_ok = abs(x.var(ddof=1) - cov_J(pr, phi, phi)) <= 3.0 * _var_se(x)
    ok = max(gaps) <= 1e-6 and max(refine) < 1e-4 and math.isfinite(c_rot) and mc_ok
    record("14", ok, f"rotation gap {max(gaps):.1e}; c={c_rot:.6f}; node doubling {max(refine):.1e}; rotated MC variance ok={mc_ok}")
    assert ok


def test_criterion_15_determinism(criterion8, tmp_path):
    cfg, rep, _, out1 = criterion8
    out2 = tmp_path / "threads2"
    cfg2 = ExperimentConfig(**{**cfg.__dict__, "threads": 2, "out_dir": str(out2)})
    rep2 = run_convergence_experiment(cfg2)
    files = sorted(p.name for p in out1.glob("*.csv"))
    same = all((out1 / f).read_bytes() == (out2 / f).read_bytes() for f in files)
    digests = [r["digest"] for r in rep.rows] == [r["digest"] for r in rep2.rows]
    ok = len(files) >= 4 and same and digests and rep2.config_hash == rep.config_hash
    record("15", ok, f"{len(files)} CSV files byte-identical across 1 and 2 threads")
    assert ok
