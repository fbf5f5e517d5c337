from __future__ import annotations

import math

import numpy as np
import pytest

from germgrain.errors import ContractViolation, ParameterError
from germgrain.geometry import INTERVAL, Box, GrainShape, TestMeasure, indicator_interval, unit_ball_volume
from germgrain.grain_model import (
    GrainRealization,
    ModelParams,
    ReplicateBatch,
    char_functional_J,
    cov_J,
    evaluate_J,
    lrd_covariance_curve,
    mean_J,
    overlap_product,
    simulate_grains,
    simulate_replicates,
    truncation_bias,
)
from germgrain.heavytail import c_alpha_d, deterministic, exponential, pareto_unit_mean
from germgrain.kernels import riesz_inner


def _se_var(x):
    return np.std((x - x.mean()) ** 2, ddof=1) / math.sqrt(len(x))


def test_params_validation():
    with pytest.raises(ParameterError):
        ModelParams(0.0, 1.0, exponential())
    with pytest.raises(ParameterError):
        ModelParams(1.0, -1.0, exponential())


def test_grain_count_poisson_mean():
    params = ModelParams(10.0, 1.0, deterministic(1.0))
    phi = indicator_interval(0.0, 2.0)  # window [-0.5, 2.5] for unit grains
    rng = np.random.default_rng(0)
    counts = np.array([len(simulate_grains(params, phi, rng)) for _ in range(10**4)])
    assert abs(counts.mean() - 30.0) <= 3.0 * math.sqrt(30.0 / len(counts))


def test_void_probability():
    params = ModelParams(0.05, 1.0, deterministic(1.0))
    phi = indicator_interval(0.0, 1.0)
    rng = np.random.default_rng(1)
    empty = np.mean([len(simulate_grains(params, phi, rng)) == 0 for _ in range(4000)])
    assert empty >= math.exp(-0.05 * 2.0) - 3.0 * math.sqrt(0.25 / 4000)


def test_truncation_bias_closed_form():
    lam, rho, g = 1.0, 0.01, 1.5
    params = ModelParams(lam, rho, pareto_unit_mean(g))
    phi = indicator_interval(0.0, 1.0)
    v_cut = 1e9
    expected = lam * g * (rho / 3.0) ** g * v_cut ** (1.0 - g) / (g - 1.0)
    real = simulate_grains(params, phi, np.random.default_rng(0), v_cut=v_cut)
    assert real.bias_bound == pytest.approx(expected, rel=1e-12)
    assert real.bias_bound == pytest.approx(1.8257e-8, rel=1e-4)
    assert np.all(real.volumes <= v_cut)


@pytest.mark.xfail(strict=True, reason="the tail moment at v_cut = 1e9 is 1.8e-8, not below 1e-9; see the decisions ledger")
def test_truncation_bias_literal_example():
    params = ModelParams(1.0, 0.01, pareto_unit_mean(1.5))
    phi = indicator_interval(0.0, 1.0)
    assert truncation_bias(params.intensity, phi, 1e9) <= 1e-9 * params.lam * phi.total_mass


def test_empty_truncation_rejected():
    params = ModelParams(1.0, 1.0, pareto_unit_mean(1.5))
    with pytest.raises(ParameterError):
        simulate_grains(params, indicator_interval(0, 1), np.random.default_rng(0), v_cut=0.2)


def test_evaluate_J_examples():
    phi = indicator_interval(0.0, 1.0)
    empty = GrainRealization(np.empty((0, 1)), np.empty(0), None, INTERVAL, np.array([0.0]), np.array([1.0]), 0.5, math.inf, 0.0)
    assert evaluate_J(empty, phi) == 0.0
    one = GrainRealization(np.array([[0.5]]), np.array([0.3]), None, INTERVAL, np.array([0.0]), np.array([1.0]), 0.5, math.inf, 0.0)
    assert evaluate_J(one, phi) == pytest.approx(0.3)
    with pytest.raises(ContractViolation):
        evaluate_J(one, indicator_interval(0.0, 3.0))


def test_linearity(rng):
    params = ModelParams(20.0, 0.3, pareto_unit_mean(1.5))
    phi, psi = indicator_interval(0.0, 1.0), indicator_interval(0.5, 2.0)
    both = phi * 2.0 + psi * -3.0
    real = simulate_grains(params, both, rng)
    assert evaluate_J(real, both) == pytest.approx(2.0 * evaluate_J(real, phi) - 3.0 * evaluate_J(real, psi), rel=1e-12, abs=1e-12)


def test_mean_J_examples():
    assert mean_J(ModelParams(10.0, 0.2, deterministic(1.0)), indicator_interval(0, 1)) == pytest.approx(2.0)
    bal = indicator_interval(0.0, 1.0) - indicator_interval(1.0, 2.0)
    assert mean_J(ModelParams(10.0, 0.2, pareto_unit_mean(1.5)), bal) == 0.0


def test_mc_mean_and_centering():
    params = ModelParams(5.0, 0.5, pareto_unit_mean(1.5))
    phi = indicator_interval(0.0, 1.0)
    raw = simulate_replicates(params, [phi], 10**4, seed=3, center=False).values[:, 0]
    assert abs(raw.mean() - mean_J(params, phi)) <= 3.0 * raw.std(ddof=1) / math.sqrt(len(raw))
    centred = simulate_replicates(params, [phi], 10**4, seed=4).values[:, 0]
    assert abs(centred.mean()) <= 3.0 * centred.std(ddof=1) / math.sqrt(len(centred))


def test_cov_J_deterministic_closed_form():
    params = ModelParams(2.0, 1.0, deterministic(1.0))
    phi = indicator_interval(0.0, 1.0)
    assert cov_J(params, phi, phi) == pytest.approx(4.0 / 3.0, rel=1e-12)


def test_cov_J_far_apart_with_cut():
    params = ModelParams(2.0, 1.0, exponential(1.0))
    phi, psi = indicator_interval(0.0, 1.0), indicator_interval(10.0, 11.0)
    assert cov_J(params, phi, psi, v_cut=5.0) == 0.0


def test_cov_J_pareto_matches_mc():
    params = ModelParams(5.0, 0.5, pareto_unit_mean(1.5))
    phi, psi = indicator_interval(0.0, 1.0), indicator_interval(0.5, 2.0)
    x = simulate_replicates(params, [phi, psi], 10**4, seed=9).values
    emp = np.cov(x, rowvar=False)
    prod = (x[:, 0] - x[:, 0].mean()) * (x[:, 1] - x[:, 1].mean())
    assert abs(emp[0, 1] - cov_J(params, phi, psi)) <= 3.0 * prod.std(ddof=1) / math.sqrt(len(x))
    assert abs(emp[0, 0] - cov_J(params, phi, phi)) <= 3.0 * _se_var(x[:, 0])


def test_char_functional_basics():
    params = ModelParams(5.0, 0.5, pareto_unit_mean(1.5))
    phi = indicator_interval(0.0, 1.0)
    assert char_functional_J(params, phi, 1.0, 0.0) == 1.0
    for t in (-3.0, -0.7, 0.2, 1.0, 5.0):
        assert abs(char_functional_J(params, phi, 1.0, t)) <= 1.0 + 1e-15


def test_char_functional_second_derivative():
    for law in (pareto_unit_mean(1.5), exponential(1.0), deterministic(1.0)):
        params = ModelParams(5.0, 0.5, law)
        phi = indicator_interval(0.0, 1.0) - indicator_interval(1.5, 2.0) * 0.5
        b, h = 1.7, 1e-3
        lg = lambda t: np.log(char_functional_J(params, phi, b, t))
        second = -(lg(h) - 2.0 * lg(0.0) + lg(-h)).real / h**2
        assert second == pytest.approx(cov_J(params, phi, phi) / b**2, rel=1e-4)


def test_char_functional_matches_mc():
    params = ModelParams(5.0, 0.5, pareto_unit_mean(1.5))
    phi = indicator_interval(0.0, 1.0)
    n = 10**5
    x = simulate_replicates(params, [phi], n, seed=21).values[:, 0]
    for t in (0.5, 1.0, 2.0):
        emp = np.mean(np.exp(1j * t * x))
        assert abs(emp - char_functional_J(params, phi, 1.0, t)) <= 4.0 / math.sqrt(n)


def test_truncation_consistency():
    params = ModelParams(1.0, 1.0, pareto_unit_mean(1.5))
    phi = indicator_interval(0.0, 1.0)
    a = simulate_replicates(params, [phi], 10**4, seed=5, v_cut=10.0, center=False)
    b = simulate_replicates(params, [phi], 10**4, seed=5, v_cut=100.0, center=False)
    diff = abs(a.values.mean() - b.values.mean())
    assert diff < a.meta["bias_bound"] + b.meta["bias_bound"]
    assert a.meta["bias_bound"] == pytest.approx(truncation_bias(params.intensity, phi, 10.0))


def test_replicate_batch_roundtrip(tmp_path):
    params = ModelParams(3.0, 0.5, exponential(1.0))
    batch = simulate_replicates(params, [indicator_interval(0, 1).named("a"), indicator_interval(2, 3)], 300, seed=1)
    path = batch.save(tmp_path / "r.csv")
    back = ReplicateBatch.load(path)
    assert back.names == ["a", "phi1"]
    assert np.array_equal(back.values, batch.values)
    assert back.meta["seed"] == 1
    assert set(back.meta) >= {"seed", "params", "v_cut", "bias_bound"}


def test_replicates_independent_of_threads():
    params = ModelParams(30.0, 0.1, pareto_unit_mean(1.5))
    phis = [indicator_interval(0, 1)]
    a = simulate_replicates(params, phis, 1000, seed=77, threads=1)
    b = simulate_replicates(params, phis, 1000, seed=77, threads=3)
    assert a.to_csv_text() == b.to_csv_text()


def test_lrd_curves():
    r = np.array([1.05, 1.2, 2.0, 32.0, 64.0])
    expo = lrd_covariance_curve(ModelParams(1.0, 1.0, exponential(1.0)), r)
    assert 0.0 < expo[0] < expo[1] < expo[2]
    assert abs(expo[-1] - expo[-2]) < 0.01 * expo[-2]
    par = lrd_covariance_curve(ModelParams(1.0, 1.0, pareto_unit_mean(1.5)), np.array([2.0, 64.0]))
    assert par[1] / par[0] > 3.0


def test_quadratic_overlap_bound():
    # int phi(x + vC)**2 dx <= c min(v, v**(2 - alpha)), c from the L1 norm and the raw Riesz energy
    rng = np.random.default_rng(8)
    a = 0.5  # C = [-1/2, 1/2] lies in a**(1/d) B with B the unit ball
    for _ in range(20):
        lo, hi = sorted(rng.uniform(-1.0, 1.0, 2))
        phi = indicator_interval(lo, hi, rng.uniform(0.1, 2.0)) + indicator_interval(hi + 0.2, hi + 1.0, rng.uniform(0.1, 2.0))
        alpha = rng.uniform(0.1, 0.9)
        v = 10 ** rng.uniform(-3.0, 2.0)
        energy = riesz_inner(phi, phi, alpha) / c_alpha_d(alpha, 1)
        c = max(phi.l1_norm**2, 2.0 ** (1.0 - alpha) * unit_ball_volume(1) * a ** (2.0 - alpha) * energy)
        lhs = overlap_product(phi, phi, INTERVAL, v)[0]
        assert lhs <= c * min(v, v ** (2.0 - alpha)) * (1 + 1e-12)


def test_rotated_square_pipeline_matches_cov():
    shape = GrainShape("cube", 2)
    params = ModelParams(40.0, 0.05, exponential(1.0), shape, rotated=True)
    phi = TestMeasure.indicator(Box((0.0, 0.0), (1.0, 1.0)))
    x = simulate_replicates(params, [phi], 4000, seed=2).values[:, 0]
    assert abs(x.var(ddof=1) - cov_J(params, phi, phi)) <= 3.0 * _se_var(x)
