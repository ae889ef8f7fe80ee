import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import dense_log_normal, normal_equations_rss
from subsetgrad.datagen import SyntheticSpec, gen_correlated
from subsetgrad.errors import ConfigError, DimensionMismatch, NonFiniteData
from subsetgrad.model import (Dataset, FrequentistObjective, ObjectiveConfig, SubsetIndicator,
                              TrueModel, VariationalObjective, log_marginal, objective_freq,
                              objective_vi, solve_subset_ls)


def test_dataset_validates_shapes():
    with pytest.raises(DimensionMismatch):
        Dataset(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(DimensionMismatch):
        Dataset(np.zeros((3, 2)), np.zeros(3), truth=TrueModel(np.zeros(3), 1.0))


def test_true_model_active_set():
    t = TrueModel(np.array([0.0, 2.0, 0.0, -1.0]), 1.0)
    np.testing.assert_array_equal(t.active_set, [1, 3])
    assert t.S == 2


def test_indicator_counts():
    z = SubsetIndicator(np.array([1, 0, 1, 1]))
    assert z.k == 3
    np.testing.assert_array_equal(z.active, [0, 2, 3])
    with pytest.raises(ValueError):
        SubsetIndicator(np.array([0, 2]))


def test_objective_config_requires_fields():
    with pytest.raises(ConfigError):
        ObjectiveConfig(kind="freq")
    with pytest.raises(ConfigError):
        ObjectiveConfig(kind="vi", lambda0=0.0, sigma2=1.0)
    assert ObjectiveConfig.bayesian(0.0, 1.0, 2.0).with_penalty(3.0).lambda0 == 3.0


def test_empty_subset(small_data):
    sol = solve_subset_ls(small_data, np.zeros(6, dtype=np.uint8))
    assert sol.alpha_hat.size == 0
    assert sol.rss == pytest.approx(small_data.y @ small_data.y)


def test_identity_design_interpolates():
    y = np.array([1.0, -2.0, 0.5])
    sol = solve_subset_ls(Dataset(np.eye(3), y), np.ones(3, dtype=np.uint8))
    np.testing.assert_allclose(sol.alpha_hat, y)
    assert sol.rss == pytest.approx(0.0, abs=1e-24)


def test_subset_ls_matches_normal_equations(small_data):
    idx = [0, 2, 3]
    z = SubsetIndicator.from_active(idx, 6)
    rss_ref, alpha_ref = normal_equations_rss(small_data.X, small_data.y, idx)
    sol = solve_subset_ls(small_data, z)
    assert sol.rss == pytest.approx(rss_ref, rel=1e-8)
    np.testing.assert_allclose(sol.alpha_hat, alpha_ref, rtol=1e-8)
    assert sol.rank == 3 and not sol.min_norm


def test_subset_ls_rank_deficient_uses_min_norm():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((3, 5))
    y = rng.standard_normal(3)
    sol = solve_subset_ls(Dataset(X, y), np.array([1, 1, 1, 1, 0], dtype=np.uint8))
    assert sol.min_norm and sol.rank == 3
    assert sol.rss == pytest.approx(0.0, abs=1e-20)
    np.testing.assert_allclose(sol.alpha_hat, np.linalg.pinv(X[:, :4]) @ y, atol=1e-12)


def test_subset_ls_errors(small_data):
    with pytest.raises(DimensionMismatch):
        solve_subset_ls(small_data, np.zeros(5, dtype=np.uint8))
    X = small_data.X.copy()
    X[0, 0] = np.nan
    with pytest.raises(NonFiniteData):
        solve_subset_ls(Dataset(X, small_data.y), np.zeros(6, dtype=np.uint8))


def test_objective_freq_trivial_cases(small_data):
    cfg = ObjectiveConfig.frequentist(0.5)
    d4 = Dataset(small_data.X[:, :4], small_data.y)
    assert objective_freq(d4, np.zeros(4, dtype=np.uint8), cfg) == pytest.approx(
        small_data.y @ small_data.y / 20)
    rng = np.random.default_rng(3)
    d = Dataset(rng.standard_normal((3, 5)), rng.standard_normal(3))
    val = objective_freq(d, np.array([1, 1, 0, 1, 1], dtype=np.uint8), ObjectiveConfig.frequentist(0.1))
    assert val == pytest.approx(0.4, abs=1e-12)


def test_objective_freq_exp1_true_support():
    d = gen_correlated(SyntheticSpec(n=60, p=200, rho=0.5, sigma=1.0, seed=0))
    lam = math.log(60) / 120
    rss_ref, _ = normal_equations_rss(d.X, d.y, [0, 1, 4])
    val = objective_freq(d, d.truth.z_star, ObjectiveConfig.frequentist(lam))
    assert val == pytest.approx(rss_ref / 60 + 3 * lam, rel=1e-10)
    # frozen from the normal-equations oracle
    assert val == pytest.approx(0.9144160860188337, rel=1e-10)


def test_objective_freq_properties(small_data):
    rng = np.random.default_rng(5)
    for _ in range(20):
        z = rng.integers(0, 2, 6).astype(np.uint8)
        k = int(z.sum())
        lo = objective_freq(small_data, z, ObjectiveConfig.frequentist(0.1))
        hi = objective_freq(small_data, z, ObjectiveConfig.frequentist(0.2))
        assert lo >= 0.1 * k
        if k:
            assert hi > lo


def test_residual_orthogonal(small_data):
    z = np.array([1, 1, 0, 1, 0, 1], dtype=np.uint8)
    sol = solve_subset_ls(small_data, z)
    Xz = small_data.X[:, z.astype(bool)]
    r = small_data.y - Xz @ sol.alpha_hat
    assert np.max(np.abs(Xz.T @ r)) <= 1e-7 * np.linalg.norm(small_data.y)


def _bayes(s2=0.7, sa2=3.0, l0=0.5):
    return ObjectiveConfig.bayesian(l0, s2, sa2)


def test_log_marginal_empty_model_at_origin():
    d = Dataset(np.ones((4, 2)), np.zeros(4))
    val = log_marginal(d, np.zeros(2, dtype=np.uint8), _bayes(s2=1.0))
    assert val == pytest.approx(-2.0 * math.log(2 * math.pi))


def test_log_marginal_matches_dense():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((5, 3))
    y = rng.standard_normal(5)
    z = np.array([1, 0, 1], dtype=np.uint8)
    cfg = _bayes()
    Xz = X[:, [0, 2]]
    ref = dense_log_normal(y, 0.7 * np.eye(5) + 3.0 * Xz @ Xz.T)
    assert log_marginal(Dataset(X, y), z, cfg) == pytest.approx(ref, rel=1e-8)


def test_log_marginal_slab_collapse(small_data):
    z = np.array([1, 1, 0, 0, 1, 0], dtype=np.uint8)
    cfg = ObjectiveConfig.bayesian(0.0, 1.0, 1e-12)
    empty = log_marginal(small_data, np.zeros(6, dtype=np.uint8), cfg)
    assert log_marginal(small_data, z, cfg) == pytest.approx(empty, abs=1e-4)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 50), p=st.integers(1, 8), seed=st.integers(0, 2 ** 32 - 1),
       s2=st.floats(0.05, 5.0), sa2=st.floats(0.05, 50.0))
def test_log_marginal_woodbury_property(n, p, seed, s2, sa2):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = rng.standard_normal(n)
    z = rng.integers(0, 2, p).astype(np.uint8)
    Xz = X[:, z.astype(bool)]
    ref = dense_log_normal(y, s2 * np.eye(n) + sa2 * Xz @ Xz.T)
    cfg = ObjectiveConfig.bayesian(0.0, s2, sa2)
    got = log_marginal(Dataset(X, y), z, cfg)
    assert got == pytest.approx(ref, rel=1e-8, abs=1e-8)
    batch = VariationalObjective(Dataset(X, y), cfg).log_marginal(z[None])[0]
    assert batch == pytest.approx(ref, rel=1e-8, abs=1e-8)


def test_objective_vi_terms():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((10, 4))
    y = X[:, 0] - X[:, 2] + 0.5 * rng.standard_normal(10)
    d = Dataset(X, y)
    z = np.array([1, 0, 1, 1], dtype=np.uint8)
    probs = np.array([0.9, 0.2, 0.6, 0.3])
    cfg = ObjectiveConfig.bayesian(1.2, 0.4, 5.0)
    Xz = X[:, [0, 2, 3]]
    lm = dense_log_normal(y, 0.4 * np.eye(10) + 5.0 * Xz @ Xz.T)
    s_in = 1.0 / (1.0 + math.exp(1.2))
    lp = 3 * math.log(s_in) + 1 * math.log(1.0 - s_in)
    lq = math.log(0.9) + math.log(0.8) + math.log(0.6) + math.log(0.3)
    assert objective_vi(d, z, probs, cfg) == pytest.approx(-(lm + lp - lq), rel=1e-10)


def test_objective_vi_fair_prior_and_entropy(small_data):
    cfg = ObjectiveConfig.bayesian(0.0, 1.0, 2.0)
    z = np.array([0, 1, 1, 0, 0, 1], dtype=np.uint8)
    probs = np.full(6, 0.5)
    lm = log_marginal(small_data, z, cfg)
    # fair-coin prior and uniform q cancel exactly
    assert objective_vi(small_data, z, probs, cfg) == pytest.approx(-lm, rel=1e-12)


def test_objective_vi_clamps_probabilities(small_data):
    cfg = ObjectiveConfig.bayesian(0.0, 1.0, 2.0)
    z = np.ones(6, dtype=np.uint8)
    val = objective_vi(small_data, z, np.zeros(6), cfg)
    assert np.isfinite(val)


def test_batched_objectives_match_reference(small_data):
    rng = np.random.default_rng(2)
    Z = rng.integers(0, 2, (30, 6)).astype(np.uint8)
    fo = FrequentistObjective(small_data, 0.3)
    ref = [objective_freq(small_data, z, ObjectiveConfig.frequentist(0.3)) for z in Z]
    np.testing.assert_allclose(fo.batch(Z), ref, rtol=1e-10)
    cfg = ObjectiveConfig.bayesian(0.8, 0.5, 4.0)
    vo = VariationalObjective(small_data, cfg)
    probs = rng.uniform(0.05, 0.95, 6)
    vo.set_probs(probs)
    ref = [objective_vi(small_data, z, probs, cfg) for z in Z]
    np.testing.assert_allclose(vo.batch(Z), ref, rtol=1e-10)


def test_batched_rank_deficient_matches_lstsq():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((4, 7))
    X[:, 5] = X[:, 0] + X[:, 1]
    y = rng.standard_normal(4)
    d = Dataset(X, y)
    fo = FrequentistObjective(d, 0.0)
    Z = rng.integers(0, 2, (40, 7)).astype(np.uint8)
    ref = [solve_subset_ls(d, z).rss for z in Z]
    np.testing.assert_allclose(fo.rss(Z), ref, atol=1e-9)


def test_intercept_is_forced_and_unpenalized():
    rng = np.random.default_rng(8)
    X = np.hstack([rng.standard_normal((15, 3)), np.ones((15, 1))])
    y = 4.0 + X[:, 0] + 0.1 * rng.standard_normal(15)
    d = Dataset(X, y, intercept_col=3)
    cfg = ObjectiveConfig.frequentist(0.2)
    z = np.array([1, 0, 0, 0], dtype=np.uint8)
    rss, _ = normal_equations_rss(X, y, [0, 3])
    assert objective_freq(d, z, cfg) == pytest.approx(rss / 15 + 0.2, rel=1e-10)
    assert FrequentistObjective(d, 0.2)(z) == pytest.approx(rss / 15 + 0.2, rel=1e-10)
