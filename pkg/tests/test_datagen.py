import math

import numpy as np
import pytest

from subsetgrad.datagen import (Covariance, DesignKind, SensingSpec, SyntheticSpec, ar1_cholesky,
                                gen_correlated, gen_independent, gen_sensing, generate, load_csv,
                                population_snr, sigma_for_snr, write_csv, write_truth)
from subsetgrad.errors import ConfigError, MissingTarget, ParseError, ZeroNoise
from subsetgrad.model import TrueModel


@pytest.mark.parametrize("rho", [0.0, 0.5, 0.8])
@pytest.mark.parametrize("p", [1, 7, 200])
def test_ar1_cholesky_reproduces_covariance(rho, p):
    L = ar1_cholesky(p, rho)
    np.testing.assert_allclose(L @ L.T, Covariance(p, rho).matrix(), atol=1e-10)
    assert np.allclose(L, np.tril(L))


@pytest.mark.parametrize("rho", [0.0, 0.3, 0.9])
def test_covariance_quad_matches_dense(rho):
    d = np.random.default_rng(1).normal(size=50)
    assert Covariance(50, rho).quad(d) == pytest.approx(d @ Covariance(50, rho).matrix() @ d, rel=1e-12)


def test_spec_validation():
    with pytest.raises(ConfigError):
        SyntheticSpec(sigma=1.0, snr=2.0)
    with pytest.raises(ConfigError):
        SyntheticSpec()
    with pytest.raises(ConfigError):
        SyntheticSpec(sigma=1.0, rho=1.0)
    with pytest.raises(ConfigError):
        SyntheticSpec(sigma=1.0, p=5, S=6)
    with pytest.raises(ConfigError):
        gen_independent(SyntheticSpec(sigma=1.0))


def test_correlated_identity_smoke():
    d = gen_correlated(SyntheticSpec(n=10 ** 4, p=5, rho=0.0, sigma=1.0, seed=1))
    C = np.corrcoef(d.X, rowvar=False)
    off = C[~np.eye(5, dtype=bool)]
    assert np.all(np.abs(off) < 4 / math.sqrt(10 ** 4))


def test_correlated_adjacent_columns():
    d = gen_correlated(SyntheticSpec(n=10 ** 4, p=5, rho=0.5, sigma=1.0, seed=2))
    r = np.corrcoef(d.X[:, 0], d.X[:, 1])[0, 1]
    assert abs(r - 0.5) < 4 / math.sqrt(10 ** 4)
    np.testing.assert_array_equal(d.truth.beta_star, [3, 1.5, 0, 0, 2])


def test_sigma_from_exp1_snr():
    spec = SyntheticSpec(p=200, rho=0.5, snr=21.3)
    assert spec.resolved_sigma() == pytest.approx(1.0, rel=0.02)


def test_independent_sigma_from_snr():
    spec = SyntheticSpec(DesignKind.INDEPENDENT, n=100, p=1000, S=10, snr=5, beta_pattern="ones")
    assert spec.resolved_sigma() == pytest.approx(math.sqrt(2), rel=1e-12)
    d = gen_independent(spec)
    np.testing.assert_array_equal(d.truth.active_set, np.arange(10))
    assert d.truth.sigma == pytest.approx(math.sqrt(2))
    assert sigma_for_snr(spec.beta(), spec.covariance(), 1e12) < 1e-5


def test_seed_determinism():
    spec = SyntheticSpec(n=30, p=40, sigma=1.0, seed=9)
    a, b = generate(spec), generate(spec)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    c = generate(SyntheticSpec(n=30, p=40, sigma=1.0, seed=10))
    assert not np.array_equal(a.X, c.X)
    s1, s2 = gen_sensing(SensingSpec(n=20, p=64, S=3, seed=4)), gen_sensing(SensingSpec(n=20, p=64, S=3, seed=4))
    np.testing.assert_array_equal(s1.X, s2.X)
    np.testing.assert_array_equal(s1.truth.beta_star, s2.truth.beta_star)


def test_sensing():
    d = gen_sensing(SensingSpec(seed=3))
    assert d.X.shape == (500, 1024)
    np.testing.assert_allclose(np.linalg.norm(d.X, axis=1), 1.0, atol=1e-12)
    theta = d.truth.beta_star
    assert d.truth.S == 10
    assert set(np.abs(theta[theta != 0])) == {1.0}
    assert d.truth.sigma == 0.1
    clean = gen_sensing(SensingSpec(n=30, p=64, S=4, sigma=0.0, seed=3))
    np.testing.assert_array_equal(clean.y, clean.X @ clean.truth.beta_star)


def test_population_snr():
    assert population_snr(TrueModel(np.eye(4)[0], 1.0), Covariance(4)) == 1.0
    b = SyntheticSpec(sigma=1.0).beta()
    cov = Covariance(200, 0.5)
    assert population_snr(TrueModel(b, 3.0), cov) == pytest.approx(2.4, abs=0.06)
    assert population_snr(TrueModel(b, 1.0), cov) == pytest.approx(21.3, abs=0.06)
    with pytest.raises(ZeroNoise):
        population_snr(TrueModel(b, 0.0), cov)


def test_population_snr_empirical():
    spec = SyntheticSpec(n=10 ** 5, p=8, rho=0.5, sigma=1.0, seed=5,
                         beta_pattern=[3, 1.5, 0, 0, 2, 0, 0, 0])
    d = gen_correlated(spec)
    emp = np.var(d.X @ d.truth.beta_star) / 1.0
    assert emp == pytest.approx(population_snr(d.truth, d.covariance), rel=0.03)


def test_load_csv_basic(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("x1,x2,y\n1,2,3\n4,5,6\n7,8,10\n")
    d = load_csv(f, "y", standardize=False)
    assert (d.n, d.p) == (3, 2)
    np.testing.assert_array_equal(d.y, [3, 6, 10])
    assert d.column_names == ["x1", "x2"] and d.truth is None


def test_load_csv_standardize_and_intercept(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("x1,c,y\n1,5,3\n2,5,6\n4,5,10\n")
    d = load_csv(f, "y", intercept=True)
    np.testing.assert_allclose(d.X[:, 0].mean(), 0, atol=1e-15)
    assert d.X[:, 0].std(ddof=1) == pytest.approx(1.0)
    assert d.constant_cols == (1,)
    np.testing.assert_array_equal(d.X[:, 1], 0.0)
    assert d.intercept_col == 2 and np.all(d.X[:, 2] == 1.0)


def test_load_csv_errors(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("x1,x2,y\n1,2,3\n4,oops,6\n")
    with pytest.raises(ParseError) as info:
        load_csv(f, "y")
    assert (info.value.row, info.value.col) == (3, 2)
    assert "line 3" in str(info.value) and "column 2" in str(info.value)
    with pytest.raises(MissingTarget):
        load_csv(f, "target")
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("x1,y\n1,2,3\n")
    with pytest.raises(ParseError):
        load_csv(ragged, "y")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ParseError):
        load_csv(empty, "y")


def test_csv_round_trip(tmp_path):
    d = gen_independent(SyntheticSpec(DesignKind.INDEPENDENT, n=25, p=12, S=3, snr=5,
                                      beta_pattern="ones", seed=2))
    write_csv(d, tmp_path / "d.csv")
    write_truth(d.truth, tmp_path / "t.csv")
    back = load_csv(tmp_path / "d.csv", "y", standardize=False, truth_path=tmp_path / "t.csv")
    np.testing.assert_allclose(back.X, d.X, atol=1e-12)
    np.testing.assert_allclose(back.y, d.y, atol=1e-12)
    np.testing.assert_array_equal(back.truth.beta_star, d.truth.beta_star)
