import math
import warnings

import numpy as np
import pytest

from subsetgrad.lab import (admissible_triples, multivariate_unbiasedness, ordering_check,
                            univariate_unbiasedness, variance_curves)


def test_univariate_unbiasedness_exact():
    rows = univariate_unbiasedness([0.1, 0.5, 0.9], 4.0, 5.0)
    assert len(rows) == 12
    assert max(r["abs_error"] for r in rows) < 1e-12


def test_variance_curves_columns():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rows = variance_curves([0.2, 0.5], draws=5000, seed=1)
    u2g = [r for r in rows if r["estimator"] == "u2g"]
    for r in u2g:
        assert r["exact_var"] == pytest.approx(r["u2g_closed_var"], rel=1e-10, abs=1e-15)
    assert u2g[1]["mc_var"] == 0.0
    assert all(math.isnan(r["u2g_closed_var"]) for r in rows if r["estimator"] != "u2g")


def test_multivariate_unbiasedness_small():
    rows = multivariate_unbiasedness(p=4, draws=20_000, seed=3)
    assert len(rows) == 12
    assert max(r["z"] for r in rows) < 4.0


def test_admissible_triples():
    t = admissible_triples(200, seed=5)
    pi, f0, f1 = t.T
    assert np.all((pi >= 0.25) & (pi <= 0.75))
    assert np.all(np.abs(f1 - f0) <= np.minimum(f0, f1) + 1e-12)


def test_ordering_small():
    rows = ordering_check(5, draws=20_000, seed=2)
    assert all(r["passed"] for r in rows)
