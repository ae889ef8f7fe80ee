"""Estimator diagnostics: exact and Monte Carlo moments, unbiasedness and variance ordering.

Each function returns a list of flat dictionaries so that callers can write
them straight to CSV.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .datagen import SyntheticSpec, gen_correlated
from .estimators import (EstimatorKind, SelectionState, UniformDraws, empirical_moments,
                         per_draw_gradients, u2g_snr_closed_form, u2g_variance_closed_form)
from .model import FrequentistObjective, ObjectiveConfig
from .oracles import exact_gradient_enum, stratum_expectation
from .rng import generator, uniform_open

KINDS = tuple(EstimatorKind)
MULTIVARIATE_KINDS = (EstimatorKind.REINFORCE, EstimatorKind.ARM0, EstimatorKind.U2G)
ORDERING_PI_RANGE = (0.25, 0.75)


def variance_curves(pi_grid: Iterable[float], f0: float = 4.0, f1: float = 5.0,
                    draws: int = 100_000, seed: int = 0) -> list:
    """Exact and sampled mean and variance of every estimator along ``pi_grid``.

    The same uniforms are reused for every estimator at a given ``pi``.
    """
    rows = []
    for i, pi in enumerate(pi_grid):
        u = uniform_open(seed, i, draws)
        for kind in KINDS:
            m, s = stratum_expectation(kind, pi, f0, f1)
            mc_mean, mc_var = empirical_moments(kind, pi, f0, f1, draws, u=u)
            var = max(s - m * m, 0.0)
            rows.append({"pi": float(pi), "estimator": kind.value, "f0": f0, "f1": f1,
                         "exact_mean": m, "exact_var": var, "mc_mean": mc_mean, "mc_var": mc_var,
                         "snr": m / math.sqrt(var) if var > 0 else math.inf,
                         "u2g_closed_var": u2g_variance_closed_form(pi, f1 - f0)
                         if kind is EstimatorKind.U2G else float("nan"),
                         "u2g_closed_snr": u2g_snr_closed_form(pi)
                         if kind is EstimatorKind.U2G else float("nan")})
    return rows


def univariate_unbiasedness(pi_grid: Iterable[float], f0: float = 4.0, f1: float = 5.0) -> list:
    rows = []
    for pi in pi_grid:
        target = pi * (1.0 - pi) * (f1 - f0)
        for kind in KINDS:
            m, _ = stratum_expectation(kind, pi, f0, f1)
            rows.append({"pi": float(pi), "estimator": kind.value, "exact_gradient": target,
                         "stratum_mean": m, "abs_error": abs(m - target)})
    return rows


def multivariate_instance(p: int = 8, seed: int = 3):
    """Small frequentist instance with random logits, as used by the unbiasedness check."""
    beta = np.zeros(p)
    beta[: min(p, 3)] = (2.0, -1.0, 1.5)[: min(p, 3)]
    data = gen_correlated(SyntheticSpec(n=30, p=p, rho=0.3, sigma=1.0, beta_pattern=beta, seed=seed))
    state = SelectionState(generator(seed, 11).normal(0.0, 1.0, p))
    return data, ObjectiveConfig.frequentist(0.2), state


def multivariate_unbiasedness(p: int = 8, draws: int = 100_000, seed: int = 3,
                              kinds: Sequence[EstimatorKind] = MULTIVARIATE_KINDS) -> list:
    """Per-coordinate Monte Carlo mean against the enumerated exact gradient."""
    data, obj, state = multivariate_instance(p, seed)
    exact = exact_gradient_enum(data, obj, state)
    f = FrequentistObjective(data, obj.lam)
    rows = []
    for k, kind in enumerate(kinds):
        du = UniformDraws(uniform_open(seed, 100 + k, (draws, p)))
        G, _, _ = per_draw_gradients(kind, state, du, f.batch)
        mean = G.mean(axis=0)
        se = G.std(axis=0, ddof=1) / math.sqrt(draws)
        for j in range(p):
            z = abs(mean[j] - exact[j]) / se[j] if se[j] > 0 else (0.0 if mean[j] == exact[j] else math.inf)
            rows.append({"estimator": EstimatorKind(kind).value, "coordinate": j,
                         "exact_gradient": exact[j], "mc_mean": mean[j], "stderr": se[j],
                         "z": z, "draws": draws})
    return rows


def admissible_triples(count: int = 50, seed: int = 0) -> np.ndarray:
    """Random ``(pi, f0, f1)`` with ``f >= 0`` and ``|f1 - f0| <= min(f0, f1)``.

    ``pi`` is restricted to the band where the first inequality has at least
    5% slack; outside it the two variances approach each other.
    """
    rng = generator(seed, 12)
    pi = rng.uniform(*ORDERING_PI_RANGE, count)
    f0 = rng.uniform(0.5, 10.0, count)
    # f1 in [f0 / 2, 2 f0] keeps |f1 - f0| <= min(f0, f1)
    f1 = f0 * np.exp(rng.uniform(-math.log(2.0), math.log(2.0), count))
    return np.column_stack([pi, f0, f1])


def ordering_check(count: int = 50, draws: int = 100_000, seed: int = 0, slack: float = 0.05) -> list:
    """Sampled variances on admissible triples; a pass needs each ratio ``<= 1 - slack``."""
    rows = []
    for i, (pi, f0, f1) in enumerate(admissible_triples(count, seed)):
        u = uniform_open(seed, 1000 + i, draws)
        v = {k: empirical_moments(k, pi, f0, f1, draws, u=u)[1] for k in
             (EstimatorKind.U2G, EstimatorKind.ARM, EstimatorKind.REINFORCE)}
        r1 = v[EstimatorKind.U2G] / v[EstimatorKind.ARM]
        r2 = v[EstimatorKind.ARM] / v[EstimatorKind.REINFORCE]
        rows.append({"triple": i, "pi": pi, "f0": f0, "f1": f1,
                     "var_u2g": v[EstimatorKind.U2G], "var_arm": v[EstimatorKind.ARM],
                     "var_reinforce": v[EstimatorKind.REINFORCE],
                     "ratio_u2g_arm": r1, "ratio_arm_reinforce": r2,
                     "passed": bool(r1 <= 1 - slack and r2 <= 1 - slack)})
    return rows
