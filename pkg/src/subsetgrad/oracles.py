"""Brute-force references used to check the stochastic machinery.

Everything here enumerates: subsets for the best-subset optimum and the exact
gradient, u-strata for estimator expectations.  These are only meant for small
``p``.
"""
from __future__ import annotations

import itertools
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import TooLarge
from .estimators import EstimatorKind, SelectionState
from .model import (Dataset, ObjectiveConfig, ObjectiveKind, SubsetIndicator,
                    objective_freq, objective_vi)


def exhaustive_best_subset(data: Dataset, lam: float, max_p: int = 20) -> tuple[SubsetIndicator, float]:
    """Global minimizer of ``rss(z)/n + lam * ||z||_0`` over all subsets.

    Depth-first enumeration that grows a Cholesky factor one column at a time,
    so each visited subset costs O(k^2) on top of its parent.  Branches whose
    penalty alone already exceeds the incumbent are cut; this never changes the
    answer because the residual term is nonnegative.  Ties go to the smaller
    subset, then to the lexicographically smaller index tuple.
    """
    if data.p > max_p:
        raise TooLarge(f"p = {data.p} exceeds the exhaustive-search cap of {max_p}")
    data.check_finite()
    G = np.ascontiguousarray(data.X.T @ data.X)
    b = np.ascontiguousarray(data.X.T @ data.y)
    yy = float(data.y @ data.y)
    fixed = [] if data.intercept_col is None else [data.intercept_col]
    cand = [j for j in range(data.p) if j not in fixed]
    mask, value, _ = kernels.best_subset_search(G, b, yy, data.n, float(lam), cand, fixed)
    z = np.zeros(data.p, dtype=np.uint8)
    z[np.asarray(cand, dtype=int)[mask.astype(bool)]] = 1
    if fixed:
        z[fixed] = 1
    return SubsetIndicator(z), float(value)


def all_subsets(p: int) -> np.ndarray:
    """All ``2**p`` indicator vectors; row ``m`` is the binary expansion of ``m``."""
    m = np.arange(2 ** p)[:, None]
    return ((m >> np.arange(p)) & 1).astype(np.uint8)


def _objective_table(data: Dataset, obj, state: Optional[SelectionState], max_p: int) -> np.ndarray:
    p = data.p
    if p > max_p:
        raise TooLarge(f"p = {p} exceeds the enumeration cap of {max_p}")
    Z = all_subsets(p)
    if callable(obj) and not isinstance(obj, ObjectiveConfig):
        return np.array([obj(z) for z in Z], dtype=np.float64)
    if obj.kind is ObjectiveKind.FREQUENTIST:
        return np.array([objective_freq(data, z, obj) for z in Z])
    probs = state.pi()
    return np.array([objective_vi(data, z, probs, obj) for z in Z])


def _subset_weights(Z: np.ndarray, pi: np.ndarray) -> np.ndarray:
    return np.prod(np.where(Z == 1, pi, 1.0 - pi), axis=1)


def exact_gradient_enum(data: Dataset, obj, state: SelectionState, max_p: int = 12) -> np.ndarray:
    """Exact gradient of ``E_z[f(z)]`` in the logits by summing over all subsets.

    Coordinate ``v`` is ``pi_v (1 - pi_v) E[f(z_{-v}, 1) - f(z_{-v}, 0)]``.  ``obj``
    is either an ``ObjectiveConfig`` (evaluated with the reference, per-subset
    objective functions) or any callable taking an indicator vector.  For the
    Bayesian objective the ``log q`` term is frozen at ``state``.
    """
    return gradient_from_table(_objective_table(data, obj, state, max_p), state.pi())


def gradient_from_table(F: np.ndarray, pi: np.ndarray) -> np.ndarray:
    p = pi.shape[0]
    idx = np.arange(2 ** p)
    grad = np.empty(p)
    for v in range(p):
        off = idx[(idx >> v) & 1 == 0]
        on = off | (1 << v)
        others = np.delete(np.arange(p), v)
        Zo = ((off[:, None] >> others) & 1).astype(np.uint8)
        w = _subset_weights(Zo, pi[others])
        grad[v] = pi[v] * (1.0 - pi[v]) * np.dot(w, F[on] - F[off])
    return grad


def expected_objective_enum(data: Dataset, obj, pi, max_p: int = 12) -> float:
    """``E_{z ~ Bern(pi)}[f(z)]`` by full enumeration (frequentist or callable ``obj``)."""
    pi = np.asarray(pi, dtype=np.float64)
    F = _objective_table(data, obj, None, max_p)
    return float(_subset_weights(all_subsets(data.p), pi) @ F)


def _strata(pi: float):
    """Breakpoints of the three u-strata and the indicator pair on each."""
    lo_b, hi_b = min(pi, 1.0 - pi), max(pi, 1.0 - pi)
    out = []
    for a, b in ((0.0, lo_b), (lo_b, hi_b), (hi_b, 1.0)):
        mid = 0.5 * (a + b)
        out.append((a, b, int(mid < pi), int(mid > 1.0 - pi)))
    return out


def stratum_expectation(kind: EstimatorKind, pi: float, f0: float, f1: float) -> tuple[float, float]:
    """Exact ``E[g]`` and ``E[g^2]`` of a univariate estimator.

    Within each stratum both indicators are constant and ``g`` is affine in
    ``u``, so ``g = c0 + c1 u`` is integrated in closed form.
    """
    kind = EstimatorKind(kind)
    mean = second = 0.0
    for a, b, z_lo, z_hi in _strata(pi):
        if b <= a:
            continue
        c0, c1 = _affine_coefficients(kind, pi, z_lo, z_hi, f0, f1)
        d1 = b - a
        d2 = (b * b - a * a) / 2.0
        d3 = (b ** 3 - a ** 3) / 3.0
        mean += c0 * d1 + c1 * d2
        second += c0 * c0 * d1 + 2.0 * c0 * c1 * d2 + c1 * c1 * d3
    return mean, second


def _affine_coefficients(kind, pi, z_lo, z_hi, f0, f1):
    # g(u) on a stratum with fixed indicators, written as c0 + c1*u
    f_lo = f1 if z_lo else f0
    f_hi = f1 if z_hi else f0
    if kind is EstimatorKind.REINFORCE:
        return f_lo * (z_lo - pi), 0.0
    if kind is EstimatorKind.ARM or kind is EstimatorKind.ARM0:
        mask = 1.0 if (kind is EstimatorKind.ARM or z_lo != z_hi) else 0.0
        d = (f_hi - f_lo) * mask
        return -0.5 * d, d
    return 0.5 * max(pi, 1.0 - pi) * (f_hi - f_lo) * (z_hi - z_lo), 0.0


def multivariate_stratum_mean(kind: EstimatorKind, pi, f: Callable, max_p: int = 6) -> np.ndarray:
    """Exact expectation of the vector estimator by enumerating all ``3**p`` strata.

    ``f`` takes an indicator vector.  Inside a stratum cell the indicators are
    fixed and every coefficient is affine in its own ``u_v``, so averaging a
    coefficient over the cell equals evaluating it at the cell midpoint.
    """
    kind = EstimatorKind(kind)
    pi = np.asarray(pi, dtype=np.float64)
    p = pi.shape[0]
    if p > max_p:
        raise TooLarge(f"3^{p} strata is beyond the cap p <= {max_p}")
    per_coord = [_strata(float(x)) for x in pi]
    cache = {}

    def fv(z):
        key = z.tobytes()
        if key not in cache:
            cache[key] = float(f(z))
        return cache[key]

    total = np.zeros(p)
    for cell in itertools.product(range(3), repeat=p):
        parts = [per_coord[j][s] for j, s in enumerate(cell)]
        lengths = np.array([b - a for a, b, _, _ in parts])
        weight = float(np.prod(lengths))
        if weight <= 0.0:
            continue
        mid = np.array([0.5 * (a + b) for a, b, _, _ in parts])
        z_lo = np.array([zl for _, _, zl, _ in parts], dtype=np.uint8)
        z_hi = np.array([zh for _, _, _, zh in parts], dtype=np.uint8)
        a_coef, b_coef = kind.coefficients(mid, pi)
        if kind is EstimatorKind.REINFORCE:
            g = a_coef * fv(z_lo)
        else:
            g = a_coef * fv(z_lo) + b_coef * fv(z_hi)
        total += weight * g
    return total
