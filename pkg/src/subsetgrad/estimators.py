"""Unbiased gradient estimators for Bernoulli inclusion probabilities.

Every estimator here has the form ``a(u; pi) f(1[u < pi]) + b(u; pi) f(1[u > 1 - pi])``
with ``u ~ Unif(0, 1)``.  In the multivariate case the two objective values are
shared across all coordinates, so a draw costs at most two evaluations of ``f``
no matter how large ``p`` is.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch
from .rng import uniform_open


class EstimatorKind(str, enum.Enum):
    REINFORCE = "reinforce"
    ARM = "arm"
    ARM0 = "arm0"
    U2G = "u2g"

    @property
    def evals_per_draw(self) -> int:
        return 1 if self is EstimatorKind.REINFORCE else 2

    def coefficients(self, u, pi):
        """Return ``(a, b)`` weighting ``f(1[u < pi])`` and ``f(1[u > 1 - pi])``."""
        u = np.asarray(u, dtype=np.float64)
        pi = np.asarray(pi, dtype=np.float64)
        lo = (u < pi).astype(np.float64)
        hi = (u > 1.0 - pi).astype(np.float64)
        if self is EstimatorKind.REINFORCE:
            return lo - pi, np.zeros_like(u * pi)
        if self is EstimatorKind.ARM:
            return 0.5 - u, u - 0.5
        if self is EstimatorKind.ARM0:
            mask = np.abs(hi - lo)
            return (0.5 - u) * mask, (u - 0.5) * mask
        half = 0.5 * np.maximum(pi, 1.0 - pi)  # sigmoid(|phi|) / 2
        return half * (lo - hi), half * (hi - lo)


@dataclass
class SelectionState:
    """Logits of the inclusion probabilities."""

    phi: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64).ravel()

    @classmethod
    def from_probs(cls, pi) -> "SelectionState":
        pi = np.asarray(pi, dtype=np.float64)
        return cls(np.log(pi) - np.log1p(-pi))

    def pi(self) -> np.ndarray:
        return expit(self.phi)

    @property
    def p(self) -> int:
        return self.phi.shape[0]


@dataclass(frozen=True)
class UniformDraws:
    u: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=np.float64))
        if not np.all((u > 0.0) & (u < 1.0)):
            raise ValueError("uniform draws must lie strictly inside (0, 1)")
        object.__setattr__(self, "u", u)

    @property
    def K(self) -> int:
        return self.u.shape[0]

    @classmethod
    def generate(cls, seed: int, K: int, p: int, stream: int = 0) -> "UniformDraws":
        return cls(uniform_open(seed, stream, (K, p)), seed)


@dataclass
class GradientEstimate:
    g: np.ndarray
    kind: EstimatorKind
    K: int
    f_evals: int
    f_mean: float = float("nan")


def exact_gradient_univariate(f0: float, f1: float, pi: float) -> float:
    """Derivative of ``E[f(z)]`` in the logit for ``z ~ Bernoulli(pi)``."""
    return pi * (1.0 - pi) * (f1 - f0)


def estimate_univariate(kind: EstimatorKind, u: float, pi: float, f0: float, f1: float) -> float:
    kind = EstimatorKind(kind)
    a, b = kind.coefficients(u, pi)
    f_lo = np.where(np.asarray(u) < pi, f1, f0)
    f_hi = np.where(np.asarray(u) > 1.0 - pi, f1, f0)
    out = a * f_lo + b * f_hi
    return float(out) if np.ndim(out) == 0 else out


def estimate_multivariate(kind: EstimatorKind, state: SelectionState, draws: UniformDraws,
                          f: Callable, batched: bool = True) -> GradientEstimate:
    """Monte Carlo average of the vector estimator over the rows of ``draws.u``.

    ``f`` maps a ``(m, p)`` uint8 array of indicators to ``m`` objective values when
    ``batched`` is true, otherwise a single indicator to a float.  Duplicate
    indicator rows are evaluated once, so ``f_evals`` counts distinct subsets.
    """
    kind = EstimatorKind(kind)
    G, n_eval, f_mean = per_draw_gradients(kind, state, draws, f, batched)
    return GradientEstimate(G.mean(axis=0), kind, draws.K, n_eval, f_mean)


def per_draw_gradients(kind: EstimatorKind, state: SelectionState, draws: UniformDraws,
                       f: Callable, batched: bool = True):
    """One gradient estimate per row of ``draws.u``.

    Returns ``(G, f_evals, f_mean)`` with ``G`` of shape ``(K, p)``.
    """
    kind = EstimatorKind(kind)
    u = draws.u
    K, p = u.shape
    if p != state.p:
        raise DimensionMismatch(f"draws have width {p}, state has {state.p} coordinates")
    pi = state.pi()
    z_lo = (u < pi).astype(np.uint8)
    if kind is EstimatorKind.REINFORCE:
        f_lo, n_eval = _evaluate(f, z_lo, batched)
        return f_lo[:, None] * (z_lo - pi), n_eval, float(f_lo.mean())

    z_hi = (u > 1.0 - pi).astype(np.uint8)
    vals, n_eval = _evaluate(f, np.concatenate([z_lo, z_hi]), batched)
    f_lo, f_hi = vals[:K], vals[K:]
    diff = (f_hi - f_lo)[:, None]
    if kind is EstimatorKind.ARM:
        G = diff * (u - 0.5)
    elif kind is EstimatorKind.ARM0:
        G = diff * (u - 0.5) * (z_hi != z_lo)
    else:
        sig_abs = np.maximum(pi, 1.0 - pi)
        G = 0.5 * diff * sig_abs * (z_hi.astype(np.float64) - z_lo)
    return G, n_eval, float(0.5 * (f_lo.mean() + f_hi.mean()))


def _unique_rows(Z: np.ndarray):
    # np.unique(axis=0) builds one structured field per column; packing each
    # row into a single opaque byte string is far cheaper for wide indicators
    packed = np.ascontiguousarray(np.packbits(Z, axis=1))
    keys = packed.view(np.dtype((np.void, packed.shape[1]))).ravel()
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    return Z[first], inverse.ravel()


def _evaluate(f, Z: np.ndarray, batched: bool):
    uniq, inverse = _unique_rows(Z)
    if batched:
        vals = np.asarray(f(uniq), dtype=np.float64).ravel()
    else:
        vals = np.array([f(row) for row in uniq], dtype=np.float64)
    if vals.shape[0] != uniq.shape[0]:
        raise DimensionMismatch("objective returned the wrong number of values")
    return vals[inverse], uniq.shape[0]


def u2g_variance_closed_form(pi: float, delta: float) -> float:
    return pi * abs(pi - 0.5) * (1.0 - pi) * max(pi, 1.0 - pi) * delta * delta


def u2g_snr_closed_form(pi: float) -> float:
    """Mean over standard deviation of the U2G estimator; does not depend on ``f``."""
    denom = abs(pi - 0.5) * max(pi, 1.0 - pi)
    if denom == 0.0:
        return math.inf
    return math.sqrt(pi * (1.0 - pi) / denom)


def empirical_moments(kind: EstimatorKind, pi: float, f0: float, f1: float, draws: int,
                      seed: int = 0, u: Optional[np.ndarray] = None) -> tuple[float, float]:
    """Sample mean and (unbiased) variance of the univariate estimator.

    Pass ``u`` to reuse the same uniforms across estimators (common random numbers).
    """
    if u is None:
        if draws < 1000:
            raise ValueError("use at least 1000 draws")
        u = uniform_open(seed, 0, draws)
    g = estimate_univariate(kind, u, pi, f0, f1)
    return float(np.mean(g)), float(np.var(g, ddof=1))
