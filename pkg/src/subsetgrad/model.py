"""Data model and the two subset objectives.

``objective_freq``/``log_marginal``/``objective_vi`` are the reference,
one-subset-at-a-time evaluations.  ``FrequentistObjective`` and
``VariationalObjective`` evaluate the same quantities for whole batches of
indicator vectors through the Gram-matrix kernels; they are what the optimizer
calls in its inner loop.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionMismatch, NonFiniteData, NumericalFailure

LOG_2PI = math.log(2.0 * math.pi)
PROB_CLAMP = 1e-6


@dataclass(frozen=True)
class TrueModel:
    beta_star: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "beta_star", np.asarray(self.beta_star, dtype=np.float64))
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.beta_star != 0)

    @property
    def S(self) -> int:
        return int(np.count_nonzero(self.beta_star))

    @property
    def z_star(self) -> np.ndarray:
        return (self.beta_star != 0).astype(np.uint8)


@dataclass
class Dataset:
    """Design matrix ``X`` (n x p), response ``y`` and optional ground truth.

    ``covariance`` describes the population covariance of the rows when it is
    known in closed form (synthetic data); metrics use it analytically.
    """

    X: np.ndarray
    y: np.ndarray
    truth: Optional[TrueModel] = None
    standardized: bool = False
    intercept_col: Optional[int] = None
    covariance: Optional[object] = None
    constant_cols: tuple = ()
    column_names: Optional[list] = None

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64).ravel()
        if self.X.ndim != 2:
            raise DimensionMismatch("X must be a matrix")
        n, p = self.X.shape
        if n < 1 or p < 1:
            raise DimensionMismatch("need at least one row and one column")
        if self.y.shape[0] != n:
            raise DimensionMismatch(f"y has {self.y.shape[0]} entries but X has {n} rows")
        if self.truth is not None and self.truth.beta_star.shape[0] != p:
            raise DimensionMismatch("beta_star length differs from the column count")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset_rows(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows], truth=self.truth,
                       standardized=self.standardized, intercept_col=self.intercept_col,
                       covariance=self.covariance, constant_cols=self.constant_cols,
                       column_names=self.column_names)

    def check_finite(self):
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise NonFiniteData("X or y contains NaN or infinite entries")


@dataclass(frozen=True)
class SubsetIndicator:
    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z)
        if z.ndim != 1:
            raise DimensionMismatch("indicator must be a vector")
        if not np.all((z == 0) | (z == 1)):
            raise ValueError("indicator entries must be 0 or 1")
        object.__setattr__(self, "z", z.astype(np.uint8))

    @classmethod
    def from_active(cls, active, p: int) -> "SubsetIndicator":
        z = np.zeros(p, dtype=np.uint8)
        z[np.asarray(active, dtype=int)] = 1
        return cls(z)

    @property
    def k(self) -> int:
        return int(self.z.sum())

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.z)

    def __len__(self):
        return self.z.shape[0]


class ObjectiveKind(str, enum.Enum):
    FREQUENTIST = "freq"
    BAYESIAN = "vi"


@dataclass(frozen=True)
class ObjectiveConfig:
    kind: ObjectiveKind = ObjectiveKind.FREQUENTIST
    lam: Optional[float] = None
    lambda0: Optional[float] = None
    sigma2: Optional[float] = None
    sigma_alpha2: Optional[float] = None

    def __post_init__(self):
        kind = ObjectiveKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ObjectiveKind.FREQUENTIST:
            if self.lam is None or not self.lam >= 0:
                raise ConfigError("frequentist objective needs lam >= 0")
        else:
            if self.lambda0 is None or not self.lambda0 >= 0:
                raise ConfigError("Bayesian objective needs lambda0 >= 0")
            if self.sigma2 is None or not self.sigma2 > 0:
                raise ConfigError("Bayesian objective needs sigma2 > 0")
            if self.sigma_alpha2 is None or not self.sigma_alpha2 > 0:
                raise ConfigError("Bayesian objective needs sigma_alpha2 > 0")

    @classmethod
    def frequentist(cls, lam: float) -> "ObjectiveConfig":
        return cls(ObjectiveKind.FREQUENTIST, lam=float(lam))

    @classmethod
    def bayesian(cls, lambda0: float, sigma2: float, sigma_alpha2: float) -> "ObjectiveConfig":
        return cls(ObjectiveKind.BAYESIAN, lambda0=float(lambda0), sigma2=float(sigma2),
                   sigma_alpha2=float(sigma_alpha2))

    def with_penalty(self, value: float) -> "ObjectiveConfig":
        """Same objective with its sparsity weight (lam or lambda0) replaced."""
        if self.kind is ObjectiveKind.FREQUENTIST:
            return ObjectiveConfig.frequentist(value)
        return ObjectiveConfig.bayesian(value, self.sigma2, self.sigma_alpha2)

    @property
    def penalty(self) -> float:
        return self.lam if self.kind is ObjectiveKind.FREQUENTIST else self.lambda0


@dataclass(frozen=True)
class SubsetSolve:
    alpha_hat: np.ndarray
    rss: float
    rank: int
    min_norm: bool


def _indicator(data: Dataset, z) -> np.ndarray:
    zz = z.z if isinstance(z, SubsetIndicator) else np.asarray(z)
    if zz.shape != (data.p,):
        raise DimensionMismatch(f"indicator has length {zz.shape[0] if zz.ndim else 0}, expected {data.p}")
    zz = zz.astype(np.uint8)
    if data.intercept_col is not None:
        zz = zz.copy()
        zz[data.intercept_col] = 1
    return zz


def _penalized_count(data: Dataset, zz: np.ndarray) -> int:
    k = int(zz.sum())
    if data.intercept_col is not None:
        k -= int(zz[data.intercept_col])
    return k


def solve_subset_ls(data: Dataset, z) -> SubsetSolve:
    """Least squares of ``y`` on the columns selected by ``z``.

    Rank-deficient designs (including ``k >= n``) get the minimum-norm solution
    from an SVD-based solver; ``min_norm`` records that this happened.
    """
    data.check_finite()
    zz = _indicator(data, z)
    idx = np.flatnonzero(zz)
    if idx.size == 0:
        return SubsetSolve(np.zeros(0), float(data.y @ data.y), 0, False)
    Xz = data.X[:, idx]
    alpha, _, rank, _ = np.linalg.lstsq(Xz, data.y, rcond=None)
    resid = data.y - Xz @ alpha
    return SubsetSolve(alpha, float(resid @ resid), int(rank), bool(rank < idx.size))


def objective_freq(data: Dataset, z, cfg: ObjectiveConfig) -> float:
    """Penalized least squares ``rss(z)/n + lam * ||z||_0``."""
    if cfg.kind is not ObjectiveKind.FREQUENTIST:
        raise ConfigError("objective_freq needs a frequentist config")
    zz = _indicator(data, z)
    sol = solve_subset_ls(data, zz)
    return sol.rss / data.n + cfg.lam * _penalized_count(data, zz)


def log_marginal(data: Dataset, z, cfg: ObjectiveConfig) -> float:
    """``log N(y; 0, sigma2 I + sigma_alpha2 X_z X_z')`` through the k x k inner matrix."""
    if cfg.kind is not ObjectiveKind.BAYESIAN:
        raise ConfigError("log_marginal needs a Bayesian config")
    data.check_finite()
    zz = _indicator(data, z)
    idx = np.flatnonzero(zz)
    n = data.n
    s2, sa2 = cfg.sigma2, cfg.sigma_alpha2
    yy = float(data.y @ data.y)
    if idx.size == 0:
        return -0.5 * (n * LOG_2PI + n * math.log(s2) + yy / s2)
    Xz = data.X[:, idx]
    bz = Xz.T @ data.y
    M = Xz.T @ Xz + (s2 / sa2) * np.eye(idx.size)
    try:
        Lc = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("inner k x k factorization failed; consider jittering sigma_alpha2") from exc
    w = np.linalg.solve(Lc, bz) if idx.size > 1 else bz / Lc[0, 0]
    k = idx.size
    logdet_c = n * math.log(s2) + k * math.log(sa2 / s2) + 2.0 * np.log(np.diag(Lc)).sum()
    quad = (yy - w @ w) / s2
    return -0.5 * (n * LOG_2PI + logdet_c + quad)


def log_prior(z: np.ndarray, lambda0: float, count: Optional[int] = None) -> float:
    """Independent Bernoulli(sigmoid(-lambda0)) prior on the inclusion indicators."""
    k = int(np.sum(z)) if count is None else count
    p = len(z)
    return k * _log_sigmoid(-lambda0) + (p - k) * _log_sigmoid(lambda0)


def log_q(z: np.ndarray, probs: np.ndarray) -> float:
    pc = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    z = np.asarray(z, dtype=np.float64)
    return float(z @ np.log(pc) + (1.0 - z) @ np.log1p(-pc))


def _log_sigmoid(x: float) -> float:
    return -math.log1p(math.exp(-x)) if x >= 0 else x - math.log1p(math.exp(x))


def objective_vi(data: Dataset, z, state_probs, cfg: ObjectiveConfig) -> float:
    """Negated tightened-ELBO integrand at ``z``.

    ``state_probs`` are the current inclusion probabilities, treated as constants
    of the draw.
    """
    zz = _indicator(data, z)
    probs = np.asarray(state_probs, dtype=np.float64)
    if probs.shape != (data.p,):
        raise DimensionMismatch("state_probs must have length p")
    lm = log_marginal(data, zz, cfg)
    keep = _free_mask(data)
    lp = log_prior(zz[keep], cfg.lambda0)
    lq = log_q(zz[keep], probs[keep])
    return -(lm + lp - lq)


def _free_mask(data: Dataset) -> np.ndarray:
    keep = np.ones(data.p, dtype=bool)
    if data.intercept_col is not None:
        keep[data.intercept_col] = False
    return keep


# ---------------------------------------------------------------------------
# batched evaluators
# ---------------------------------------------------------------------------


class _GramObjective:
    """Shared plumbing: Gram matrix, cross products, batching and dedup."""

    def __init__(self, data: Dataset):
        data.check_finite()
        self.data = data
        self.n, self.p = data.n, data.p
        self.G = np.ascontiguousarray(data.X.T @ data.X)
        self.b = np.ascontiguousarray(data.X.T @ data.y)
        self.yy = float(data.y @ data.y)
        self.intercept_col = data.intercept_col

    def _prepare(self, Z) -> np.ndarray:
        Z = np.asarray(Z)
        if Z.ndim == 1:
            Z = Z[None, :]
        if Z.shape[1] != self.p:
            raise DimensionMismatch(f"indicators have {Z.shape[1]} columns, expected {self.p}")
        Z = np.ascontiguousarray(Z, dtype=np.uint8)
        if self.intercept_col is not None:
            Z = Z.copy()
            Z[:, self.intercept_col] = 1
        return Z

    def _counts(self, Z: np.ndarray) -> np.ndarray:
        k = Z.sum(axis=1, dtype=np.int64)
        if self.intercept_col is not None:
            k -= 1
        return k

    def __call__(self, z) -> float:
        zz = z.z if isinstance(z, SubsetIndicator) else z
        return float(self.batch(np.asarray(zz)[None, :])[0])


class FrequentistObjective(_GramObjective):
    """``rss(z)/n + lam * ||z||_0`` for batches of indicators."""

    def __init__(self, data: Dataset, lam: float):
        super().__init__(data)
        self.lam = float(lam)

    def rss(self, Z) -> np.ndarray:
        Z = self._prepare(Z)
        quad, _, _ = kernels.subset_quad_batch(self.G, self.b, Z, 0.0)
        return np.maximum(self.yy - quad, 0.0)

    def batch(self, Z) -> np.ndarray:
        Z = self._prepare(Z)
        quad, _, _ = kernels.subset_quad_batch(self.G, self.b, Z, 0.0)
        return np.maximum(self.yy - quad, 0.0) / self.n + self.lam * self._counts(Z)


class VariationalObjective(_GramObjective):
    """Negated tightened-ELBO integrand for batches of indicators.

    ``probs`` must be refreshed (``set_probs``) before each gradient step; the
    log q term uses them as constants.
    """

    def __init__(self, data: Dataset, cfg: ObjectiveConfig):
        super().__init__(data)
        if cfg.kind is not ObjectiveKind.BAYESIAN:
            raise ConfigError("VariationalObjective needs a Bayesian config")
        self.cfg = cfg
        self.s2, self.sa2 = cfg.sigma2, cfg.sigma_alpha2
        self.ridge = self.s2 / self.sa2
        self.free = _free_mask(data)
        self.p_free = int(self.free.sum())
        self.lp_in = _log_sigmoid(-cfg.lambda0)
        self.lp_out = _log_sigmoid(cfg.lambda0)
        self.log_pi = None
        self.log_1mpi = None
        self.set_probs(np.full(self.p, 0.5))

    def set_probs(self, probs):
        pc = np.clip(np.asarray(probs, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
        self.log_pi = np.where(self.free, np.log(pc), 0.0)
        self.log_1mpi = np.where(self.free, np.log1p(-pc), 0.0)

    def log_marginal(self, Z) -> np.ndarray:
        Z = self._prepare(Z)
        quad, logdet, rank = kernels.subset_quad_batch(self.G, self.b, Z, self.ridge)
        if np.any(rank < 0):
            raise NumericalFailure("inner k x k factorization failed; consider jittering sigma_alpha2")
        k = Z.sum(axis=1)
        logdet_c = self.n * math.log(self.s2) + k * math.log(self.sa2 / self.s2) + logdet
        return -0.5 * (self.n * LOG_2PI + logdet_c + (self.yy - quad) / self.s2)

    def batch(self, Z) -> np.ndarray:
        Z = self._prepare(Z)
        lm = self.log_marginal(Z)
        k = self._counts(Z)
        lp = k * self.lp_in + (self.p_free - k) * self.lp_out
        Zf = Z.astype(np.float64)
        lq = Zf @ self.log_pi + (1.0 - Zf) @ self.log_1mpi
        return -(lm + lp - lq)


def make_objective(data: Dataset, cfg: ObjectiveConfig):
    if cfg.kind is ObjectiveKind.FREQUENTIST:
        return FrequentistObjective(data, cfg.lam)
    return VariationalObjective(data, cfg)


def default_bayes_hyperparameters(data: Dataset, grid_size: int = 30) -> tuple[float, float]:
    """Noise and slab variances for the Bayesian objective when none are given.

    ``sigma2`` is the residual variance of a ridge pre-fit whose penalty is picked
    by generalized cross-validation (residual sum of squares over ``n - df``);
    ``sigma_alpha2`` is ``100 * var(y)``.
    """
    X, y = data.X, data.y
    n = data.n
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    Uty = U.T @ y
    resid_perp = max(float(y @ y - Uty @ Uty), 0.0)
    top = s[0] ** 2 if s.size else 1.0
    best = None
    for alpha in top * np.logspace(-6, 1, grid_size):
        shrink = s ** 2 / (s ** 2 + alpha)
        df = float(shrink.sum())
        rss = float(((1.0 - shrink) ** 2 * Uty ** 2).sum()) + resid_perp
        if n - df <= 0.5:
            continue
        gcv = n * rss / (n - df) ** 2
        if best is None or gcv < best[0]:
            best = (gcv, rss / (n - df))
    var_y = float(np.var(y))
    sigma2 = best[1] if best is not None and best[1] > 0 else max(var_y, 1e-12)
    sigma_alpha2 = 100.0 * max(var_y, 1e-12)
    return sigma2, sigma_alpha2
