"""Synthetic data generators, CSV ingestion and population quantities."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, MissingTarget, ParseError, ZeroNoise
from .model import Dataset, TrueModel
from .rng import generator

EXP1_LEADING = (3.0, 1.5, 0.0, 0.0, 2.0)


@dataclass(frozen=True)
class Covariance:
    """Population covariance of the covariates: identity or AR(1) ``rho**|i-j|``."""

    p: int
    rho: float = 0.0

    def __post_init__(self):
        if not 0.0 <= abs(self.rho) < 1.0:
            raise ConfigError("AR(1) correlation must satisfy |rho| < 1")

    @property
    def kind(self) -> str:
        return "identity" if self.rho == 0.0 else "ar1"

    def matrix(self) -> np.ndarray:
        i = np.arange(self.p)
        return self.rho ** np.abs(i[:, None] - i[None, :])

    def quad(self, d) -> float:
        """``d' Sigma d`` in O(p) using the two one-sided AR(1) recursions."""
        d = np.asarray(d, dtype=np.float64)
        if self.rho == 0.0:
            return float(d @ d)
        fwd = np.empty_like(d)
        bwd = np.empty_like(d)
        acc = 0.0
        for i in range(d.size):
            acc = d[i] + self.rho * acc
            fwd[i] = acc
        acc = 0.0
        for i in range(d.size - 1, -1, -1):
            acc = d[i] + self.rho * acc
            bwd[i] = acc
        return float(d @ (fwd + bwd - d))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p, "rho": self.rho}


def ar1_cholesky(p: int, rho: float) -> np.ndarray:
    """Lower Cholesky factor of the AR(1) correlation matrix in closed form.

    ``L[i, 0] = rho**i`` and ``L[i, j] = rho**(i-j) * sqrt(1 - rho**2)`` for
    ``1 <= j <= i``.
    """
    i = np.arange(p)
    lag = i[:, None] - i[None, :]
    L = np.where(lag >= 0, float(rho) ** np.maximum(lag, 0), 0.0)
    L[:, 1:] *= math.sqrt(1.0 - rho * rho)
    return L


class DesignKind(str, enum.Enum):
    CORRELATED = "correlated"
    INDEPENDENT = "independent"
    SENSING = "sensing"


def exp1_beta(p: int) -> np.ndarray:
    beta = np.zeros(p)
    m = min(p, len(EXP1_LEADING))
    beta[:m] = EXP1_LEADING[:m]
    return beta


def leading_ones_beta(p: int, S: int) -> np.ndarray:
    beta = np.zeros(p)
    beta[:S] = 1.0
    return beta


@dataclass(frozen=True)
class SyntheticSpec:
    """Design for the Gaussian-covariate generators.

    Exactly one of ``sigma`` and ``snr`` is given; the other follows from
    ``snr = beta' Sigma beta / sigma**2``.  ``beta_pattern`` is an explicit
    vector, ``"exp1"`` (3, 1.5, 0, 0, 2, 0, ...) or ``"ones"`` (first ``S``
    entries equal to one).
    """

    kind: DesignKind = DesignKind.CORRELATED
    n: int = 60
    p: int = 200
    S: Optional[int] = None
    rho: float = 0.5
    sigma: Optional[float] = None
    snr: Optional[float] = None
    beta_pattern: Union[str, Sequence[float]] = "exp1"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DesignKind(self.kind))
        if (self.sigma is None) == (self.snr is None):
            raise ConfigError("give exactly one of sigma and snr")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if self.snr is not None and not self.snr > 0:
            raise ConfigError("snr must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError("rho must lie in [0, 1)")
        if self.n < 1 or self.p < 1:
            raise ConfigError("n and p must be positive")
        if self.S is not None and not 0 <= self.S <= self.p:
            raise ConfigError("S must lie in [0, p]")

    def beta(self) -> np.ndarray:
        pat = self.beta_pattern
        if isinstance(pat, str):
            if pat == "exp1":
                return exp1_beta(self.p)
            if pat == "ones":
                return leading_ones_beta(self.p, 10 if self.S is None else self.S)
            raise ConfigError(f"unknown beta pattern {pat!r}")
        beta = np.asarray(pat, dtype=np.float64)
        if beta.shape != (self.p,):
            raise ConfigError("explicit beta must have length p")
        return beta

    def covariance(self) -> Covariance:
        rho = self.rho if self.kind is DesignKind.CORRELATED else 0.0
        return Covariance(self.p, rho)

    def resolved_sigma(self) -> float:
        if self.sigma is not None:
            return float(self.sigma)
        return sigma_for_snr(self.beta(), self.covariance(), self.snr)


def sigma_for_snr(beta, cov: Covariance, snr: float) -> float:
    return math.sqrt(cov.quad(beta) / snr)


def _ar1_rows(rng: np.random.Generator, n: int, p: int, rho: float) -> np.ndarray:
    # x_j = rho x_{j-1} + sqrt(1 - rho^2) e_j applies the closed-form factor in O(np)
    E = rng.standard_normal((n, p))
    if rho == 0.0:
        return E
    X = np.empty_like(E)
    X[:, 0] = E[:, 0]
    scale = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + scale * E[:, j]
    return X


def _finish(X, beta, sigma, rng, cov) -> Dataset:
    noise = rng.standard_normal(X.shape[0])
    y = X @ beta + sigma * noise
    return Dataset(X, y, truth=TrueModel(beta, sigma), covariance=cov)


def gen_correlated(spec: SyntheticSpec) -> Dataset:
    """Rows i.i.d. ``N(0, Sigma)`` with ``Sigma_ij = rho**|i-j|``; ``y = X beta + noise``."""
    if spec.kind is not DesignKind.CORRELATED:
        raise ConfigError("gen_correlated needs a correlated spec")
    rng = generator(spec.seed, 1)
    beta = spec.beta()
    X = _ar1_rows(rng, spec.n, spec.p, spec.rho)
    return _finish(X, beta, spec.resolved_sigma(), rng, spec.covariance())


def gen_independent(spec: SyntheticSpec) -> Dataset:
    """Isotropic Gaussian rows."""
    if spec.kind is not DesignKind.INDEPENDENT:
        raise ConfigError("gen_independent needs an independent spec")
    rng = generator(spec.seed, 1)
    beta = spec.beta()
    X = rng.standard_normal((spec.n, spec.p))
    return _finish(X, beta, spec.resolved_sigma(), rng, spec.covariance())


def generate(spec: SyntheticSpec) -> Dataset:
    if spec.kind is DesignKind.CORRELATED:
        return gen_correlated(spec)
    if spec.kind is DesignKind.INDEPENDENT:
        return gen_independent(spec)
    raise ConfigError("use gen_sensing for sensing designs")


@dataclass(frozen=True)
class SensingSpec:
    n: int = 500
    p: int = 1024
    S: int = 10
    amplitude: float = 1.0
    sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.S <= self.p:
            raise ConfigError("S must lie in [0, p]")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")


def gen_sensing(spec: SensingSpec, theta: Optional[np.ndarray] = None) -> Dataset:
    """Unit-norm Gaussian sensing rows and a ``+-amplitude`` sparse signal.

    Positions are uniform without replacement; signs are independent fair coins.
    Passing ``theta`` fixes the signal and draws only fresh measurements.
    """
    rng = generator(spec.seed, 2)
    A = rng.standard_normal((spec.n, spec.p))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    if theta is None:
        theta = np.zeros(spec.p)
        pos = rng.choice(spec.p, size=spec.S, replace=False)
        theta[pos] = spec.amplitude * rng.choice([-1.0, 1.0], size=spec.S)
    else:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (spec.p,):
            raise ConfigError("theta must have length p")
    y = A @ theta + spec.sigma * rng.standard_normal(spec.n)
    # row-normalized Gaussian rows have population covariance I/p; the reported
    # metrics use the identity (see sensing_covariance)
    return Dataset(A, y, truth=TrueModel(theta, spec.sigma), covariance=Covariance(spec.p))


def population_snr(truth: TrueModel, covariance: Covariance) -> float:
    if truth.sigma == 0:
        raise ZeroNoise("population SNR is undefined for noiseless data")
    return covariance.quad(truth.beta_star) / truth.sigma ** 2


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def load_csv(path, target_column: str, standardize: bool = True, intercept: bool = False,
             truth_path=None) -> Dataset:
    """Read a comma-separated file with a header row.

    Every non-target column becomes a covariate.  With ``standardize`` each
    covariate is centered and scaled to unit sample standard deviation;
    constant columns are centered only and listed in ``constant_cols``.  With
    ``intercept`` an all-ones column is appended last; it is always in the
    model and never counted by the penalty.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file", row=0) from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise MissingTarget(f"{path}: no column named {target_column!r}")
        rows = []
        for r, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"{path}: line {r} has {len(rec)} fields, expected {len(header)}",
                                 row=r)
            vals = []
            for c, cell in enumerate(rec):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}: non-numeric cell {cell!r} at line {r}, "
                                     f"column {c + 1} ({header[c]})", row=r, col=c + 1) from None
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows", row=1)
    M = np.array(rows)
    t = header.index(target_column)
    names = [h for i, h in enumerate(header) if i != t]
    X = np.delete(M, t, axis=1)
    y = M[:, t]
    constant = ()
    if standardize:
        X, constant = standardize_columns(X)
    icol = None
    if intercept:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
        icol = X.shape[1] - 1
        names = names + ["(intercept)"]
    truth = None
    if truth_path is not None:
        beta = read_truth(truth_path, len(names))
        truth = TrueModel(beta, float("nan"))
    return Dataset(X, y, truth=truth, standardized=standardize, intercept_col=icol,
                   constant_cols=constant, column_names=names)


def standardize_columns(X: np.ndarray):
    X = X - X.mean(axis=0)
    sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    constant = np.flatnonzero(sd <= 1e-12 * max(1.0, float(np.abs(X).max(initial=0.0))))
    scale = sd.copy()
    scale[constant] = 1.0
    return X / scale, tuple(int(c) for c in constant)


def write_csv(data: Dataset, path, target_name: str = "y"):
    names = data.column_names or [f"x{j + 1}" for j in range(data.p)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(names) + [target_name])
        for row, yi in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(yi))])


def write_truth(truth: TrueModel, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "beta_star"])
        for j, b in enumerate(truth.beta_star):
            w.writerow([j, repr(float(b))])


def read_truth(path, p: int) -> np.ndarray:
    beta = np.zeros(p)
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for r, rec in enumerate(reader, start=2):
            try:
                j = int(rec["index"])
                beta[j] = float(rec["beta_star"])
            except (KeyError, ValueError, IndexError, TypeError):
                raise ParseError(f"{path}: bad truth record at line {r}", row=r) from None
    return beta
