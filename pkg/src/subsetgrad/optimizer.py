"""Stochastic gradient descent over inclusion logits, and the tooling around it.

``fit`` runs the core loop: draw uniforms, estimate the gradient of
``E_z[f(z)]`` with one of the unbiased estimators, take a plain SGD step on the
logits, and stop once the largest entropies are small.  The selected support is
``pi > 1/2`` and its coefficients come from an ordinary least-squares refit.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .errors import ConfigError, Diverged, EmptyRegion, InsufficientData
from .estimators import EstimatorKind, SelectionState, UniformDraws, estimate_multivariate
from .model import (Dataset, ObjectiveConfig, ObjectiveKind, SubsetIndicator,
                    VariationalObjective, make_objective, solve_subset_ls)
from .rng import generator, uniform_open

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for one SGD run.

    ``step=None`` resolves to ``min(step_cap, step_scale / lam)`` for the
    frequentist objective; ``step_scale < 2`` keeps it under the ``2 / lam`` bound.
    ``extreme_band`` adds an optional stopping condition on top of the entropy
    rule: every free probability must lie in ``[0, band]`` or ``[1 - band, 1]``.
    The entropy rule alone averages over the top ``stop_fraction`` of
    coordinates, so a few undecided coordinates can survive it.  For the Bayesian one it resolves to ``vi_step`` when given and
    otherwise to ``vi_step_scale * sigma2 / n``: the negative ELBO is roughly
    ``n / (2 sigma2)`` times the frequentist objective, so the step shrinks by
    the same factor.  If ``lam`` is given, an
    explicit ``step >= 2 / lam`` is rejected here; ``fit`` repeats the check
    against the objective's own penalty.
    """

    estimator: EstimatorKind = EstimatorKind.U2G
    K: int = 20
    step: Optional[float] = None
    max_iters: int = 2000
    stop_entropy: float = 0.1
    stop_fraction: float = 0.05
    extreme_band: Optional[float] = None
    init_pi: float = 0.1
    init_jitter: float = 0.01
    seed: int = 0
    step_cap: float = 5.0
    step_scale: float = 1.8
    vi_step: Optional[float] = None
    vi_step_scale: float = 5.0
    lam: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "estimator", EstimatorKind(self.estimator))
        if self.K < 1:
            raise ConfigError("K must be at least 1")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if not 0.0 < self.init_pi < 1.0:
            raise ConfigError("init_pi must lie in (0, 1)")
        if not 0.0 < self.stop_fraction <= 1.0:
            raise ConfigError("stop_fraction must lie in (0, 1]")
        if self.extreme_band is not None and not 0.0 < self.extreme_band < 0.5:
            raise ConfigError("extreme_band must lie in (0, 0.5)")
        if self.init_jitter < 0:
            raise ConfigError("init_jitter must be nonnegative")
        if self.step is not None and not self.step > 0:
            raise ConfigError("step must be positive")
        if not 0.0 < self.step_scale < 2.0:
            raise ConfigError("step_scale must lie in (0, 2) to respect step < 2/lambda")
        if self.step_cap <= 0 or self.vi_step_scale <= 0:
            raise ConfigError("step_cap and vi_step_scale must be positive")
        if self.vi_step is not None and not self.vi_step > 0:
            raise ConfigError("vi_step must be positive")
        if self.lam is not None:
            check_step(self.step, self.lam)

    def resolved_step(self, obj: ObjectiveConfig, n: Optional[int] = None) -> float:
        if obj.kind is ObjectiveKind.BAYESIAN:
            if self.step is not None:
                return self.step
            if self.vi_step is not None:
                return self.vi_step
            if n is None:
                raise ConfigError("the Bayesian default step needs the sample size")
            return self.vi_step_scale * obj.sigma2 / n
        if self.step is not None:
            check_step(self.step, obj.lam)
            return self.step
        return default_step(obj.lam, self.step_cap, self.step_scale)

    def replace(self, **changes) -> "OptimizerConfig":
        from dataclasses import replace
        return replace(self, **changes)


def check_step(step: Optional[float], lam: float):
    if step is not None and lam > 0 and step >= 2.0 / lam:
        raise ConfigError(f"step size {step:g} violates the rule step < 2/lambda = {2.0 / lam:g}")


def default_step(lam: float, cap: float = 5.0, scale: float = 1.8) -> float:
    if lam <= 0:
        if math.isinf(cap):
            raise ConfigError("an uncapped default step needs a positive penalty")
        return cap
    return min(cap, scale / lam)


@dataclass
class FitResult:
    z_hat: SubsetIndicator
    beta_hat: np.ndarray
    phi_final: np.ndarray
    iters: int
    converged: bool
    objective_trace: np.ndarray
    lambda_used: float
    step_used: float = float("nan")
    estimator: Optional[EstimatorKind] = None
    f_evals: int = 0
    elapsed: float = 0.0
    seed: Optional[int] = None

    @property
    def pi_final(self) -> np.ndarray:
        return expit(self.phi_final)

    def summary(self) -> dict:
        return {
            "support": [int(j) for j in self.z_hat.active],
            "nonzero": self.z_hat.k,
            "iters": self.iters,
            "converged": self.converged,
            "lambda_used": self.lambda_used,
            "step_used": self.step_used,
            "estimator": None if self.estimator is None else self.estimator.value,
            "f_evals": self.f_evals,
            "elapsed_sec": self.elapsed,
            "seed": self.seed,
        }


def stopping_entropy(state, fraction: float, mask: Optional[np.ndarray] = None) -> float:
    """Mean of the ``ceil(fraction * p)`` largest values of ``-pi log pi``.

    ``mask`` restricts the coordinates considered (the intercept is excluded
    during fitting).  At least one coordinate always counts.
    """
    pi = state.pi() if isinstance(state, SelectionState) else np.asarray(state, dtype=np.float64)
    if mask is not None:
        pi = pi[mask]
    if pi.size == 0:
        return 0.0
    h = -pi * np.log(np.maximum(pi, 1e-300))
    m = max(1, math.ceil(fraction * pi.size - 1e-9))
    top = np.partition(h, pi.size - m)[pi.size - m:]
    return float(top.mean())


def at_extremes(pi: np.ndarray, band: float = 0.05) -> bool:
    return bool(np.all((pi <= band) | (pi >= 1.0 - band)))


def initial_logits(p: int, cfg: OptimizerConfig) -> np.ndarray:
    base = math.log(cfg.init_pi) - math.log1p(-cfg.init_pi)
    return base + cfg.init_jitter * generator(cfg.seed, 0).standard_normal(p)


def fit(data: Dataset, obj: ObjectiveConfig, cfg: OptimizerConfig,
        phi0: Optional[np.ndarray] = None, objective=None) -> FitResult:
    """Minimize ``E_{z ~ Bern(sigmoid(phi))}[f(z)]`` by SGD on ``phi``.

    ``phi0`` overrides the random initialization (used for warm starts).
    Raises ``Diverged`` if a logit leaves ``[-1e6, 1e6]`` or turns NaN.
    """
    t0 = time.perf_counter()
    step = cfg.resolved_step(obj, data.n)
    f = make_objective(data, obj) if objective is None else objective
    vi = isinstance(f, VariationalObjective)
    p = data.p
    free = np.ones(p, dtype=bool)
    if data.intercept_col is not None:
        free[data.intercept_col] = False
    phi = initial_logits(p, cfg) if phi0 is None else np.array(phi0, dtype=np.float64)
    if phi.shape != (p,):
        raise ConfigError("initial logits must have length p")
    state = SelectionState(phi)
    trace = []
    f_evals = 0
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if vi:
            f.set_probs(state.pi())
        draws = UniformDraws(uniform_open(cfg.seed, it, (cfg.K, p)))
        est = estimate_multivariate(cfg.estimator, state, draws, f.batch)
        f_evals += est.f_evals
        trace.append(est.f_mean)
        g = est.g
        if not free.all():
            g = np.where(free, g, 0.0)
        state.phi -= step * g
        if not np.all(np.abs(state.phi) <= DIVERGENCE_LIMIT):
            raise Diverged(f"logits left [-1e6, 1e6] at iteration {it} with step {step:g}; "
                           f"reduce the step size")
        if stopping_entropy(state, cfg.stop_fraction, free) < cfg.stop_entropy:
            if cfg.extreme_band is None or at_extremes(state.pi()[free], cfg.extreme_band):
                converged = True
                break
    z = (state.pi() > 0.5).astype(np.uint8)
    if data.intercept_col is not None:
        z[data.intercept_col] = 1
    z_hat = SubsetIndicator(z)
    beta = np.zeros(p)
    sol = solve_subset_ls(data, z)
    beta[z_hat.active] = sol.alpha_hat
    return FitResult(z_hat, beta, state.phi.copy(), it, converged, np.asarray(trace),
                     obj.penalty, step, cfg.estimator, f_evals, time.perf_counter() - t0, cfg.seed)


# ---------------------------------------------------------------------------
# lambda selection
# ---------------------------------------------------------------------------


def bic_lambda(n: int) -> float:
    return math.log(n) / (2.0 * n)


@dataclass(frozen=True)
class LambdaGrid:
    """Descending geometric grid centred (in log scale) on ``base``.

    ``span`` is the ratio between the largest and smallest value.  ``base`` is
    always an exact member.
    """

    base: float
    span: float = 300.0
    count: int = 15
    values: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if not self.base > 0:
            raise ConfigError("grid base must be positive")
        if self.count < 1:
            raise ConfigError("grid needs at least one value")
        if self.span < 1:
            raise ConfigError("span must be at least 1")
        if not self.values:
            if self.count == 1:
                vals = np.array([self.base])
            else:
                t = np.linspace(0.5, -0.5, self.count)
                vals = self.base * self.span ** t
                vals[np.argmin(np.abs(t))] = self.base
            object.__setattr__(self, "values", tuple(float(v) for v in vals))
        else:
            vals = np.asarray(self.values, dtype=np.float64)
            if np.any(vals <= 0):
                raise ConfigError("grid values must be positive")
            object.__setattr__(self, "values", tuple(sorted(map(float, vals), reverse=True)))
            object.__setattr__(self, "count", len(self.values))

    @classmethod
    def for_n(cls, n: int, span: float = 300.0, count: int = 15) -> "LambdaGrid":
        return cls(bic_lambda(n), span, count)

    @classmethod
    def explicit(cls, values: Sequence[float]) -> "LambdaGrid":
        vals = sorted((float(v) for v in values), reverse=True)
        if not vals:
            raise ConfigError("empty lambda grid")
        base = min(vals, key=lambda v: abs(math.log(v)) if v > 0 else math.inf)
        return cls(base=base, span=max(vals) / min(vals) if min(vals) > 0 else 1.0,
                   count=len(vals), values=tuple(vals))

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


def lambda_region(truth, n: int, eta: float) -> tuple[float, float]:
    """Penalty interval over which the expected gradient points at the true support."""
    if not 1.0 / n < eta < 1.0:
        raise ConfigError("eta must lie in (1/n, 1)")
    beta = truth.beta_star
    active = beta[beta != 0]
    if active.size == 0:
        raise EmptyRegion("no active coefficients")
    lo = (float(beta @ beta) + truth.sigma ** 2) / n
    hi = (n - 1) / n * (eta - 1.0 / n) * float(np.min(active ** 2))
    if lo >= hi:
        raise EmptyRegion(f"lambda region is empty: lower end {lo:.4g} >= upper end {hi:.4g}")
    return lo, hi


def capacity(truth, n: int, p: int) -> float:
    """Largest total initial inclusion mass (plus ``S``) the theory allows."""
    beta = truth.beta_star
    active = beta[beta != 0]
    a = math.sqrt(p * math.log(n) / (2.0 * (n - 1) ** 2))
    b = (float(beta @ beta) + truth.sigma ** 2) / ((n - 1) * float(np.min(active ** 2)))
    return (1.0 - min(a, b)) * n


def split_indices(n: int, split=(0.7, 0.15, 0.15), seed: int = 0):
    fr = np.asarray(split, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise ConfigError("split must be three positive fractions summing to one")
    perm = generator(seed, 7).permutation(n)
    n_tr = int(round(fr[0] * n))
    n_va = int(round(fr[1] * n))
    parts = perm[:n_tr], perm[n_tr:n_tr + n_va], perm[n_tr + n_va:]
    if min(len(q) for q in parts) < 2:
        raise InsufficientData(f"split of {n} rows leaves a part with fewer than 2 rows")
    return tuple(np.sort(q) for q in parts)


def prediction_error(data: Dataset, beta: np.ndarray) -> float:
    r = data.y - data.X @ beta
    return float(r @ r) / data.n


@dataclass
class CVResult:
    best: FitResult
    best_lambda: float
    table: list
    train_idx: Optional[np.ndarray] = None
    val_idx: Optional[np.ndarray] = None
    test_idx: Optional[np.ndarray] = None


def cross_validate(data: Dataset, obj: ObjectiveConfig, cfg: OptimizerConfig, grid,
                   split=(0.7, 0.15, 0.15), val_data: Optional[Dataset] = None,
                   split_seed: Optional[int] = None) -> CVResult:
    """Pick the penalty with the smallest validation error.

    Without ``val_data`` the rows are shuffled and split into train, validation
    and test parts; test rows are never looked at.  With ``val_data`` all of
    ``data`` is used for training.  Every grid value is fitted from the same
    cold start.  Validation errors equal up to 1e-12 (same support, hence the
    same refit) are resolved toward the larger penalty.
    """
    tr = va = te = None
    if val_data is None:
        tr, va, te = split_indices(data.n, split, cfg.seed if split_seed is None else split_seed)
        train, val = data.subset_rows(tr), data.subset_rows(va)
    else:
        train, val = data, val_data
    rows = []
    best = None
    for lam in sorted(grid, reverse=True):
        res = fit(train, obj.with_penalty(lam), cfg)
        err = prediction_error(val, res.beta_hat)
        rows.append({"lambda": lam, "val_error": err, "nonzero": res.z_hat.k,
                     "converged": res.converged, "iters": res.iters})
        if best is None or err < best[0] - 1e-12 * max(1.0, abs(best[0])):
            best = (err, lam, res)
    return CVResult(best[2], best[1], rows, tr, va, te)


@dataclass
class PathRecord:
    lam: float
    nonzero: int
    beta_hat: np.ndarray
    val_error: float
    converged: bool
    iters: int


def regularization_path(data: Dataset, obj: ObjectiveConfig, cfg: OptimizerConfig, grid,
                        val_data: Optional[Dataset] = None, warm_clip: float = 3.0) -> list:
    """One fit per penalty value in descending order, warm-starting the logits.

    Each warm start clips the previous final logits to ``[-warm_clip, warm_clip]``
    so that coordinates already pinned at an extreme can still move.  The first
    grid point starts cold, so a one-point path reproduces ``fit`` exactly.
    """
    records = []
    phi = None
    for lam in sorted(grid, reverse=True):
        cur = obj.with_penalty(lam)
        res = fit(data, cur, cfg, phi0=phi)
        err = prediction_error(val_data, res.beta_hat) if val_data is not None else float("nan")
        records.append(PathRecord(lam, res.z_hat.k, res.beta_hat, err, res.converged, res.iters))
        phi = np.clip(res.phi_final, -warm_clip, warm_clip)
    return records


# ---------------------------------------------------------------------------
# expected-gradient sign harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TheoryHarnessConfig:
    eta: float = 0.5
    datasets: int = 2000
    draws_per_dataset: int = 20
    confidence: float = 0.99
    seed: int = 0

    def varpi(self, truth, n: int, p: int) -> float:
        return capacity(truth, n, p)


@dataclass
class SignReport:
    mean: np.ndarray
    stderr: np.ndarray
    expected_sign: np.ndarray
    significant: np.ndarray
    agrees: np.ndarray
    lam: float
    region: tuple

    @property
    def all_agree(self) -> bool:
        return bool(np.all(self.agrees))


def expected_gradient_sign_check(truth, n: int, p: int, state: SelectionState,
                                 obj: ObjectiveConfig, harness: TheoryHarnessConfig,
                                 enforce_region: bool = True) -> SignReport:
    """Monte Carlo estimate of the expected U2G gradient at fixed logits.

    Each replicate draws a fresh isotropic design, response and a block of
    uniforms.  The verdict for coordinate ``j`` is the expected sign (negative
    on the true support, positive elsewhere) with the confidence interval
    excluding zero.
    """
    from .datagen import DesignKind, SyntheticSpec, generate
    from .model import FrequentistObjective

    region = lambda_region(truth, n, harness.eta)
    lam = obj.lam
    if enforce_region and not region[0] < lam < region[1]:
        raise ConfigError(f"lambda {lam:g} lies outside the region ({region[0]:.4g}, {region[1]:.4g})")
    pi = state.pi()
    if pi.sum() > capacity(truth, n, p) - truth.S:
        raise ConfigError("initial inclusion mass exceeds the capacity bound")
    grads = np.empty((harness.datasets, p))
    for d in range(harness.datasets):
        spec = SyntheticSpec(DesignKind.INDEPENDENT, n=n, p=p, sigma=truth.sigma,
                             beta_pattern=tuple(truth.beta_star), seed=harness.seed * 1_000_003 + d)
        data = generate(spec)
        f = FrequentistObjective(data, lam)
        draws = UniformDraws(uniform_open(harness.seed, 10_000_000 + d, (harness.draws_per_dataset, p)))
        grads[d] = estimate_multivariate(EstimatorKind.U2G, state, draws, f.batch).g
    mean = grads.mean(axis=0)
    se = grads.std(axis=0, ddof=1) / math.sqrt(harness.datasets)
    zc = norm.ppf(0.5 + harness.confidence / 2.0)
    expected = np.where(truth.beta_star != 0, -1, 1)
    significant = np.abs(mean) > zc * se
    agrees = significant & (np.sign(mean) == expected)
    return SignReport(mean, se, expected, significant, agrees, lam, region)
