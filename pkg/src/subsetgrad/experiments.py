"""Repeated-trial harness for the three synthetic benchmarks.

A trial generates a training set and an independent validation set with the
same true coefficients, picks the penalty by validation error and scores the
selected model against the known truth.  The same trial seed gives the same dataset for every
method, so methods are compared on identical data.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from .datagen import DesignKind, SensingSpec, SyntheticSpec, gen_sensing, generate
from .errors import ConfigError
from .estimators import EstimatorKind
from .metrics import MetricsReport, evaluate
from .model import Dataset, ObjectiveConfig, ObjectiveKind, solve_subset_ls
from .optimizer import (LambdaGrid, OptimizerConfig, at_extremes, bic_lambda, cross_validate, fit,
                        split_indices)

EXPERIMENTS = ("exp1", "exp2", "cs")
VALIDATION_SEED_SHIFT = 1 << 40


@dataclass(frozen=True)
class Method:
    """An estimator paired with an objective, e.g. ``u2g`` or ``u2g-vi``."""

    estimator: EstimatorKind
    objective: ObjectiveKind = ObjectiveKind.FREQUENTIST

    @classmethod
    def parse(cls, name: str) -> "Method":
        base, _, suffix = name.lower().partition("-")
        if suffix not in ("", "vi"):
            raise ConfigError(f"unknown method {name!r}")
        try:
            est = EstimatorKind(base)
        except ValueError:
            raise ConfigError(f"unknown estimator in method {name!r}") from None
        return cls(est, ObjectiveKind.BAYESIAN if suffix else ObjectiveKind.FREQUENTIST)

    @property
    def name(self) -> str:
        return self.estimator.value + ("-vi" if self.objective is ObjectiveKind.BAYESIAN else "")


@dataclass(frozen=True)
class ExperimentSetup:
    """Everything needed to run one cell of a benchmark.

    The frequentist grid is geometric around ``var(y) log(n) / (2 n)`` computed
    on the training rows; ``vi_grid`` lists the prior logits tried for the
    Bayesian objective.  ``validation="fresh"`` trains on all ``n`` rows and
    validates on an independent sample of the same size and truth;
    ``"split"`` carves train and validation parts out of the ``n`` rows.
    """

    name: str
    data: Union[SyntheticSpec, SensingSpec]
    optimizer: OptimizerConfig
    grid_span: float = 10.0
    grid_count: int = 9
    vi_grid: tuple = (0.0, 1.0, 2.0, 4.0, 8.0)
    split: tuple = (0.7, 0.15, 0.15)
    validation: str = "fresh"
    seed_offset: int = 0

    def __post_init__(self):
        if self.validation not in ("fresh", "split"):
            raise ConfigError("validation must be 'fresh' or 'split'")

    def dataset(self, trial: int) -> Dataset:
        seed = self.seed_offset + trial
        if isinstance(self.data, SensingSpec):
            return gen_sensing(replace(self.data, seed=seed))
        return generate(replace(self.data, seed=seed))

    def validation_set(self, trial: int, data: Dataset) -> Dataset:
        """Independent rows sharing ``data``'s true coefficients."""
        seed = VALIDATION_SEED_SHIFT + self.seed_offset + trial
        if isinstance(self.data, SensingSpec):
            return gen_sensing(replace(self.data, seed=seed), theta=data.truth.beta_star)
        return generate(replace(self.data, seed=seed))

    def describe(self) -> dict:
        d = asdict(self)
        d["data"] = {k: (v.value if hasattr(v, "value") else v) for k, v in asdict(self.data).items()}
        d["optimizer"] = {k: (v.value if hasattr(v, "value") else v)
                          for k, v in asdict(self.optimizer).items()}
        return d


def setup(name: str, **data_overrides) -> ExperimentSetup:
    """Default setup for ``exp1``, ``exp2`` or ``cs``; keyword overrides go to the data spec."""
    if name == "exp1":
        spec = SyntheticSpec(DesignKind.CORRELATED, n=60, p=200, rho=0.5, sigma=1.0)
        opt = OptimizerConfig(extreme_band=0.05)
    elif name == "exp2":
        spec = SyntheticSpec(DesignKind.INDEPENDENT, n=100, p=1000, S=10, snr=5.0, beta_pattern="ones")
        # 0.05 * p keeps the initial mass below the theory's capacity bound
        opt = OptimizerConfig(init_pi=0.05, step_cap=1.0, max_iters=3000, extreme_band=0.05)
    elif name == "cs":
        spec = SensingSpec()
        # the penalty is of order 1e-4 here, so the step is set relative to 1 / lambda
        opt = OptimizerConfig(K=5, step_cap=math.inf, step_scale=0.1, max_iters=3000,
                              extreme_band=0.05)
    else:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    if data_overrides:
        if "snr" in data_overrides and data_overrides["snr"] is not None and "sigma" not in data_overrides:
            data_overrides["sigma"] = None
        if "sigma" in data_overrides and data_overrides["sigma"] is not None and not isinstance(spec, SensingSpec):
            data_overrides.setdefault("snr", None)
        spec = replace(spec, **data_overrides)
    return ExperimentSetup(name, spec, opt)


def response_scaled_lambda(data: Dataset) -> float:
    """``var(y) log(n) / (2 n)``: the BIC penalty for a response of any scale."""
    return bic_lambda(data.n) * max(float(np.var(data.y)), 1e-12)


def l0_noise_variance(data: Dataset, cfg: OptimizerConfig) -> float:
    """Residual variance of an OLS refit on a frequentist fit at the BIC penalty.

    Falls back to the ridge estimate when the selected model leaves fewer than
    two residual degrees of freedom.
    """
    from .model import default_bayes_hyperparameters
    res = fit(data, ObjectiveConfig.frequentist(response_scaled_lambda(data)), cfg.replace(step=None))
    dof = data.n - res.z_hat.k
    if dof <= 1:
        return default_bayes_hyperparameters(data)[0]
    return max(solve_subset_ls(data, res.z_hat).rss / dof, 1e-12)


def bayes_objective(data: Dataset, cfg: OptimizerConfig, lambda0: float = 0.0) -> ObjectiveConfig:
    return ObjectiveConfig.bayesian(lambda0, l0_noise_variance(data, cfg),
                                    100.0 * max(float(np.var(data.y)), 1e-12))


@dataclass
class TrialRecord:
    experiment: str
    method: str
    trial: int
    seed: int
    metrics: MetricsReport
    penalty: float
    converged: bool
    iters: int
    runtime: float
    extremes: bool
    settings: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = {"experiment": self.experiment, "method": self.method, "trial": self.trial,
               "seed": self.seed}
        out.update({k: v for k, v in self.metrics.as_dict().items() if k != "trial_seed"})
        out.update({"penalty": self.penalty, "converged": self.converged, "iters": self.iters,
                    "runtime_sec": self.runtime, "extremes": self.extremes})
        out.update(self.settings)
        return out


def run_trial(su: ExperimentSetup, method: Union[str, Method], trial: int) -> TrialRecord:
    method = Method.parse(method) if isinstance(method, str) else method
    t0 = time.perf_counter()
    data = su.dataset(trial)
    seed = su.seed_offset + trial
    if su.validation == "fresh":
        train, val = data, su.validation_set(trial, data)
    else:
        tr, va, _ = split_indices(data.n, su.split, seed)
        train, val = data.subset_rows(tr), data.subset_rows(va)
    cfg = su.optimizer.replace(estimator=method.estimator, seed=seed)
    if method.objective is ObjectiveKind.FREQUENTIST:
        obj = ObjectiveConfig.frequentist(response_scaled_lambda(train))
        grid = LambdaGrid(obj.lam, su.grid_span, su.grid_count)
    else:
        obj = bayes_objective(train, cfg)
        grid = tuple(su.vi_grid)
    cv = cross_validate(train, obj, cfg, grid, val_data=val)
    res = cv.best
    metrics = evaluate(res.z_hat, res.beta_hat, data.truth, data.covariance, seed)
    return TrialRecord(su.name, method.name, trial, seed, metrics, cv.best_lambda, res.converged,
                       res.iters, time.perf_counter() - t0, at_extremes(res.pi_final))


def run_trials(su: ExperimentSetup, methods: Sequence[Union[str, Method]], trials: int,
               workers: int = 1) -> list:
    """All ``trials x methods`` cells, sorted by (trial, method)."""
    jobs = [(t, Method.parse(m) if isinstance(m, str) else m) for t in range(trials) for m in methods]
    if workers <= 1:
        out = [run_trial(su, m, t) for t, m in jobs]
    else:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(run_trial, [su] * len(jobs), [m for _, m in jobs], [t for t, _ in jobs]))
    return sorted(out, key=lambda r: (r.trial, r.method))
