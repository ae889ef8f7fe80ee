"""Support-recovery and prediction metrics, plus aggregation over trials."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import EmptyList, ZeroSignal
from .model import SubsetIndicator, TrueModel

METRIC_NAMES = ("precision", "recall", "f1", "nonzero", "rr", "rte", "pve")


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    nonzero: float
    rr: float
    rte: float
    pve: float
    trial_seed: Optional[int] = None

    def as_dict(self) -> dict:
        return asdict(self)


def support_metrics(z_hat, truth: TrueModel) -> tuple[float, float, float, int]:
    """Precision, recall, F1 and the size of the selected set.

    Empty denominators give 0 rather than NaN.
    """
    z = (z_hat.z if isinstance(z_hat, SubsetIndicator) else np.asarray(z_hat)).astype(bool)
    true = truth.beta_star != 0
    tp = int(np.sum(z & true))
    fp = int(np.sum(z & ~true))
    fn = int(np.sum(~z & true))
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * prec * rec / (prec + rec) if prec + rec else 0.0
    return prec, rec, f1, int(z.sum())


def prediction_metrics(beta_hat, truth: TrueModel, covariance) -> tuple[float, float, float]:
    """Relative risk, relative test error and proportion of variance explained.

    All three use the population covariance analytically.
    """
    d = np.asarray(beta_hat, dtype=np.float64) - truth.beta_star
    err = covariance.quad(d)
    signal = covariance.quad(truth.beta_star)
    if signal == 0:
        raise ZeroSignal("relative risk is undefined when beta' Sigma beta = 0")
    s2 = truth.sigma ** 2
    rr = err / signal
    rte = (err + s2) / s2 if s2 > 0 else math.inf
    pve = 1.0 - (err + s2) / (signal + s2)
    return rr, rte, pve


def evaluate(z_hat, beta_hat, truth: TrueModel, covariance, trial_seed=None) -> MetricsReport:
    prec, rec, f1, nz = support_metrics(z_hat, truth)
    rr, rte, pve = prediction_metrics(beta_hat, truth, covariance)
    return MetricsReport(prec, rec, f1, nz, rr, rte, pve, trial_seed)


def aggregate(reports: Iterable[MetricsReport]) -> dict:
    """Mean, sample standard deviation and count for each metric."""
    reports = list(reports)
    if not reports:
        raise EmptyList("nothing to aggregate")
    out = {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        out[name] = {"mean": float(vals.mean()), "sd": sd, "count": int(vals.size)}
    return out
