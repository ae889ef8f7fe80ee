"""Independent reference computations shared by the tests."""
import numpy as np


def normal_equations_rss(X, y, idx):
    """Reference least squares through the normal equations (full-rank subsets only)."""
    if len(idx) == 0:
        return float(y @ y), np.zeros(0)
    Xz = X[:, idx]
    alpha = np.linalg.solve(Xz.T @ Xz, Xz.T @ y)
    r = y - Xz @ alpha
    return float(r @ r), alpha


def dense_log_normal(y, cov):
    """log N(y; 0, cov) from the full n x n covariance."""
    n = y.shape[0]
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    return -0.5 * (n * np.log(2 * np.pi) + logdet + y @ np.linalg.solve(cov, y))
