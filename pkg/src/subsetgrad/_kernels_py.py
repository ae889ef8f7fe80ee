"""Pure-Python twin of ``_kernels.pyx``.

Same algorithms, same tolerances, same outputs (up to floating-point summation
order).  Used when the extension is not built, or when ``SUBSETGRAD_PURE_PYTHON=1``.
"""
import math

import numpy as np


def _append(G, b, j, cols, k, L, w, ridge, tol):
    row = L[k]
    for i in range(k):
        row[i] = (G[cols[i], j] - L[i, :i] @ row[:i]) / L[i, i]
    gjj = G[j, j] + ridge
    d = gjj - row[:k] @ row[:k]
    if ridge > 0.0:
        if d <= 0.0:
            return -1, 0.0, 0.0
    elif d <= tol * gjj or d <= 0.0:
        return 0, 0.0, 0.0
    row[k] = math.sqrt(d)
    w[k] = (b[j] - row[:k] @ w[:k]) / row[k]
    cols[k] = j
    return 1, w[k] * w[k], math.log(d)


def subset_quad_batch(G, b, Z, ridge=0.0, tol=1e-10):
    G = np.asarray(G, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.uint8)
    m, p = Z.shape
    if G.shape != (p, p) or b.shape != (p,):
        raise ValueError("Gram matrix, cross products and indicators disagree on p")
    kmax = int(Z.sum(axis=1).max()) if m else 0
    ld = max(kmax, 1)
    L = np.zeros((ld, ld))
    w = np.zeros(ld)
    cols = np.zeros(ld, dtype=np.intp)
    quad = np.zeros(m)
    logdet = np.zeros(m)
    rank = np.zeros(m, dtype=np.int64)
    for r in range(m):
        k, q, lacc = 0, 0.0, 0.0
        for j in np.flatnonzero(Z[r]):
            status, dq, dl = _append(G, b, j, cols, k, L, w, ridge, tol)
            if status == 1:
                q += dq
                lacc += dl
                k += 1
            elif status < 0:
                k = -1
                break
        quad[r], logdet[r], rank[r] = q, lacc, k
    return quad, logdet, rank


class _Search:
    def __init__(self, G, b, yy, n, lam, cand, tol, ld):
        self.G, self.b, self.yy, self.n, self.lam = G, b, yy, float(n), lam
        self.cand = cand
        self.tol = tol
        self.L = np.zeros((ld, ld))
        self.w = np.zeros(ld)
        self.cols = np.zeros(ld, dtype=np.intp)
        self.cur = np.zeros(len(cand), dtype=np.uint8)
        self.best_mask = np.zeros(len(cand), dtype=np.uint8)
        self.best = 0.0
        self.best_k = -1
        self.leaves = 0

    def better(self, val, ksel):
        scale = max(abs(self.best), 1.0)
        if self.best_k < 0 or val < self.best - 1e-12 * scale:
            return True
        if val > self.best + 1e-12 * scale:
            return False
        if ksel != self.best_k:
            return ksel < self.best_k
        diff = np.flatnonzero(self.cur != self.best_mask)
        return bool(diff.size) and self.cur[diff[0]] > self.best_mask[diff[0]]

    def dfs(self, depth, kacc, ksel, quad):
        scale = max(abs(self.best), 1.0)
        if self.best_k >= 0 and self.lam * ksel > self.best + 1e-12 * scale:
            return
        if depth == len(self.cand):
            self.leaves += 1
            val = max(self.yy - quad, 0.0) / self.n + self.lam * ksel
            if self.better(val, ksel):
                self.best, self.best_k = val, ksel
                self.best_mask[:] = self.cur
            return
        self.dfs(depth + 1, kacc, ksel, quad)
        status, dq, _ = _append(self.G, self.b, self.cand[depth], self.cols, kacc,
                                self.L, self.w, 0.0, self.tol)
        self.cur[depth] = 1
        if status == 1:
            self.dfs(depth + 1, kacc + 1, ksel + 1, quad + dq)
        else:
            self.dfs(depth + 1, kacc, ksel + 1, quad)
        self.cur[depth] = 0


def best_subset_search(G, b, yy, n, lam, cand, fixed=(), tol=1e-10):
    G = np.asarray(G, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    p = G.shape[0]
    cand = np.asarray(cand, dtype=np.intp)
    fixed = np.asarray(fixed, dtype=np.intp)
    if np.any((cand < 0) | (cand >= p)) or np.any((fixed < 0) | (fixed >= p)):
        raise IndexError("column index out of range")
    st = _Search(G, b, yy, n, lam, cand, tol, max(len(cand) + len(fixed), 1))
    kacc, quad = 0, 0.0
    for j in fixed:
        status, dq, _ = _append(G, b, j, st.cols, kacc, st.L, st.w, 0.0, tol)
        if status == 1:
            quad += dq
            kacc += 1
    st.dfs(0, kacc, 0, quad)
    return st.best_mask, st.best, st.leaves
