# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for subset least squares on a precomputed Gram matrix.

Both entry points grow a Cholesky factor of ``G[S, S] + ridge * I`` one column
at a time.  With ``ridge == 0`` a column whose Schur complement falls below
``tol * G[j, j]`` lies (numerically) in the span of the columns already taken;
it is skipped, which yields the minimum-norm least-squares residual.  The pure
Python twin in ``_kernels_py`` implements the same arithmetic.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, fabs
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef int _append(const double[:, ::1] G, const double[::1] b, Py_ssize_t j,
                 Py_ssize_t* cols, Py_ssize_t k, double* L, Py_ssize_t ld,
                 double* w, double ridge, double tol,
                 double* dquad, double* dlogdet) noexcept nogil:
    # returns 1 accepted, 0 dependent (skipped), -1 breakdown (ridge > 0 only)
    cdef Py_ssize_t i, m
    cdef double s, d, gjj
    cdef double* row = L + k * ld
    for i in range(k):
        s = G[cols[i], j]
        for m in range(i):
            s -= L[i * ld + m] * row[m]
        row[i] = s / L[i * ld + i]
    gjj = G[j, j] + ridge
    d = gjj
    for i in range(k):
        d -= row[i] * row[i]
    if ridge > 0.0:
        if d <= 0.0:
            return -1
    elif d <= tol * gjj or d <= 0.0:
        return 0
    row[k] = sqrt(d)
    s = b[j]
    for i in range(k):
        s -= row[i] * w[i]
    w[k] = s / row[k]
    dquad[0] = w[k] * w[k]
    dlogdet[0] = log(d)
    cols[k] = j
    return 1


def subset_quad_batch(const double[:, ::1] G, const double[::1] b,
                      const cnp.uint8_t[:, ::1] Z, double ridge=0.0,
                      double tol=1e-10):
    """For every row ``z`` of ``Z`` return ``b_S' M^-1 b_S``, ``log det M`` and the rank.

    ``M = G[S, S] + ridge * I`` with ``S`` the accepted columns of ``z``.  A rank
    of -1 flags a factorization breakdown (only possible when ``ridge > 0``).
    """
    cdef Py_ssize_t m = Z.shape[0], p = Z.shape[1]
    if G.shape[0] != p or G.shape[1] != p or b.shape[0] != p:
        raise ValueError("Gram matrix, cross products and indicators disagree on p")
    cdef Py_ssize_t r, j, k, kmax = 0, cnt
    for r in range(m):
        cnt = 0
        for j in range(p):
            cnt += Z[r, j] != 0
        if cnt > kmax:
            kmax = cnt
    quad_out = np.zeros(m, dtype=np.float64)
    logdet_out = np.zeros(m, dtype=np.float64)
    rank_out = np.zeros(m, dtype=np.int64)
    cdef double[::1] qv = quad_out
    cdef double[::1] lv = logdet_out
    cdef cnp.int64_t[::1] rv = rank_out
    cdef Py_ssize_t ld = kmax if kmax > 0 else 1
    cdef double* L = <double*> malloc(ld * ld * sizeof(double))
    cdef double* w = <double*> malloc(ld * sizeof(double))
    cdef Py_ssize_t* cols = <Py_ssize_t*> malloc(ld * sizeof(Py_ssize_t))
    cdef double q, ld_acc, dq, dl
    cdef int status
    if L == NULL or w == NULL or cols == NULL:
        free(L); free(w); free(cols)
        raise MemoryError()
    try:
        with nogil:
            for r in range(m):
                k = 0
                q = 0.0
                ld_acc = 0.0
                for j in range(p):
                    if Z[r, j] == 0:
                        continue
                    status = _append(G, b, j, cols, k, L, ld, w, ridge, tol, &dq, &dl)
                    if status == 1:
                        q += dq
                        ld_acc += dl
                        k += 1
                    elif status < 0:
                        k = -1
                        break
                qv[r] = q
                lv[r] = ld_acc
                rv[r] = k
    finally:
        free(L); free(w); free(cols)
    return quad_out, logdet_out, rank_out


cdef struct _Search:
    Py_ssize_t ncand
    Py_ssize_t* cand
    Py_ssize_t* cols
    double* L
    Py_ssize_t ld
    double* w
    double yy
    double n
    double lam
    double tol
    double best
    Py_ssize_t best_k
    unsigned char* cur
    unsigned char* best_mask
    long long leaves


cdef bint _better(_Search* st, double val, Py_ssize_t ksel) noexcept nogil:
    cdef double scale = fabs(st.best)
    cdef Py_ssize_t i
    if scale < 1.0:
        scale = 1.0
    if st.best_k < 0 or val < st.best - 1e-12 * scale:
        return True
    if val > st.best + 1e-12 * scale:
        return False
    if ksel != st.best_k:
        return ksel < st.best_k
    for i in range(st.ncand):
        if st.cur[i] != st.best_mask[i]:
            return st.cur[i] > st.best_mask[i]
    return False


cdef void _dfs(const double[:, ::1] G, const double[::1] b, _Search* st,
               Py_ssize_t depth, Py_ssize_t kacc, Py_ssize_t ksel,
               double quad) noexcept nogil:
    cdef double rss, val, dq, dl, scale
    cdef int status
    cdef Py_ssize_t i
    scale = fabs(st.best)
    if scale < 1.0:
        scale = 1.0
    if st.best_k >= 0 and st.lam * ksel > st.best + 1e-12 * scale:
        return
    if depth == st.ncand:
        st.leaves += 1
        rss = st.yy - quad
        if rss < 0.0:
            rss = 0.0
        val = rss / st.n + st.lam * ksel
        if _better(st, val, ksel):
            st.best = val
            st.best_k = ksel
            for i in range(st.ncand):
                st.best_mask[i] = st.cur[i]
        return
    _dfs(G, b, st, depth + 1, kacc, ksel, quad)
    status = _append(G, b, st.cand[depth], st.cols, kacc, st.L, st.ld, st.w,
                     0.0, st.tol, &dq, &dl)
    st.cur[depth] = 1
    if status == 1:
        _dfs(G, b, st, depth + 1, kacc + 1, ksel + 1, quad + dq)
    else:
        _dfs(G, b, st, depth + 1, kacc, ksel + 1, quad)
    st.cur[depth] = 0


def best_subset_search(const double[:, ::1] G, const double[::1] b, double yy,
                       Py_ssize_t n, double lam, cand, fixed=(), double tol=1e-10):
    """Exhaustive minimization of ``rss(S)/n + lam * |S ∩ cand|`` over subsets of ``cand``.

    Columns in ``fixed`` are always in the model and carry no penalty.  Ties
    (relative 1e-12) go to the smaller subset, then to the lexicographically
    smaller sorted index tuple.  Returns ``(mask over cand, value, leaves)``.
    """
    cdef Py_ssize_t p = G.shape[0]
    cand_arr = np.ascontiguousarray(cand, dtype=np.intp)
    fixed_arr = np.ascontiguousarray(fixed, dtype=np.intp)
    cdef Py_ssize_t nc = cand_arr.shape[0], nf = fixed_arr.shape[0]
    cdef Py_ssize_t ld = nc + nf if nc + nf > 0 else 1
    cdef _Search st
    cdef Py_ssize_t i, kacc = 0
    cdef double quad = 0.0, dq, dl
    cdef int status
    cdef Py_ssize_t[::1] cv = cand_arr
    cdef Py_ssize_t[::1] fv = fixed_arr
    best_mask = np.zeros(nc, dtype=np.uint8)
    cur = np.zeros(nc, dtype=np.uint8)
    cdef unsigned char[::1] bm = best_mask
    cdef unsigned char[::1] cm = cur
    st.ncand = nc
    st.ld = ld
    st.L = <double*> malloc(ld * ld * sizeof(double))
    st.w = <double*> malloc(ld * sizeof(double))
    st.cols = <Py_ssize_t*> malloc(ld * sizeof(Py_ssize_t))
    st.cand = &cv[0] if nc > 0 else NULL
    st.yy = yy
    st.n = <double> n
    st.lam = lam
    st.tol = tol
    st.best = 0.0
    st.best_k = -1
    st.cur = &cm[0] if nc > 0 else NULL
    st.best_mask = &bm[0] if nc > 0 else NULL
    st.leaves = 0
    if st.L == NULL or st.w == NULL or st.cols == NULL:
        free(st.L); free(st.w); free(st.cols)
        raise MemoryError()
    try:
        for i in range(nf):
            if fv[i] < 0 or fv[i] >= p:
                raise IndexError("fixed column out of range")
            status = _append(G, b, fv[i], st.cols, kacc, st.L, ld, st.w, 0.0, tol, &dq, &dl)
            if status == 1:
                quad += dq
                kacc += 1
        for i in range(nc):
            if cv[i] < 0 or cv[i] >= p:
                raise IndexError("candidate column out of range")
        with nogil:
            _dfs(G, b, &st, 0, kacc, 0, quad)
    finally:
        free(st.L); free(st.w); free(st.cols)
    return best_mask, st.best, st.leaves
