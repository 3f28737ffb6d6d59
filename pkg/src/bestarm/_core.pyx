# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: the Dinkelbach SNR solve and the projected
subgradient descent loop. Mirrors `_pykernels` one-for-one; tests assert
parity between the two backends."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, sqrt
from libc.stdlib cimport free, malloc

cnp.import_array()

cdef double EXP_CLIP = 500.0
cdef double DEGENERATE_QUAD = 1e-14
cdef double SNR_CAP = 1e9
cdef double ARMIJO = 1e-4


cdef void _proj_simplex(double* v, double* scratch, int m) noexcept nogil:
    """Euclidean projection onto the probability simplex (in place)."""
    cdef int i, j
    cdef double key, cum, tau
    for i in range(m):
        scratch[i] = v[i]
    for i in range(1, m):  # insertion sort, descending; m is tiny
        key = scratch[i]
        j = i - 1
        while j >= 0 and scratch[j] < key:
            scratch[j + 1] = scratch[j]
            j -= 1
        scratch[j + 1] = key
    cum = 0.0
    tau = 0.0
    for i in range(m):
        cum += scratch[i]
        if scratch[i] * (i + 1) > cum - 1.0:
            tau = (cum - 1.0) / (i + 1)
    for i in range(m):
        v[i] -= tau
        if v[i] < 0.0:
            v[i] = 0.0


cdef double _quad(double* g, double* dtt, double* da, double daa, int m) noexcept nogil:
    cdef int i, j
    cdef double acc = daa
    for i in range(m):
        acc -= 2.0 * da[i] * g[i]
        for j in range(m):
            acc += g[i] * dtt[i * m + j] * g[j]
    return acc


cdef double _dot(double* a, double* b, int m) noexcept nogil:
    cdef int i
    cdef double acc = 0.0
    for i in range(m):
        acc += a[i] * b[i]
    return acc


cdef double _ascend(double* c, double* dtt, double* da, double daa,
                    double* g, double lam, int m, int max_inner,
                    double* work) noexcept nogil:
    """Projected gradient ascent on c.g - lam*sqrt(Q(g)); returns final Q."""
    cdef double* grad = work
    cdef double* cand = work + m
    cdef double* scratch = work + 2 * m
    cdef int it, i
    cdef double q, qc, s_cur, s_new, eta, move, gmax, root, lin
    cdef bint accepted

    q = _quad(g, dtt, da, daa, m)
    s_cur = _dot(c, g, m) - lam * sqrt(q if q > 0.0 else 0.0)
    eta = 1.0
    for it in range(max_inner):
        if q <= DEGENERATE_QUAD:
            return q
        root = sqrt(q)
        for i in range(m):
            grad[i] = c[i] - lam * (_dot(dtt + i * m, g, m) - da[i]) / root
        accepted = False
        qc = q
        s_new = s_cur
        while eta > 1e-16:
            for i in range(m):
                cand[i] = g[i] + eta * grad[i]
            _proj_simplex(cand, scratch, m)
            qc = _quad(cand, dtt, da, daa, m)
            s_new = _dot(c, cand, m) - lam * sqrt(qc if qc > 0.0 else 0.0)
            lin = 0.0
            for i in range(m):
                lin += grad[i] * (cand[i] - g[i])
            if s_new >= s_cur + ARMIJO * lin:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
        move = 0.0
        gmax = 0.0
        for i in range(m):
            if fabs(cand[i] - g[i]) > move:
                move = fabs(cand[i] - g[i])
            g[i] = cand[i]
            if fabs(g[i]) > gmax:
                gmax = fabs(g[i])
        q = qc
        s_cur = s_new
        eta = eta * 2.0 if eta * 2.0 < 1e8 else 1e8
        if move < 1e-13 * (1.0 + gmax):
            break
    return q


cdef int _dinkelbach(double* mu, double* denom, int k, int arm,
                     double* gamma, double tol, int max_outer, int max_inner,
                     double* out_val, int* out_outer,
                     double* work) noexcept nogil:
    """Outer ratio iteration; gamma holds the simplex point (length k-1).

    Returns 0 on success, 1 when the quadratic form degenerates or the
    ratio diverges. ``work`` needs 2*(k-1) + (k-1)^2 + 3*(k-1) doubles.
    """
    cdef int m = k - 1
    cdef double* c = work
    cdef double* da = work + m
    cdef double* dtt = work + 2 * m
    cdef double* inner_work = work + 2 * m + m * m
    cdef int i, j, bi, bj, outer
    cdef double daa, q, lam, val, s

    bi = 0
    for i in range(k):
        if i == arm:
            continue
        c[bi] = mu[i] - mu[arm]
        da[bi] = denom[i * k + arm]
        bj = 0
        for j in range(k):
            if j == arm:
                continue
            dtt[bi * m + bj] = denom[i * k + j]
            bj += 1
        bi += 1
    daa = denom[arm * k + arm]

    if m == 1:
        gamma[0] = 1.0
        q = _quad(gamma, dtt, da, daa, m)
        if q <= DEGENERATE_QUAD:
            return 1
        out_val[0] = c[0] / sqrt(q)
        out_outer[0] = 0
        return 0

    q = _quad(gamma, dtt, da, daa, m)
    if q <= DEGENERATE_QUAD:
        for i in range(m):
            gamma[i] += 1e-3
        _proj_simplex(gamma, inner_work, m)
        q = _quad(gamma, dtt, da, daa, m)
        if q <= DEGENERATE_QUAD:
            return 1
    lam = _dot(c, gamma, m) / sqrt(q)
    if lam < 0.0:
        lam = 0.0
    val = lam
    outer = 0
    for outer in range(1, max_outer + 1):
        q = _ascend(c, dtt, da, daa, gamma, lam, m, max_inner, inner_work)
        if q <= DEGENERATE_QUAD:
            return 1
        val = _dot(c, gamma, m) / sqrt(q)
        if val > SNR_CAP:
            return 1
        if fabs(val - lam) <= tol * (1.0 if fabs(val) < 1.0 else fabs(val)):
            break
        lam = val
    s = 0.0
    for i in range(m):
        s += gamma[i]
    if s > 0.0:
        for i in range(m):
            gamma[i] /= s
    out_val[0] = val
    out_outer[0] = outer
    return 0


def snr_dinkelbach(cnp.ndarray[double, ndim=1] mu,
                   cnp.ndarray[double, ndim=2] denom,
                   int arm, gamma0, double tol, int max_outer):
    cdef int k = mu.shape[0]
    cdef int m = k - 1
    cdef int max_inner = 400
    cdef cnp.ndarray[double, ndim=1] gamma = np.full(m, 1.0 / m)
    cdef cnp.ndarray[double, ndim=1] g0
    cdef double total
    if gamma0 is not None:
        g0 = np.ascontiguousarray(gamma0, dtype=np.float64)
        if g0.shape[0] == m and float(np.min(g0)) >= 0.0:
            total = float(np.sum(g0))
            if total > 0.0:
                gamma = g0 / total
    cdef cnp.ndarray[double, ndim=1] work = np.empty(2 * m + m * m + 3 * m)
    cdef double val = 0.0
    cdef int outer = 0
    cdef int status = _dinkelbach(&mu[0], &denom[0, 0], k, arm, &gamma[0],
                                  tol, max_outer, max_inner, &val, &outer, &work[0])
    cdef cnp.ndarray[double, ndim=1] w = np.empty(k)
    cdef int i, bi = 0
    for i in range(k):
        if i == arm:
            w[i] = -1.0
        else:
            w[i] = gamma[bi]
            bi += 1
    return status, w, val, outer


cdef double _clipped_exp(double x) noexcept nogil:
    if x > EXP_CLIP:
        x = EXP_CLIP
    elif x < -EXP_CLIP:
        x = -EXP_CLIP
    return exp(x)


def psgd_minimize(cnp.ndarray[double, ndim=1] mu,
                  cnp.ndarray[double, ndim=2] vgeo,
                  cnp.ndarray[double, ndim=2] ltilde,
                  cnp.ndarray[double, ndim=1] theta0,
                  double box, int n_iters,
                  double active_tol, double snr_tol, int snr_max_outer,
                  targets=None):
    """Projected subgradient descent on the worst-arm squared inverse SNR;
    mirrors _pykernels.psgd_minimize."""
    cdef int k = mu.shape[0]
    cdef int m = k - 1
    cdef int max_inner = 400
    cdef cnp.ndarray[double, ndim=1] theta = theta0.copy()
    theta[m] = 0.0
    cdef int i, j, a, n, outer, status, bi
    for i in range(m):
        if theta[i] > box:
            theta[i] = box
        elif theta[i] < -box:
            theta[i] = -box

    cdef double top = mu[0]
    for i in range(1, k):
        if mu[i] > top:
            top = mu[i]
    eligible = range(k) if targets is None else [int(a) for a in targets]
    cdef list subopt_list = [i for i in eligible if mu[i] < top]
    cdef int n_sub = len(subopt_list)
    if n_sub == 0 or n_iters <= 0:
        return 0, theta, np.inf

    cdef cnp.ndarray[int, ndim=1] subopt = np.array(subopt_list, dtype=np.intc)
    cdef cnp.ndarray[double, ndim=2] warm = np.full((n_sub, m), 1.0 / m)
    cdef cnp.ndarray[double, ndim=2] wmat = np.empty((n_sub, k))
    cdef cnp.ndarray[double, ndim=1] fvals = np.empty(n_sub)
    cdef cnp.ndarray[double, ndim=2] dmat = np.empty((k, k))
    cdef cnp.ndarray[double, ndim=2] emat = np.empty((k, k))
    cdef cnp.ndarray[double, ndim=1] dvec = np.empty(m)
    cdef cnp.ndarray[double, ndim=1] best_theta = theta.copy()
    cdef cnp.ndarray[double, ndim=1] work = np.empty(2 * m + m * m + 3 * m)
    cdef double best_g = np.inf
    cdef double val, g_cur, ediag, den, norm, w_b, w_c, acc
    cdef int n_active

    for n in range(1, n_iters + 1):
        # pairwise tilt factors and the tilt-weighted variance diagonal
        for i in range(k):
            for j in range(k):
                emat[i, j] = _clipped_exp(theta[i] - theta[j])
        for j in range(k):
            ediag = 0.0
            for i in range(k):
                ediag += vgeo[i, j] * emat[i, j]
            for i in range(k):
                dmat[i, j] = ltilde[i, j]
            dmat[j, j] += ediag

        g_cur = -np.inf
        for a in range(n_sub):
            status = _dinkelbach(&mu[0], &dmat[0, 0], k, subopt[a], &warm[a, 0],
                                 snr_tol, snr_max_outer, max_inner,
                                 &val, &outer, &work[0])
            if status != 0:
                return 1, theta, np.inf
            bi = 0
            for i in range(k):
                if i == subopt[a]:
                    wmat[a, i] = -1.0
                else:
                    wmat[a, i] = warm[a, bi]
                    bi += 1
            fvals[a] = 1.0 / (val * val)
            if fvals[a] > g_cur:
                g_cur = fvals[a]

        if g_cur < best_g:
            best_g = g_cur
            for i in range(k):
                best_theta[i] = theta[i]

        # averaged gradient over the active arms
        for i in range(m):
            dvec[i] = 0.0
        n_active = 0
        for a in range(n_sub):
            if fvals[a] < g_cur * (1.0 - active_tol):
                continue
            n_active += 1
            den = 0.0
            for i in range(k):
                den += wmat[a, i] * mu[i]
            den = den * den
            for j in range(m):
                acc = 0.0
                w_c = wmat[a, j]
                for i in range(k):
                    w_b = wmat[a, i]
                    acc += vgeo[i, j] * (w_b * w_b * emat[j, i] - w_c * w_c * emat[i, j])
                dvec[j] += acc / den
        norm = 0.0
        for i in range(m):
            dvec[i] /= n_active
            norm += dvec[i] * dvec[i]
        norm = sqrt(norm)
        if norm == 0.0:
            break
        for i in range(m):
            theta[i] -= dvec[i] / (n * norm)
            if theta[i] > box:
                theta[i] = box
            elif theta[i] < -box:
                theta[i] = -box

    return 0, best_theta, best_g
