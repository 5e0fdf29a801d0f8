# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled soft-DTW and Contrastive-IDM kernels.

Mirrors ``_fallback`` function for function; results agree with it to
rounding (the loops run in the same order).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef inline double _softmin3(double a, double b, double c, double gamma) noexcept nogil:
    cdef double m = a
    if b < m:
        m = b
    if c < m:
        m = c
    cdef double s = exp(-(a - m) / gamma) + exp(-(b - m) / gamma) + exp(-(c - m) / gamma)
    return m - gamma * log(s)


def softmin3(double a, double b, double c, double gamma):
    if a == INFINITY and b == INFINITY and c == INFINITY:
        raise ValueError("softmin3: all three inputs are +inf")
    return _softmin3(a, b, c, gamma)


cdef void _forward(const double[:, ::1] D, double[:, ::1] R, double gamma) noexcept nogil:
    cdef Py_ssize_t m = D.shape[0], n = D.shape[1], i, j
    for i in range(m + 1):
        for j in range(n + 1):
            R[i, j] = INFINITY
    R[0, 0] = 0.0
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            R[i, j] = D[i - 1, j - 1] + _softmin3(R[i - 1, j - 1], R[i - 1, j], R[i, j - 1], gamma)


cdef void _backward(const double[:, ::1] D, const double[:, ::1] R, double[:, ::1] Rp,
                    double[:, ::1] Ep, double gamma) noexcept nogil:
    # Rp, Ep are (m+2) x (n+2) scratch tables
    cdef Py_ssize_t m = D.shape[0], n = D.shape[1], i, j
    cdef double r, a, b, c, da, db, dc
    for i in range(m + 2):
        for j in range(n + 2):
            Rp[i, j] = -INFINITY
            Ep[i, j] = 0.0
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            Rp[i, j] = R[i, j]
    Rp[m + 1, n + 1] = R[m, n]
    Ep[m + 1, n + 1] = 1.0
    for i in range(m, 0, -1):
        for j in range(n, 0, -1):
            r = Rp[i, j]
            da = D[i, j - 1] if i < m else 0.0
            db = D[i - 1, j] if j < n else 0.0
            dc = D[i, j] if (i < m and j < n) else 0.0
            a = exp((Rp[i + 1, j] - r - da) / gamma)
            b = exp((Rp[i, j + 1] - r - db) / gamma)
            c = exp((Rp[i + 1, j + 1] - r - dc) / gamma)
            Ep[i, j] = a * Ep[i + 1, j] + b * Ep[i, j + 1] + c * Ep[i + 1, j + 1]


def sdtw_forward(const double[:, ::1] D, double gamma):
    cdef Py_ssize_t m = D.shape[0], n = D.shape[1]
    R = np.empty((m + 1, n + 1))
    cdef double[:, ::1] Rv = R
    with nogil:
        _forward(D, Rv, gamma)
    return R


def sdtw_backward(const double[:, ::1] D, const double[:, ::1] R, double gamma):
    cdef Py_ssize_t m = D.shape[0], n = D.shape[1]
    if R.shape[0] != m + 1 or R.shape[1] != n + 1:
        raise ValueError(f"DP table shape ({R.shape[0]}, {R.shape[1]}) does not match cost matrix ({m}, {n})")
    Rp = np.empty((m + 2, n + 2))
    Ep = np.empty((m + 2, n + 2))
    cdef double[:, ::1] Rpv = Rp, Epv = Ep
    with nogil:
        _backward(D, R, Rpv, Epv, gamma)
    return Ep[1 : m + 1, 1 : n + 1].copy()


def dtw_table(const double[:, ::1] D):
    cdef Py_ssize_t m = D.shape[0], n = D.shape[1], i, j
    C = np.full((m + 1, n + 1), np.inf)
    cdef double[:, ::1] Cv = C
    cdef double best
    Cv[0, 0] = 0.0
    with nogil:
        for i in range(1, m + 1):
            for j in range(1, n + 1):
                best = Cv[i - 1, j - 1]
                if Cv[i - 1, j] < best:
                    best = Cv[i - 1, j]
                if Cv[i, j - 1] < best:
                    best = Cv[i, j - 1]
                Cv[i, j] = D[i - 1, j - 1] + best
    return C


cdef void _pairwise_cost(const double[:, ::1] X, const double[:, ::1] Y, double[:, ::1] D,
                         int metric) noexcept nogil:
    cdef Py_ssize_t m = X.shape[0], n = Y.shape[0], d = X.shape[1], i, j, k
    cdef double acc, t
    for i in range(m):
        for j in range(n):
            acc = 0.0
            if metric == 0:
                for k in range(d):
                    t = X[i, k] - Y[j, k]
                    acc += t * t
                D[i, j] = acc
            else:
                for k in range(d):
                    acc += X[i, k] * Y[j, k]
                D[i, j] = 2.0 - 2.0 * acc


def pairwise_cost(const double[:, ::1] X, const double[:, ::1] Y, int metric):
    D = np.empty((X.shape[0], Y.shape[0]))
    cdef double[:, ::1] Dv = D
    with nogil:
        _pairwise_cost(X, Y, Dv, metric)
    return D


def sdtw_value_grad(const double[:, ::1] X, const double[:, ::1] Y, double gamma, int metric=0):
    """Fused cost + forward + backward + input gradients for one pair."""
    cdef Py_ssize_t m = X.shape[0], n = Y.shape[0], d = X.shape[1], i, j, k
    if Y.shape[1] != d:
        raise ValueError(f"dimension mismatch: {d} vs {Y.shape[1]}")
    D = np.empty((m, n))
    R = np.empty((m + 1, n + 1))
    Rp = np.empty((m + 2, n + 2))
    Ep = np.empty((m + 2, n + 2))
    gx = np.zeros((m, d))
    gy = np.zeros((n, d))
    cdef double[:, ::1] Dv = D, Rv = R, Rpv = Rp, Epv = Ep, gxv = gx, gyv = gy
    cdef double e, t
    with nogil:
        _pairwise_cost(X, Y, Dv, metric)
        _forward(Dv, Rv, gamma)
        _backward(Dv, Rv, Rpv, Epv, gamma)
        for i in range(m):
            for j in range(n):
                e = Epv[i + 1, j + 1]
                if e == 0.0:
                    continue
                if metric == 0:
                    for k in range(d):
                        t = 2.0 * e * (X[i, k] - Y[j, k])
                        gxv[i, k] += t
                        gyv[j, k] -= t
                else:
                    for k in range(d):
                        gxv[i, k] -= 2.0 * e * Y[j, k]
                        gyv[j, k] -= 2.0 * e * X[i, k]
    E = Ep[1 : m + 1, 1 : n + 1].copy()
    return float(R[m, n]), R, E, gx, gy


def cidm(const double[:, ::1] X, long sigma, double margin):
    """Contrastive-IDM value and gradient for window ``sigma``."""
    cdef Py_ssize_t m = X.shape[0], d = X.shape[1], i, j, k
    grad = np.zeros((m, d))
    cdef double[:, ::1] g = grad
    cdef double value = 0.0, dist, t, w, coef
    cdef long gap
    with nogil:
        for i in range(m):
            for j in range(m):
                if i == j:
                    continue
                dist = 0.0
                for k in range(d):
                    t = X[i, k] - X[j, k]
                    dist += t * t
                gap = i - j if i > j else j - i
                w = <double>(gap * gap) + 1.0
                if gap >= sigma:
                    if margin - dist > 0.0:
                        value += w * (margin - dist)
                        coef = -w
                    else:
                        continue
                else:
                    value += dist / w
                    coef = 1.0 / w
                # (i, j) and (j, i) terms are visited separately; each adds
                # coef * dD(i,j)/dx to both endpoints
                for k in range(d):
                    t = 2.0 * coef * (X[i, k] - X[j, k])
                    g[i, k] += t
                    g[j, k] -= t
    return value, grad
