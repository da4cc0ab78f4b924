# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sampler kernels. See ``_kernels_py`` for the reference versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, isfinite, INFINITY, NAN

cnp.import_array()


def conjugate_draw(const double[:, ::1] Z, const double[:, ::1] d2, double sigma2,
                   const double[:, ::1] eps, const double[:, ::1] inv_base):
    cdef Py_ssize_t n = Z.shape[0], T = Z.shape[1], i, j
    out = np.empty((n, T), dtype=np.float64)
    cdef double[:, ::1] theta = out
    cdef double w, t, ss = 0.0
    for i in range(n):
        for j in range(T):
            w = 1.0 / (1.0 + sigma2 / d2[i, j])
            t = w * Z[i, j] + sqrt(sigma2 * w) * eps[i, j]
            theta[i, j] = t
            ss += t * t * inv_base[i, j]
    return out, ss


cdef inline double _potential(double xi, double ss, double count, double power, double a) nogil:
    return 0.5 * ss * exp(-power * xi) + 0.5 * count * power * xi + exp(a * xi) - a * xi


cdef inline double _potential_grad(double xi, double ss, double count, double power, double a) nogil:
    return -0.5 * power * ss * exp(-power * xi) + 0.5 * count * power + a * exp(a * xi) - a


def log_scale_target(double xi, double ss, double count, double power, double a):
    cdef double u = _potential(xi, ss, count, power, a)
    if not isfinite(u):
        return -INFINITY, NAN
    return -u, -_potential_grad(xi, ss, count, power, a)


def hmc_transition(double xi, double ss, double count, double power, double a,
                   double step, int n_steps, double momentum, double log_u):
    cdef double h0, h1, x, p, log_ratio, accept_prob
    cdef int k
    h0 = _potential(xi, ss, count, power, a) + 0.5 * momentum * momentum
    x = xi
    p = momentum - 0.5 * step * _potential_grad(x, ss, count, power, a)
    for k in range(n_steps):
        x += step * p
        if k + 1 < n_steps:
            p -= step * _potential_grad(x, ss, count, power, a)
    p -= 0.5 * step * _potential_grad(x, ss, count, power, a)
    h1 = _potential(x, ss, count, power, a) + 0.5 * p * p
    if not (isfinite(h0) and isfinite(h1) and isfinite(x)):
        return xi, 0.0, False, False
    log_ratio = h0 - h1
    accept_prob = 1.0 if log_ratio >= 0 else exp(log_ratio)
    if log_u < log_ratio:
        return x, accept_prob, True, True
    return xi, accept_prob, False, True


def adaptive_walk(const double[:, ::1] table, int I, int J, const cnp.int64_t[::1] directions,
                  const double[::1] log_u, cnp.int64_t[:, ::1] counts):
    cdef Py_ssize_t n = table.shape[0], T = table.shape[1], s, steps = directions.shape[0]
    cdef int Ip, Jp, d
    cdef long accepted = 0
    for s in range(steps):
        d = directions[s]
        Ip = I
        Jp = J
        if d == 0:
            Ip = I + 1
        elif d == 1:
            Ip = I - 1
        elif d == 2:
            Jp = J + 1
        else:
            Jp = J - 1
        if 1 <= Ip <= n and 1 <= Jp <= T:
            if log_u[s] < table[Ip - 1, Jp - 1] - table[I - 1, J - 1]:
                I = Ip
                J = Jp
                accepted += 1
        counts[I - 1, J - 1] += 1
    return I, J, accepted
