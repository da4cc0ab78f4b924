"""Pure-Python implementations of the sampler kernels.

These mirror ``_kernels_ext.pyx`` operation for operation and consume the
same pre-drawn random numbers, so either backend can drive a chain.
"""
import math

import numpy as np


def conjugate_draw(Z, d2, sigma2, eps, inv_base):
    """Draw ``theta ~ N(w Z, sigma2 w)`` with ``w = d2 / (d2 + sigma2)``.

    Returns the draw and ``sum(theta**2 * inv_base)``.
    """
    with np.errstate(divide="ignore"):
        w = 1.0 / (1.0 + sigma2 / d2)
    theta = w * Z + np.sqrt(sigma2 * w) * eps
    ss = float(np.sum(theta * theta * inv_base))
    return theta, ss


def _potential(xi, ss, count, power, a):
    return 0.5 * ss * math.exp(-power * xi) + 0.5 * count * power * xi + math.exp(a * xi) - a * xi


def _potential_grad(xi, ss, count, power, a):
    return -0.5 * power * ss * math.exp(-power * xi) + 0.5 * count * power + a * math.exp(a * xi) - a


def log_scale_target(xi, ss, count, power, a):
    """Log density (up to a constant) of ``xi = log c`` and its derivative."""
    try:
        return -_potential(xi, ss, count, power, a), -_potential_grad(xi, ss, count, power, a)
    except OverflowError:
        return -math.inf, math.nan


def hmc_transition(xi, ss, count, power, a, step, n_steps, momentum, log_u):
    """One leapfrog HMC transition on ``xi``.

    Returns ``(xi_new, accept_prob, accepted, finite)``.
    """
    try:
        h0 = _potential(xi, ss, count, power, a) + 0.5 * momentum * momentum
        x = xi
        p = momentum - 0.5 * step * _potential_grad(x, ss, count, power, a)
        for k in range(n_steps):
            x += step * p
            if k + 1 < n_steps:
                p -= step * _potential_grad(x, ss, count, power, a)
        p -= 0.5 * step * _potential_grad(x, ss, count, power, a)
        h1 = _potential(x, ss, count, power, a) + 0.5 * p * p
    except OverflowError:
        return xi, 0.0, False, False
    if not (math.isfinite(h1) and math.isfinite(x)):
        return xi, 0.0, False, False
    log_ratio = h0 - h1
    accept_prob = 1.0 if log_ratio >= 0 else math.exp(log_ratio)
    if log_u < log_ratio:
        return x, accept_prob, True, True
    return xi, accept_prob, False, True


_MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1))


def adaptive_walk(table, I, J, directions, log_u, counts):
    """Metropolis walk on the truncation grid ``(I, J)``.

    ``table[I-1, J-1]`` is the log target. Each step proposes one of the four
    unit neighbours; proposals off the grid are rejected. ``counts`` is
    incremented in place at the state held after every step.
    Returns ``(I, J, n_accepted)``.
    """
    n, T = table.shape
    accepted = 0
    for s in range(len(directions)):
        di, dj = _MOVES[directions[s]]
        Ip, Jp = I + di, J + dj
        if 1 <= Ip <= n and 1 <= Jp <= T:
            if log_u[s] < table[Ip - 1, Jp - 1] - table[I - 1, J - 1]:
                I, J = Ip, Jp
                accepted += 1
        counts[I - 1, J - 1] += 1
    return I, J, accepted
