"""Pinsker's linear minimax filter for the Sobolev-type ellipsoid, and empirical rate checks.

The canonical sequence model is ``Z_ij = theta_ij + N(0, 1)`` with loss
``n**-1 * sum (theta_hat - theta)**2`` and parameter set
``sum_ij b_ij**2 theta_ij**2 <= n Q**2`` where ``b_ij = i**(beta / r) * j**gamma``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .posterior import SmoothnessSpec, conjugate_posterior
from .seeding import derive_seed
from .uncertainty import boundary_truth, canonical_prior_variances, coverage_scale

MAX_TEMPORAL_TERMS = 50_000_000


@dataclass(frozen=True)
class PinskerFilter:
    """Weights ``(1 - delta * b_ij)_+`` on an ``n x T`` grid."""

    delta: float
    weights: np.ndarray
    active_set_size: int

    @property
    def shape(self):
        return self.weights.shape


def pinsker_b(spec: SmoothnessSpec, n: int, T: int) -> np.ndarray:
    i = np.arange(1, n + 1, dtype=float)
    j = np.arange(1, T + 1, dtype=float)
    return np.outer(i ** (spec.beta / spec.r), j**spec.gamma)


def _check(spec: SmoothnessSpec, n: int):
    if n < 1:
        raise ValidationError("n must be >= 1")
    if not spec.Q > 0:
        raise ValidationError("Q must be positive")


class _RowSums:
    """Cached prefix sums of ``j**gamma`` and ``j**(2 gamma)``."""

    def __init__(self, gamma: float):
        self.gamma = gamma
        self.s1 = np.zeros(1)
        self.s2 = np.zeros(1)

    def ensure(self, J: int):
        if J < self.s1.size:
            return
        if J > MAX_TEMPORAL_TERMS:
            raise NumericalError(f"Pinsker active set needs {J} temporal terms; delta too small")
        size = max(J + 1, 2 * self.s1.size)
        j = np.arange(1, size, dtype=float)
        self.s1 = np.concatenate(([0.0], np.cumsum(j**self.gamma)))
        self.s2 = np.concatenate(([0.0], np.cumsum(j ** (2 * self.gamma))))


def _active_counts(spec, n, delta):
    """Per-row number of temporal indices with ``b_ij < 1 / delta``."""
    bi = np.arange(1, n + 1, dtype=float) ** (spec.beta / spec.r)
    x = (1.0 / (delta * bi)) ** (1.0 / spec.gamma)
    J = np.ceil(x).astype(np.int64) - 1
    # guard the boundary where x is (numerically) an integer
    J = np.where(bi * (J + 1.0) ** spec.gamma < 1.0 / delta, J + 1, J)
    J = np.where((J >= 1) & (bi * J.astype(float) ** spec.gamma >= 1.0 / delta), J - 1, J)
    return bi, np.maximum(J, 0)


def _sums(spec, n, delta, cache):
    bi, J = _active_counts(spec, n, delta)
    cache.ensure(int(J.max()))
    sb = float(np.sum(bi * cache.s1[J]))
    sb2 = float(np.sum(bi**2 * cache.s2[J]))
    return sb, sb2, int(J.sum())


def pinsker_equation(spec: SmoothnessSpec, n: int, delta: float, cache=None) -> float:
    """Left side of the defining equation ``delta**-1 n**-1 sum b_ij (1 - delta b_ij)_+``."""
    cache = cache or _RowSums(spec.gamma)
    sb, sb2, _ = _sums(spec, n, delta, cache)
    return (sb - delta * sb2) / (delta * n)


def solve_pinsker_delta(spec: SmoothnessSpec, n: int, rtol: float = 1e-10) -> float:
    """Root ``delta`` of ``delta**-1 n**-1 sum_ij b_ij (1 - delta b_ij)_+ = Q**2``.

    The sum over ``j`` is infinite in principle but only indices with
    ``b_ij < 1 / delta`` contribute, so each row is summed in closed form
    from prefix sums. Bisection brackets the root; the active set then gives
    it exactly as ``sum_D b / (n Q**2 + sum_D b**2)``.
    """
    _check(spec, n)
    Q2 = spec.Q**2
    cache = _RowSums(spec.gamma)
    hi = 1.0  # b_11 = 1, so the map vanishes at delta = 1
    lo = 0.5
    while pinsker_equation(spec, n, lo, cache) <= Q2:
        hi = lo
        lo *= 0.5
        if lo < 1e-300:
            raise NumericalError("could not bracket the Pinsker root")
    while (hi - lo) > rtol * hi:
        mid = 0.5 * (lo + hi)
        if pinsker_equation(spec, n, mid, cache) > Q2:
            lo = mid
        else:
            hi = mid
    delta = 0.5 * (lo + hi)
    for _ in range(20):
        sb, sb2, _ = _sums(spec, n, delta, cache)
        new = sb / (n * Q2 + sb2)
        if new == delta:
            break
        _, _, k_old = _sums(spec, n, delta, cache)
        _, _, k_new = _sums(spec, n, new, cache)
        delta = new
        if k_old == k_new:
            break
    return float(delta)


def solve_delta_from_b(b, n_norm: float, Q: float = 1.0) -> float:
    """Root of ``delta**-1 n_norm**-1 sum b (1 - delta b)_+ = Q**2`` for a finite array ``b``.

    Handles degenerate grids such as a single entry ``b = 1``, where the
    root is ``1 / (1 + Q**2)``.
    """
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if b.size == 0 or np.any(b <= 0):
        raise ValidationError("b must be a non-empty positive array")
    if not Q > 0:
        raise ValidationError("Q must be positive")
    target = n_norm * Q**2
    cb, cb2 = np.cumsum(b), np.cumsum(b * b)
    # the active set is a prefix of the sorted b; try each size k
    for k in range(b.size, 0, -1):
        delta = cb[k - 1] / (target + cb2[k - 1])
        upper = 1.0 / b[k - 1]
        lower = 1.0 / b[k] if k < b.size else 0.0
        if lower <= delta < upper:
            return float(delta)
    raise NumericalError("no consistent active set for the Pinsker equation")


def pinsker_filter(spec: SmoothnessSpec, n: int, T: int | None = None, delta: float | None = None) -> PinskerFilter:
    """Pinsker weights on ``n x T``; ``T`` defaults to the widest active row."""
    if delta is None:
        delta = solve_pinsker_delta(spec, n)
    _, J = _active_counts(spec, n, delta)
    if T is None:
        T = max(1, int(J.max()))
    w = np.clip(1.0 - delta * pinsker_b(spec, n, T), 0.0, None)
    return PinskerFilter(delta=float(delta), weights=w, active_set_size=int(J.sum()))


def pinsker_estimate(Z, f: PinskerFilter) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.shape != f.weights.shape:
        raise ValidationError(f"Z shape {Z.shape} does not match filter shape {f.weights.shape}")
    return f.weights * Z


def linear_risk(weights, theta, norm: float) -> float:
    """Exact risk ``norm**-1 sum ((1 - l)**2 theta**2 + l**2)`` under unit noise."""
    l = np.asarray(weights, dtype=float)
    th = np.asarray(theta, dtype=float)
    if l.shape != th.shape:
        raise ValidationError("weights and theta shapes differ")
    return float(np.sum((1 - l) ** 2 * th**2 + l**2) / norm)


def max_linear_risk(weights, spec: SmoothnessSpec, n: int) -> float:
    """Worst-case risk of diagonal weights over the ellipsoid, in closed form.

    Weights outside the grid are zero; the largest outside ratio sits just
    past the last column (or the last row when the grid has fewer than
    ``n`` rows).
    """
    l = np.asarray(weights, dtype=float)
    N, T = l.shape
    if N > n:
        raise ValidationError("weights have more rows than nodes")
    rows = N + 1 if N < n else N
    a = pinsker_b(spec, rows, T + 1) ** 2
    bias = np.ones((rows, T + 1))
    bias[:N, :T] = (1 - l) ** 2
    return float(np.sum(l**2) / n + spec.Q**2 * np.max(bias / a))


def least_favorable_profile(spec: SmoothnessSpec, n: int, T: int, delta: float) -> np.ndarray:
    """Coefficient variances ``(1 / (delta b) - 1)_+`` of the least-favourable Gaussian prior."""
    return np.clip(1.0 / (delta * pinsker_b(spec, n, T)) - 1.0, 0.0, None)


@dataclass(frozen=True)
class RateReport:
    estimator: str
    n_values: tuple
    mean_risk: tuple
    se: tuple
    fitted_slope: float
    theoretical_slope: float

    def rows(self):
        for n, m, s in zip(self.n_values, self.mean_risk, self.se):
            yield n, m, s

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "fitted_slope": self.fitted_slope,
            "theoretical_slope": self.theoretical_slope,
        }

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.mean_risk, self.mean_risk[1:]))


def theoretical_rate_slope(spec: SmoothnessSpec) -> float:
    """Squared-risk exponent ``-2 beta gamma / (2 beta gamma + beta + r gamma)``."""
    b, g, r = spec.beta, spec.gamma, spec.r
    return -2 * b * g / (2 * b * g + b + r * g)


def empirical_rate_exponent(
    spec: SmoothnessSpec,
    n_values=(64, 128, 256, 512),
    replications: int = 500,
    seed: int = 0,
    estimator: str = "pinsker",
) -> RateReport:
    """Fit the log-risk slope in ``n`` at least-favourable boundary truths.

    Truths have Gaussian coefficients with the least-favourable profile,
    rescaled onto the ellipsoid boundary. ``estimator="bayes"`` uses the
    conjugate posterior mean under the index prior with the coverage scale
    ``c_n`` (see :func:`coverage_scale`).
    """
    if len(n_values) < 3:
        raise ValidationError("need at least three values of n")
    if estimator not in ("pinsker", "bayes"):
        raise ValidationError(f"unknown estimator {estimator!r}")
    means, ses = [], []
    for k, n in enumerate(n_values):
        f = pinsker_filter(spec, n)
        T = f.weights.shape[1] + 1
        f = pinsker_filter(spec, n, T, f.delta)
        prof = least_favorable_profile(spec, n, T, f.delta)
        if estimator == "bayes":
            d2 = canonical_prior_variances(spec, coverage_scale(n, spec), n, T)
        losses = []
        for rep in range(replications):
            rng = np.random.default_rng(derive_seed(seed, k, rep))
            theta = boundary_truth(spec, n, T, rng, support=prof)
            Z = theta + rng.standard_normal(theta.shape)
            est = pinsker_estimate(Z, f) if estimator == "pinsker" else conjugate_posterior(Z, d2).mean
            losses.append(float(np.sum((est - theta) ** 2) / n))
        losses = np.asarray(losses)
        means.append(float(losses.mean()))
        ses.append(float(losses.std(ddof=1) / math.sqrt(replications)) if replications > 1 else float("nan"))
    slope = float(np.polyfit(np.log(n_values), np.log(means), 1)[0])
    return RateReport(
        estimator=estimator,
        n_values=tuple(int(n) for n in n_values),
        mean_risk=tuple(means),
        se=tuple(ses),
        fitted_slope=slope,
        theoretical_slope=theoretical_rate_slope(spec),
    )
