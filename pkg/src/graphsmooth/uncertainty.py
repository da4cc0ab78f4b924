"""Credible balls, equal-tail intervals, inflation and coverage experiments."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .posterior import PosteriorField, SmoothnessSpec, conjugate_posterior, sobolev_weights
from .seeding import derive_seed


@dataclass(frozen=True)
class CredibleBall:
    """Ball ``{theta : normalizer * ||theta - center||^2 <= K * q_tau}``."""

    center: np.ndarray
    q_tau: float
    tau: float
    inflation_K: float = 1.0
    normalizer: float = 1.0

    @property
    def radius2(self) -> float:
        return self.inflation_K * self.q_tau

    def contains(self, theta) -> bool:
        d = np.asarray(theta, dtype=float) - self.center
        return bool(self.normalizer * float(np.sum(d * d)) <= self.radius2)


def _variances(pf_or_var) -> np.ndarray:
    v = pf_or_var.variance if isinstance(pf_or_var, PosteriorField) else pf_or_var
    return np.asarray(v, dtype=float).ravel()


def credible_ball_radius(
    pf,
    tau: float = 0.05,
    mc_draws: int = 100_000,
    seed: int = 0,
    normalizer: float = 1.0,
    tail_rtol: float = 0.0,
    chunk: int = 4_000_000,
) -> float:
    """Upper ``tau`` quantile of ``normalizer * sum_ij v_ij chi2_1``.

    The law of ``||theta - posterior mean||^2`` under the conjugate posterior
    is a weighted sum of independent chi-square(1) variables with the
    posterior variances ``v_ij`` as weights; its quantile is estimated by
    Monte Carlo. Weights below ``tail_rtol * max(v)`` are pooled into a
    normal term with matching mean and variance.
    """
    if not 0 < tau < 1:
        raise ValidationError("tau must lie in (0, 1)")
    v = _variances(pf)
    v = v[v > 0]
    if v.size == 0:
        return 0.0
    pooled_mean = pooled_var = 0.0
    if tail_rtol > 0:
        small = v < tail_rtol * v.max()
        pooled_mean = float(v[small].sum())
        pooled_var = float(2 * np.sum(v[small] ** 2))
        v = v[~small]
    rng = np.random.default_rng(seed)
    per = max(1, chunk // max(v.size, 1))
    out = np.empty(mc_draws)
    for start in range(0, mc_draws, per):
        m = min(per, mc_draws - start)
        x = rng.standard_normal((m, v.size))
        out[start : start + m] = (x * x) @ v
    if pooled_var > 0:
        out += pooled_mean + math.sqrt(pooled_var) * rng.standard_normal(mc_draws)
    else:
        out += pooled_mean
    return float(normalizer * np.quantile(out, 1 - tau))


def credible_ball(pf: PosteriorField, tau=0.05, mc_draws=100_000, seed=0, normalizer=1.0, **kw) -> CredibleBall:
    q = credible_ball_radius(pf, tau, mc_draws, seed, normalizer, **kw)
    return CredibleBall(center=pf.mean, q_tau=q, tau=tau, normalizer=normalizer)


def default_inflation(n: int) -> float:
    """Inflation factor ``0.8 log n``."""
    return 0.8 * math.log(n)


def inflate(ball: CredibleBall, K: float | None = None, n: int | None = None) -> CredibleBall:
    if K is None:
        if n is None:
            raise ValidationError("give K or n")
        K = default_inflation(n)
    if K < 1:
        raise ValidationError(f"inflation factor must be >= 1, got {K}")
    return replace(ball, inflation_K=ball.inflation_K * K)


def equal_tail_intervals(draws, level: float = 0.95, K: float = 1.0):
    """Per-cell equal-tail intervals from posterior draws (first axis = draws).

    With ``K != 1`` both half-widths are scaled by ``K`` about the per-cell
    posterior median. Returns ``(lower, upper)``.
    """
    if not 0 < level < 1:
        raise ValidationError("level must lie in (0, 1)")
    draws = np.asarray(getattr(draws, "f_draws", draws), dtype=float)
    if draws.ndim < 1 or draws.shape[0] < 2:
        raise ValidationError("need at least two draws")
    alpha = (1 - level) / 2
    if K == 1.0:
        lo, hi = np.quantile(draws, [alpha, 1 - alpha], axis=0)
        return lo, hi
    if K < 1:
        raise ValidationError("inflation factor must be >= 1")
    lo, med, hi = np.quantile(draws, [alpha, 0.5, 1 - alpha], axis=0)
    return med - K * (med - lo), med + K * (hi - med)


def interval_coverage(lower, upper, truth, reduce=True):
    truth = np.asarray(truth, dtype=float)
    hit = (np.asarray(lower) <= truth) & (truth <= np.asarray(upper))
    return float(hit.mean()) if reduce else hit


def coverage_scale(n: int, spec: SmoothnessSpec) -> float:
    """Deterministic scale ``c_n = n**((beta + r gamma) / (2 beta gamma + r gamma + beta))`` for ball coverage."""
    b, g, r = spec.beta, spec.gamma, spec.r
    if not g > b / r - 0.5 > 0:
        warnings.warn("coverage guarantee needs gamma > beta/r - 1/2 > 0", stacklevel=2)
    return float(n) ** ((b + r * g) / (2 * b * g + r * g + b))


def canonical_prior_variances(spec: SmoothnessSpec, c: float, n: int, J: int) -> np.ndarray:
    """``c**(2 beta / r) i**(-2 beta / r) j**-(2 gamma + 1)`` on ``n x J`` (sequence model)."""
    i = np.arange(1, n + 1, dtype=float)
    j = np.arange(1, J + 1, dtype=float)
    p = 2 * spec.beta / spec.r
    return c**p * np.outer(i ** (-p), j ** (-(2 * spec.gamma + 1)))


def sequence_truncation(spec: SmoothnessSpec, c: float, tol: float = 1e-8, minimum: int = 16) -> int:
    """Number of temporal indices after which prior variances fall below ``tol``."""
    p = 2 * spec.beta / spec.r
    J = (c**p / tol) ** (1.0 / (2 * spec.gamma + 1))
    return int(max(minimum, math.ceil(J)))


def boundary_truth(spec: SmoothnessSpec, n: int, J: int, rng, support=None) -> np.ndarray:
    """Random coefficient array on the boundary of the Sobolev ellipsoid.

    ``sum_ij i**(2 beta / r) j**(2 gamma) theta_ij**2 = n Q**2``, with
    Gaussian directions whose energy profile follows ``support`` (default:
    proportional to the inverse ellipsoid weights).
    """
    wts = sobolev_weights(spec, n, J)
    prof = 1.0 / wts if support is None else np.asarray(support, dtype=float)
    th = rng.standard_normal((n, J)) * np.sqrt(prof)
    scale = math.sqrt(n * spec.Q**2 / float(np.sum(wts * th * th)))
    return th * scale


def q_tau_scaling(
    spec: SmoothnessSpec,
    n_values=(64, 128, 256, 512),
    tau: float = 0.05,
    mc_draws: int = 20_000,
    seed: int = 0,
) -> dict:
    """Log-log slope in ``n`` of the unnormalised radius ``q_tau`` at the scale ``c_n``.

    The predicted slope is ``1 - 2 beta gamma / (2 beta gamma + beta + r gamma)``.
    """
    qs = []
    for k, n in enumerate(n_values):
        c = coverage_scale(n, spec)
        J = sequence_truncation(spec, c, tol=1e-6)
        v = conjugate_posterior(np.zeros((n, J)), canonical_prior_variances(spec, c, n, J)).variance
        qs.append(credible_ball_radius(v, tau, mc_draws, derive_seed(seed, k), tail_rtol=1e-3))
    slope = float(np.polyfit(np.log(n_values), np.log(qs), 1)[0])
    b, g, r = spec.beta, spec.gamma, spec.r
    return {
        "n_values": list(n_values),
        "q_tau": qs,
        "fitted_slope": slope,
        "theoretical_slope": 1 - 2 * b * g / (2 * b * g + b + r * g),
    }


def ball_coverage(
    spec: SmoothnessSpec,
    n: int,
    K: float,
    replications: int = 50,
    seed: int = 0,
    tau: float = 0.05,
    mc_draws: int = 20_000,
    J: int | None = None,
) -> dict:
    """Frequentist coverage of the inflated credible ball in the sequence model.

    Uses the deterministic scale :func:`coverage_scale`. The radius ``q_tau``
    does not depend on the data, so it is computed once.
    """
    c = coverage_scale(n, spec)
    J = J or sequence_truncation(spec, c, tol=1e-6)
    d2 = canonical_prior_variances(spec, c, n, J)
    pf0 = conjugate_posterior(np.zeros((n, J)), d2)
    q = credible_ball_radius(pf0, tau, mc_draws, derive_seed(seed, 0), normalizer=1.0 / n, tail_rtol=1e-3)
    hits = []
    for rep in range(replications):
        rng = np.random.default_rng(derive_seed(seed, 1, rep))
        truth = boundary_truth(spec, n, J, rng)
        Z = truth + rng.standard_normal((n, J))
        pf = conjugate_posterior(Z, d2)
        ball = CredibleBall(pf.mean, q, tau, K, 1.0 / n)
        hits.append(ball.contains(truth))
    cov = float(np.mean(hits))
    return {
        "mode": "ball",
        "K": K,
        "coverage": cov,
        "se": math.sqrt(cov * (1 - cov) / replications),
        "replications": replications,
        "q_tau": q,
        "c": c,
    }


def coverage_experiment(scenario, replications: int | None = None, seed: int | None = None, mode: str = "interval"):
    """Empirical coverage for a scenario.

    ``mode="ball"`` expects ``scenario`` as a dict with ``spec``, ``n`` and
    ``K``; ``mode="interval"`` expects an experiment :class:`Scenario` and
    reports average cellwise equal-tail coverage, plain and inflated.
    """
    if mode == "ball":
        sc = dict(scenario)
        return ball_coverage(
            sc["spec"], sc["n"], sc.get("K", 1.0), replications or 50, 0 if seed is None else seed,
            sc.get("tau", 0.05),
        )
    if mode != "interval":
        raise ValidationError(f"unknown coverage mode {mode!r}")
    from .experiments import run_scenario

    sc = scenario
    if replications is not None:
        sc = replace(sc, replications=replications)
    if seed is not None:
        sc = replace(sc, seed=seed)
    results = run_scenario(sc)
    out = []
    for label, attr in (("equal_tail", "coverage"), ("inflated", "coverage_inflated")):
        vals = np.array([getattr(r, attr) for r in results])
        out.append(
            {
                "scenario": sc.name,
                "mode": label,
                "K": 1.0 if label == "equal_tail" else default_inflation(sc.n),
                "coverage": float(vals.mean()),
                "se": float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("nan"),
                "replications": len(vals),
            }
        )
    return out
