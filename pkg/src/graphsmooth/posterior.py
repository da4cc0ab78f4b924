"""Conjugate posterior under the separable graph-by-time Gaussian prior.

In canonical coordinates the model is ``Z_ij ~ N(theta_ij, sigma2)`` with
independent priors ``theta_ij ~ N(0, d2_ij)``, so every posterior quantity
is entrywise.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .basis import CoefficientMatrix, TemporalBasis, from_canonical
from .errors import ValidationError
from .graph import Spectrum

REGIMES = ("i", "ii", "iii")
PRIOR_MODES = ("fixed_c", "regime_c", "hierarchical_c")
BOUNDARY_WIDTH = 1e-9


@dataclass(frozen=True)
class SmoothnessSpec:
    """Graphical smoothness ``beta``, temporal smoothness ``gamma``, graph dimension ``r``, radius ``Q``."""

    beta: float
    gamma: float
    r: float
    Q: float = 1.0

    def __post_init__(self):
        for name in ("beta", "gamma", "r", "Q"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive and finite, got {v}")

    @property
    def regime(self) -> str:
        gap = 2 * self.beta - self.r * (2 * self.gamma + 1)
        if abs(gap) <= BOUNDARY_WIDTH:
            return "iii"
        return "i" if gap < 0 else "ii"


@dataclass(frozen=True)
class PriorSpec:
    mode: str = "hierarchical_c"
    c: float | None = None
    a: float = 1.0
    alpha: float | None = None

    def __post_init__(self):
        if self.mode not in PRIOR_MODES:
            raise ValidationError(f"unknown prior mode {self.mode!r}")
        if self.mode == "fixed_c" and (self.c is None or self.c <= 0):
            raise ValidationError("fixed_c mode needs a positive c")
        if self.mode != "fixed_c" and self.c is not None:
            raise ValidationError(f"c must not be set in {self.mode} mode")
        if self.a <= 0:
            raise ValidationError("Weibull exponent a must be positive")
        if self.alpha is not None and self.alpha <= 0:
            raise ValidationError("alpha must be positive")


@dataclass(frozen=True)
class ScaleChoice:
    c: float
    regime: str
    rate_exponent: float

    def to_dict(self) -> dict:
        return {"regime": self.regime, "c": self.c, "rate_exponent": self.rate_exponent}


@dataclass(frozen=True)
class PosteriorField:
    mean: np.ndarray
    variance: np.ndarray
    d2: np.ndarray
    sigma2: float

    @property
    def shape(self):
        return self.mean.shape


def temporal_decay(T: int, gamma: float) -> np.ndarray:
    """``j**-(2 gamma + 1)`` for ``j = 1..T``."""
    return np.arange(1, T + 1, dtype=float) ** (-(2 * gamma + 1))


def prior_variance_factors(
    spec: SmoothnessSpec,
    n: int,
    T: int,
    alpha: float | None = None,
    eigenvalues=None,
    form: str = "index",
) -> tuple[np.ndarray, float]:
    """Split the prior variances as ``d2 = c**power * base``.

    The index form is ``(c / i)**(2 beta / r) * j**-(2 gamma + 1)``; with
    ``alpha`` the graph exponent ``beta`` is replaced by ``alpha + r / 2``,
    giving ``(c / i)**((2 alpha + r) / r)``. ``form="laplacian"`` (needs
    ``alpha`` and the eigenvalues) uses the eigenvalues themselves:
    ``(c / n)**((2 alpha + r) / r) * (lambda_i + n**-2)**-(alpha + r / 2) * j**-(2 gamma + 1)``.
    """
    if form not in ("index", "laplacian"):
        raise ValidationError(f"unknown prior form {form!r}")
    tdecay = temporal_decay(T, spec.gamma)
    if alpha is None or form == "index":
        power = 2 * spec.beta / spec.r if alpha is None else (2 * alpha + spec.r) / spec.r
        gdecay = np.arange(1, n + 1, dtype=float) ** (-power)
    else:
        if eigenvalues is None:
            raise ValidationError("the alpha-form prior needs Laplacian eigenvalues")
        lam = np.asarray(eigenvalues, dtype=float)
        if lam.shape != (n,):
            raise ValidationError(f"expected {n} eigenvalues, got {lam.shape}")
        power = (2 * alpha + spec.r) / spec.r
        lam = np.maximum(lam, 0.0)
        gdecay = float(n) ** (-power) * (lam + float(n) ** -2) ** (-(alpha + spec.r / 2))
    return np.outer(gdecay, tdecay), power


def prior_variances(
    spec: SmoothnessSpec,
    c: float,
    n: int,
    T: int,
    alpha: float | None = None,
    eigenvalues=None,
    form: str = "index",
) -> np.ndarray:
    if not c > 0:
        raise ValidationError(f"scale c must be positive, got {c}")
    base, power = prior_variance_factors(spec, n, T, alpha, eigenvalues, form)
    return c**power * base


def select_scale_c(spec: SmoothnessSpec, n: int, T: int) -> ScaleChoice:
    """Scale ``c`` prescribed for the discrete model, by smoothness regime."""
    nT = n * T
    if nT < 2:
        raise ValidationError("need n * T >= 2")
    if spec.beta <= spec.r / 2:
        warnings.warn(f"beta={spec.beta} <= r/2={spec.r / 2}; rate guarantees do not apply", stacklevel=2)
    b, g, r = spec.beta, spec.gamma, spec.r
    regime = spec.regime
    if regime == "i":
        denom = 4 * b * g + 2 * r * g + r
        return ScaleChoice(nT ** (r * (2 * g + 1) / denom), regime, 2 * b * g / denom)
    if regime == "ii":
        return ScaleChoice(nT ** (r / (2 * b)), regime, g / (2 * g + 1))
    return ScaleChoice((nT / math.log(nT)) ** (1 / (2 * g + 1)), regime, g / (2 * g + 1))


def conjugate_posterior(Z, d2, sigma2: float = 1.0) -> PosteriorField:
    """Entrywise posterior of ``theta`` given ``Z``.

    ``mean = Z d2 / (d2 + sigma2)`` and ``variance = sigma2 d2 / (d2 + sigma2)``.
    Infinite ``d2`` gives the flat-prior limit and zero ``d2`` pins ``theta`` at 0.
    """
    if not sigma2 > 0:
        raise ValidationError(f"sigma2 must be positive, got {sigma2}")
    Z = np.asarray(Z, dtype=float)
    d2 = np.broadcast_to(np.asarray(d2, dtype=float), Z.shape)
    if np.any(d2 < 0) or np.any(np.isnan(d2)):
        raise ValidationError("prior variances must be non-negative")
    with np.errstate(divide="ignore"):
        w = 1.0 / (1.0 + sigma2 / d2)
    return PosteriorField(mean=w * Z, variance=sigma2 * w, d2=np.array(d2), sigma2=float(sigma2))


def posterior_mean_panel(pf: PosteriorField, s: Spectrum, b: TemporalBasis) -> np.ndarray:
    return from_canonical(pf.mean, s, b)


def sample_posterior(pf: PosteriorField, draws: int, seed: int = 0) -> Iterator[CoefficientMatrix]:
    if draws < 1:
        raise ValidationError("draws must be >= 1")
    rng = np.random.default_rng(seed)
    sd = np.sqrt(pf.variance)
    for _ in range(draws):
        yield CoefficientMatrix(pf.mean + sd * rng.standard_normal(pf.mean.shape), "parameter_theta")


def sobolev_weights(spec: SmoothnessSpec, n: int, T: int) -> np.ndarray:
    i = np.arange(1, n + 1, dtype=float)
    j = np.arange(1, T + 1, dtype=float)
    return np.outer(i ** (2 * spec.beta / spec.r), j ** (2 * spec.gamma))


def sobolev_norm(theta, spec: SmoothnessSpec) -> float:
    """``(nT)**-1 * sum_ij i**(2 beta / r) j**(2 gamma) theta_ij**2``."""
    th = np.asarray(theta, dtype=float)
    n, T = th.shape
    return float(np.sum(sobolev_weights(spec, n, T) * th**2) / (n * T))


def in_sobolev_ball(theta, spec: SmoothnessSpec) -> bool:
    return sobolev_norm(theta, spec) <= spec.Q**2


def export_posterior_rows(pf: PosteriorField):
    """Rows ``(i, j, mean, variance)`` with 0-based indices."""
    n, T = pf.shape
    for i in range(n):
        for j in range(T):
            yield i, j, float(pf.mean[i, j]), float(pf.variance[i, j])
