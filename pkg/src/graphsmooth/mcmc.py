"""Hierarchical posterior sampling with missing data.

One sweep of :func:`run_chain` updates, in order, the coefficients
(conjugate Gibbs), the noise variance (conjugate Gibbs on observed cells),
the missing cells (data augmentation) and the prior scale ``c`` (HMC on
``log c``). In adaptive mode the truncation ``(I, J)`` of a finite random
series prior is updated first, marginally over the coefficients.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .basis import TemporalBasis, from_canonical, to_canonical
from .errors import NumericalError, ValidationError
from .graph import Graph, Spectrum, graph_spectrum
from .posterior import SmoothnessSpec, prior_variance_factors, temporal_decay
from .seeding import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_ALPHA_GRID = (0.5, 1.0, 1.5, 2.0, 3.0)


@dataclass(frozen=True)
class ChainConfig:
    n_iter: int = 10000
    burn_in: int = 5000
    seed: int = 0
    hmc_step_size: float = 0.05
    hmc_leapfrog_steps: int = 10
    a: float = 1.0
    sigma2_prior: tuple[float, float] = (0.1, 0.1)
    thin: int = 1
    tune_step_size: bool = True
    target_accept: float = 0.75
    fixed_c: float | None = None
    fixed_sigma2: float | None = None
    adaptive: bool = False
    a2: float = 1.0
    adaptive_moves: int = 1
    store_draws: bool = True

    def __post_init__(self):
        if self.n_iter < 1 or not 0 <= self.burn_in < self.n_iter:
            raise ValidationError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValidationError("thin must be >= 1")
        if not self.hmc_step_size > 0:
            raise ValidationError("hmc_step_size must be positive")
        if self.hmc_leapfrog_steps < 1:
            raise ValidationError("hmc_leapfrog_steps must be >= 1")
        if self.a <= 0 or self.a2 <= 0:
            raise ValidationError("a and a2 must be positive")
        shape, rate = self.sigma2_prior
        if shape <= 0 or rate <= 0:
            raise ValidationError("sigma2 prior shape and rate must be positive")
        if not 0 < self.target_accept < 1:
            raise ValidationError("target_accept must lie in (0, 1)")
        if self.fixed_c is not None and self.fixed_c <= 0:
            raise ValidationError("fixed_c must be positive")
        if self.fixed_sigma2 is not None and self.fixed_sigma2 <= 0:
            raise ValidationError("fixed_sigma2 must be positive")
        if self.adaptive_moves < 1:
            raise ValidationError("adaptive_moves must be >= 1")


@dataclass
class ChainState:
    theta: np.ndarray
    c: float
    sigma2: float
    imputed_Y: np.ndarray
    I: int | None = None
    J: int | None = None


@dataclass
class ChainTrace:
    """Post-burn-in, thinned record of a chain."""

    iters: np.ndarray
    c: np.ndarray
    sigma2: np.ndarray
    accept_hmc: np.ndarray
    I: np.ndarray | None
    J: np.ndarray | None
    f_mean: np.ndarray
    theta_mean: np.ndarray
    missing: np.ndarray
    missing_draws: np.ndarray
    f_draws: np.ndarray | None
    step_size: float
    hmc_flagged: int = 0
    final_state: ChainState | None = field(default=None, repr=False)

    @property
    def n_kept(self) -> int:
        return self.iters.shape[0]

    @property
    def hmc_accept_rate(self) -> float:
        return float(np.mean(self.accept_hmc)) if self.accept_hmc.size else float("nan")

    def quantiles(self, q) -> np.ndarray:
        if self.f_draws is None:
            raise ValidationError("trace was recorded without draws")
        return np.quantile(self.f_draws, q, axis=0)

    def summary_rows(self):
        """Rows ``(node, time, mean, q025, q975)`` of the fitted panel."""
        lo, hi = self.quantiles([0.025, 0.975])
        n, T = self.f_mean.shape
        for i in range(n):
            for k in range(T):
                yield i, k, float(self.f_mean[i, k]), float(lo[i, k]), float(hi[i, k])

    def records(self):
        """Per-iteration summaries as dicts, suitable for newline-delimited JSON."""
        for s in range(self.n_kept):
            rec = {
                "iter": int(self.iters[s]),
                "c": float(self.c[s]),
                "sigma2": float(self.sigma2[s]),
                "accept_hmc": bool(self.accept_hmc[s]),
            }
            if self.I is not None:
                rec["I"] = int(self.I[s])
                rec["J"] = int(self.J[s])
            yield rec

    def write_ndjson(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")


# --------------------------------------------------------------------------
# single-site updates


def gibbs_theta(Z, d2, sigma2, rng, inv_base=None):
    """Draw every ``theta_ij`` from its conjugate full conditional."""
    Z = np.ascontiguousarray(Z, dtype=float)
    d2 = np.ascontiguousarray(np.broadcast_to(d2, Z.shape), dtype=float)
    if inv_base is None:
        inv_base = np.zeros_like(Z)
    eps = rng.standard_normal(Z.shape)
    theta, _ = kernels.conjugate_draw(Z, d2, float(sigma2), eps, np.ascontiguousarray(inv_base))
    return theta


def sigma2_posterior_params(residuals, prior=(0.1, 0.1)) -> tuple[float, float]:
    """Shape and rate of the Gamma full conditional of the noise precision."""
    r = np.asarray(residuals, dtype=float).ravel()
    shape, rate = prior
    return shape + 0.5 * r.size, rate + 0.5 * float(r @ r)


def gibbs_sigma2(residuals, rng, prior=(0.1, 0.1)) -> float:
    shape, rate = sigma2_posterior_params(residuals, prior)
    return 1.0 / rng.gamma(shape, 1.0 / rate)


def gibbs_missing(Y, missing, fitted, sigma2, rng) -> np.ndarray:
    """Redraw missing cells around the current fit; observed cells are copied unchanged."""
    out = np.array(Y, dtype=float, copy=True)
    k = int(np.count_nonzero(missing))
    if k:
        out[missing] = fitted[missing] + math.sqrt(sigma2) * rng.standard_normal(k)
    return out


def log_scale_target(xi, ss, count, power, a):
    """Log conditional density of ``xi = log c`` given the coefficients, and its gradient.

    With ``d2 = c**power * base`` and ``ss = sum(theta**2 / base)`` over
    ``count`` entries, the density combines the Gaussian coefficient prior,
    the Weibull prior ``c**a ~ Exp(1)`` and the log Jacobian.
    """
    return kernels.log_scale_target(float(xi), float(ss), float(count), float(power), float(a))


def leapfrog(xi, momentum, ss, count, power, a, step, n_steps):
    """Plain leapfrog integration of the ``xi`` dynamics, returning ``(xi, momentum)``."""

    def grad(x):
        return log_scale_target(x, ss, count, power, a)[1]

    p = momentum + 0.5 * step * grad(xi)
    x = xi
    for k in range(n_steps):
        x += step * p
        if k + 1 < n_steps:
            p += step * grad(x)
    p += 0.5 * step * grad(x)
    return x, p


def hamiltonian(xi, momentum, ss, count, power, a):
    return -log_scale_target(xi, ss, count, power, a)[0] + 0.5 * momentum**2


def hmc_update_c(c, ss, count, power, rng, step, n_steps, a=1.0):
    """One HMC transition for ``c`` on the log scale.

    Returns ``(c_new, accept_prob, accepted, finite)``.
    """
    if n_steps < 1:
        raise ValidationError("HMC needs at least one leapfrog step")
    momentum = rng.standard_normal()
    log_u = math.log(rng.uniform())
    xi, prob, acc, finite = kernels.hmc_transition(
        math.log(c), float(ss), float(count), float(power), float(a), float(step), int(n_steps), momentum, log_u
    )
    return math.exp(xi), prob, acc, finite


class DualAveraging:
    """Step-size adaptation towards a target acceptance probability (Hoffman and Gelman, 2014)."""

    def __init__(self, step0, target=0.75, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10 * step0)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.h_bar = 0.0
        self.log_step = math.log(step0)
        self.log_step_bar = 0.0
        self.m = 0

    def update(self, accept_prob) -> float:
        self.m += 1
        m = self.m
        eta = 1.0 / (m + self.t0)
        self.h_bar = (1 - eta) * self.h_bar + eta * (self.target - accept_prob)
        self.log_step = self.mu - math.sqrt(m) / self.gamma * self.h_bar
        w = m ** (-self.kappa)
        self.log_step_bar = w * self.log_step + (1 - w) * self.log_step_bar
        return math.exp(self.log_step)

    @property
    def final_step(self) -> float:
        return math.exp(self.log_step_bar) if self.m else math.exp(self.log_step)


def truncation_log_prior(n, T, a2=1.0) -> np.ndarray:
    """``-a2 * I * J * (log I + log J)`` on the grid ``1..n`` by ``1..T``."""
    I = np.arange(1, n + 1, dtype=float)[:, None]
    J = np.arange(1, T + 1, dtype=float)[None, :]
    return -a2 * I * J * (np.log(I) + np.log(J))


def truncation_log_posterior(Z, sigma2, a2=1.0) -> np.ndarray:
    """Log posterior over ``(I, J)`` up to a constant, with unit-variance active coefficients.

    Entry ``[I-1, J-1]`` sums, over the active block ``i <= I, j <= J``, the
    log ratio of the ``N(0, 1 + sigma2)`` and ``N(0, sigma2)`` densities of
    ``Z_ij`` and adds the log prior.
    """
    Z = np.asarray(Z, dtype=float)
    z2 = Z * Z
    gain = 0.5 * (math.log(sigma2) - math.log1p(sigma2)) + 0.5 * z2 * (1.0 / sigma2 - 1.0 / (1.0 + sigma2))
    block = gain.cumsum(axis=0).cumsum(axis=1)
    n, T = Z.shape
    return block + truncation_log_prior(n, T, a2)


def adaptive_series_update(Z, sigma2, I, J, rng, a2=1.0, steps=1, counts=None):
    """Metropolis moves of ``(I, J)`` to a uniformly chosen unit neighbour.

    Returns ``(I, J, n_accepted)``. Off-grid proposals count as rejections.
    """
    table = np.ascontiguousarray(truncation_log_posterior(Z, sigma2, a2))
    directions = rng.integers(0, 4, size=steps).astype(np.int64)
    log_u = np.log(rng.uniform(size=steps))
    if counts is None:
        counts = np.zeros(table.shape, dtype=np.int64)
    return kernels.adaptive_walk(table, int(I), int(J), directions, log_u, counts)


def walk_table(table, I, J, steps, rng):
    """Run the truncation walk on a fixed log-target table; returns final state and visit counts."""
    table = np.ascontiguousarray(table, dtype=float)
    directions = rng.integers(0, 4, size=steps).astype(np.int64)
    log_u = np.log(rng.uniform(size=steps))
    counts = np.zeros(table.shape, dtype=np.int64)
    I, J, acc = kernels.adaptive_walk(table, int(I), int(J), directions, log_u, counts)
    return I, J, acc, counts


# --------------------------------------------------------------------------
# full chain


def _as_spectrum(graph) -> Spectrum:
    if isinstance(graph, Spectrum):
        return graph
    if isinstance(graph, Graph):
        if not graph.is_connected():
            raise ValidationError("smoothing requires a connected graph")
        return graph_spectrum(graph)
    raise ValidationError("expected a Graph or Spectrum")


def _initial_fill(Y, missing):
    Y = np.array(Y, dtype=float, copy=True)
    obs = ~missing
    global_mean = float(np.mean(Y[obs]))
    for i in range(Y.shape[0]):
        row_obs = obs[i]
        fill = float(np.mean(Y[i, row_obs])) if row_obs.any() else global_mean
        Y[i, ~row_obs] = fill
    return Y


def run_chain(
    panel,
    mask,
    graph,
    basis: TemporalBasis,
    spec: SmoothnessSpec,
    config: ChainConfig = ChainConfig(),
    alpha: float | None = None,
    graph_prior: str = "index",
    on_record=None,
) -> ChainTrace:
    """Run one Markov chain and return the post-burn-in trace.

    Parameters
    ----------
    panel : (n, T) array
        Observations; values at missing cells are ignored.
    mask : (n, T) bool array or None
        True marks a missing cell. ``None`` takes NaN cells as missing.
    graph : Graph or Spectrum
    alpha : float, optional
        Prior exponent; the graph decay ``2 beta / r`` becomes ``(2 alpha + r) / r``.
    graph_prior : {"index", "laplacian", "independent"}
        ``"index"`` decays with the eigen-index, ``"laplacian"`` with the
        eigenvalues themselves (needs ``alpha``). ``"independent"`` replaces
        the graph prior by exchangeable node effects (same temporal prior),
        the no-borrowing baseline.
    on_record : callable, optional
        Called with each kept iteration's summary dict (for streaming traces).
    """
    s = _as_spectrum(graph)
    Y = np.asarray(panel, dtype=float)
    n, T = s.n, basis.T
    if Y.shape != (n, T):
        raise ValidationError(f"panel shape {Y.shape} does not match (n={n}, T={T})")
    missing = np.isnan(Y) if mask is None else np.asarray(mask, dtype=bool)
    if missing.shape != Y.shape:
        raise ValidationError("mask shape does not match panel")
    observed = ~missing
    m_obs = int(np.count_nonzero(observed))
    if m_obs == 0:
        raise ValidationError("panel has no observed cells")
    if not np.all(np.isfinite(Y[observed])):
        raise ValidationError("observed cells must be finite")

    rng = np.random.default_rng(config.seed)
    E, W = s.eigenvectors, basis.matrix
    ET, WT = np.ascontiguousarray(E.T), np.ascontiguousarray(W.T)

    adaptive = config.adaptive
    if adaptive:
        base, power = np.ones((n, T)), 1.0
    elif graph_prior == "independent":
        base, power = np.outer(np.ones(n), temporal_decay(T, spec.gamma)), 1.0
    elif graph_prior in ("index", "laplacian"):
        base, power = prior_variance_factors(spec, n, T, alpha, s.eigenvalues, graph_prior)
    else:
        raise ValidationError(f"unknown graph_prior {graph_prior!r}")
    base = np.ascontiguousarray(base)
    inv_base = np.zeros((n, T)) if adaptive else np.ascontiguousarray(1.0 / base)
    count = float(n * T)

    Yf = _initial_fill(Y, missing)
    obs_vals = Y[observed]
    sigma2 = config.fixed_sigma2 if config.fixed_sigma2 is not None else max(float(np.var(obs_vals)), 1e-8)
    Z = ET @ Yf @ WT
    if config.fixed_c is not None:
        c = float(config.fixed_c)
    else:
        c = max(float(np.sum(Z * Z * inv_base)) / count, 1e-12) ** (1.0 / power)
    I, J = (1, 1) if adaptive else (None, None)
    theta = np.zeros((n, T))

    step = config.hmc_step_size
    tuner = DualAveraging(step, config.target_accept) if (config.tune_step_size and config.fixed_c is None) else None

    n_keep = len(range(config.burn_in, config.n_iter, config.thin))
    iters = np.empty(n_keep, dtype=np.int64)
    c_tr = np.empty(n_keep)
    s2_tr = np.empty(n_keep)
    acc_tr = np.zeros(n_keep, dtype=bool)
    I_tr = np.empty(n_keep, dtype=np.int64) if adaptive else None
    J_tr = np.empty(n_keep, dtype=np.int64) if adaptive else None
    n_missing = int(np.count_nonzero(missing))
    miss_draws = np.empty((n_keep, n_missing))
    f_draws = np.empty((n_keep, n, T)) if config.store_draws else None
    f_sum = np.zeros((n, T))
    theta_sum = np.zeros((n, T))
    flagged = 0
    k = 0
    shape0, rate0 = config.sigma2_prior

    for it in range(config.n_iter):
        Z = ET @ Yf @ WT
        if adaptive:
            counts = np.zeros((n, T), dtype=np.int64)
            I, J, _ = adaptive_series_update(Z, sigma2, I, J, rng, config.a2, config.adaptive_moves, counts)
            d2 = np.zeros((n, T))
            d2[:I, :J] = 1.0
        else:
            d2 = c**power * base
        eps = rng.standard_normal((n, T))
        theta, ss = kernels.conjugate_draw(np.ascontiguousarray(Z), d2, sigma2, eps, inv_base)
        F = E @ theta @ W

        if config.fixed_sigma2 is None:
            resid = obs_vals - F[observed]
            rate = rate0 + 0.5 * float(resid @ resid)
            sigma2 = 1.0 / rng.gamma(shape0 + 0.5 * m_obs, 1.0 / rate)
            if not (math.isfinite(sigma2) and 0 < sigma2 < 1e300):
                raise NumericalError(
                    f"noise variance diverged at iteration {it}: sigma2={sigma2!r}, c={c!r}, rate={rate!r}"
                )

        if n_missing:
            Yf[missing] = F[missing] + math.sqrt(sigma2) * rng.standard_normal(n_missing)

        accepted = False
        if not adaptive and config.fixed_c is None:
            momentum = rng.standard_normal()
            log_u = math.log(rng.uniform())
            xi, prob, accepted, finite = kernels.hmc_transition(
                math.log(c), ss, count, power, config.a, step, config.hmc_leapfrog_steps, momentum, log_u
            )
            if not finite:
                flagged += 1
            c = math.exp(xi)
            if tuner is not None and it < config.burn_in:
                step = tuner.update(prob)
                if it == config.burn_in - 1:
                    step = tuner.final_step

        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            iters[k] = it
            c_tr[k] = c
            s2_tr[k] = sigma2
            acc_tr[k] = accepted
            if adaptive:
                I_tr[k], J_tr[k] = I, J
            miss_draws[k] = Yf[missing]
            if f_draws is not None:
                f_draws[k] = F
            f_sum += F
            theta_sum += theta
            if on_record is not None:
                rec = {"iter": it, "c": c, "sigma2": sigma2, "accept_hmc": bool(accepted)}
                if adaptive:
                    rec["I"], rec["J"] = int(I), int(J)
                on_record(rec)
            k += 1

    if flagged:
        logger.info("%d HMC proposals had non-finite energy and were rejected", flagged)
    return ChainTrace(
        iters=iters,
        c=c_tr,
        sigma2=s2_tr,
        accept_hmc=acc_tr,
        I=I_tr,
        J=J_tr,
        f_mean=f_sum / n_keep,
        theta_mean=theta_sum / n_keep,
        missing=missing,
        missing_draws=miss_draws,
        f_draws=f_draws,
        step_size=step,
        hmc_flagged=flagged,
        final_state=ChainState(theta=theta, c=c, sigma2=sigma2, imputed_Y=Yf, I=I, J=J),
    )


# --------------------------------------------------------------------------
# cross-validation


@dataclass(frozen=True)
class CVResult:
    alpha: float
    grid: tuple[float, ...]
    scores: tuple[float, ...]


def make_folds(observed, folds, rng):
    """Assign observed cells to ``folds`` groups of near-equal size (each non-empty)."""
    cells = np.flatnonzero(observed.ravel())
    if cells.size < folds:
        raise ValidationError(f"need at least {folds} observed cells for {folds}-fold CV")
    cells = rng.permutation(cells)
    return np.array_split(cells, folds)


def cross_validate_alpha(
    panel,
    mask,
    graph,
    basis: TemporalBasis,
    spec: SmoothnessSpec,
    alpha_grid=DEFAULT_ALPHA_GRID,
    folds: int = 5,
    config: ChainConfig = ChainConfig(n_iter=1000, burn_in=500),
    seed: int = 0,
    graph_prior: str = "index",
) -> CVResult:
    """Choose ``alpha`` by K-fold predictive MSE on held-out observed cells.

    All grid points share the same folds and chain seeds; ties go to the
    smallest ``alpha``.
    """
    grid = tuple(sorted(float(a) for a in alpha_grid))
    if not grid:
        raise ValidationError("alpha_grid is empty")
    s = _as_spectrum(graph)
    Y = np.asarray(panel, dtype=float)
    missing = np.isnan(Y) if mask is None else np.asarray(mask, dtype=bool)
    if len(grid) == 1:
        return CVResult(grid[0], grid, (float("nan"),))
    rng = np.random.default_rng(derive_seed(seed, 0))
    fold_cells = make_folds(~missing, folds, rng)
    cfg = replace(config, store_draws=False)
    scores = []
    for alpha in grid:
        errs = []
        for f, cells in enumerate(fold_cells):
            train_missing = missing.copy().ravel()
            train_missing[cells] = True
            train_missing = train_missing.reshape(missing.shape)
            tr = run_chain(
                Y, train_missing, s, basis, spec, replace(cfg, seed=derive_seed(seed, 1, f)), alpha=alpha,
                graph_prior=graph_prior,
            )
            pred = tr.f_mean.ravel()[cells]
            errs.append(float(np.mean((pred - Y.ravel()[cells]) ** 2)))
        scores.append(float(np.mean(errs)))
    best = int(np.argmin(scores))
    return CVResult(grid[best], grid, tuple(scores))
