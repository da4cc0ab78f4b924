"""Simulation protocol: truth generation, masking, imputation scoring and the result tables."""
from __future__ import annotations

import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .basis import from_canonical, temporal_basis, to_canonical
from .errors import ValidationError
from .graph import estimate_dimension, generate_graph, graph_spectrum
from .mcmc import DEFAULT_ALPHA_GRID, ChainConfig, cross_validate_alpha, run_chain
from .pinsker import pinsker_filter
from .posterior import SmoothnessSpec, select_scale_c, sobolev_norm
from .seeding import derive_seed
from .uncertainty import default_inflation, equal_tail_intervals, interval_coverage

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObservationPanel:
    values: np.ndarray
    missing: np.ndarray
    sigma2: float | None = None

    @property
    def observed(self) -> np.ndarray:
        return ~self.missing

    def masked_values(self) -> np.ndarray:
        out = np.array(self.values, dtype=float)
        out[self.missing] = np.nan
        return out


def generate_truth(s, T: int, r: float) -> np.ndarray:
    """Truth panel ``sum_i 3 sin(i / 2T) sqrt(n) i**(-1/2 - 2/r) e_i``, constant over time.

    The ``i = 0`` term is taken as zero.
    """
    n = s.n
    i = np.arange(n, dtype=float)
    coef = np.zeros(n)
    coef[1:] = 3.0 * np.sin(i[1:] / (2 * T)) * math.sqrt(n) * i[1:] ** (-0.5 - 2.0 / r)
    f = s.eigenvectors @ coef
    return np.repeat(f[:, None], T, axis=1)


def simulate_observations(truth, sigma2: float, seed: int) -> ObservationPanel:
    if sigma2 < 0:
        raise ValidationError("sigma2 must be non-negative")
    truth = np.asarray(truth, dtype=float)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(truth.shape) * math.sqrt(sigma2)
    return ObservationPanel(truth + noise, np.zeros(truth.shape, dtype=bool), sigma2)


def mask_at_random(panel, fraction: float, seed: int) -> ObservationPanel:
    """Mask exactly ``floor(fraction * n * T)`` cells uniformly without replacement."""
    if not 0 <= fraction < 1:
        raise ValidationError("mask fraction must lie in [0, 1)")
    if isinstance(panel, ObservationPanel):
        values, sigma2 = panel.values, panel.sigma2
    else:
        values, sigma2 = np.asarray(panel, dtype=float), None
    size = values.size
    k = int(math.floor(fraction * size))
    if k >= size:
        raise ValidationError("mask would leave no observed cells")
    rng = np.random.default_rng(seed)
    missing = np.zeros(size, dtype=bool)
    missing[rng.choice(size, size=k, replace=False)] = True
    return ObservationPanel(np.array(values), missing.reshape(values.shape), sigma2)


def prediction_mse(fitted, heldout, mask) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValidationError("empty mask: nothing to score")
    d = np.asarray(fitted, dtype=float)[mask] - np.asarray(heldout, dtype=float)[mask]
    return float(np.mean(d * d))


# --------------------------------------------------------------------------
# scenarios


METHODS = ("mcmc", "index", "conjugate", "adaptive", "pinsker")

# Weibull exponent of the scale prior used in the simulation scenarios
SIMULATION_A = 0.3

TABLE_SCENARIOS = {
    "weighted_threshold": {"graph_kind": "weighted_threshold", "graph_params": {"n": 100, "threshold": 0.8}},
    "erdos_renyi": {"graph_kind": "erdos_renyi", "graph_params": {"n": 50, "p": 0.2}},
    "cluster": {"graph_kind": "cluster", "graph_params": {"n": 50, "n_clusters": 3, "p_in": 0.3, "p_out": 0.02}},
}


@dataclass(frozen=True)
class Scenario:
    name: str
    graph_kind: str
    graph_params: dict
    T: int = 16
    beta: float = 2.0
    gamma: float = 1.0
    mask_fraction: float = 0.5
    sigma2_true: float = 1.0
    replications: int = 50
    seed: int = 0
    method: str = "mcmc"
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    folds: int = 5
    chain: ChainConfig = ChainConfig(a=SIMULATION_A)
    cv_chain: ChainConfig = ChainConfig(n_iter=1000, burn_in=500, a=SIMULATION_A)
    level: float = 0.95
    basis_kind: str = "haar"
    graph_prior: str = "index"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if "n" not in self.graph_params:
            raise ValidationError("graph_params must give n")
        if not 0 <= self.mask_fraction < 1:
            raise ValidationError("mask_fraction must lie in [0, 1)")
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")
        if self.sigma2_true < 0:
            raise ValidationError("sigma2_true must be non-negative")

    @property
    def n(self) -> int:
        return int(self.graph_params["n"])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha_grid"] = list(self.alpha_grid)
        d["chain"]["sigma2_prior"] = list(self.chain.sigma2_prior)
        d["cv_chain"]["sigma2_prior"] = list(self.cv_chain.sigma2_prior)
        return d


def table_scenarios(replications=50, seed=0, **overrides) -> list[Scenario]:
    return [
        Scenario(name=name, replications=replications, seed=seed, **{**cfg, **overrides})
        for name, cfg in TABLE_SCENARIOS.items()
    ]


@dataclass
class ReplicationResult:
    scenario: str
    replication: int
    r: float
    alpha: float | None
    mse: float
    mse_truth: float
    coverage: float
    coverage_inflated: float
    coverage_missing: float
    coverage_inflated_missing: float
    sigma2_mean: float
    c_mean: float
    accept_hmc: float
    seconds: float


def _pinsker_impute(Yobs, missing, s, b, spec, truth, sigma2, sweeps=50):
    """Oracle Pinsker baseline: Q from the truth, known noise, missing cells refilled from the fit."""
    n, T = Yobs.shape
    theta_true = np.asarray(to_canonical(truth, s, b))
    q2 = T * max(sobolev_norm(theta_true, spec), 1e-12) / sigma2
    f = pinsker_filter(SmoothnessSpec(spec.beta, spec.gamma, spec.r, math.sqrt(q2)), n, T)
    Y = np.where(missing, np.nanmean(Yobs), Yobs)
    for _ in range(sweeps):
        F = from_canonical(f.weights * np.asarray(to_canonical(Y, s, b)), s, b)
        Y = np.where(missing, F, Yobs)
    return F


def run_replication(sc: Scenario, rep: int, graph_prior: str | None = None) -> ReplicationResult:
    """Simulate one dataset for ``sc`` and fit it with the configured method."""
    graph_prior = graph_prior or sc.graph_prior
    t0 = time.perf_counter()
    g = generate_graph(sc.graph_kind, sc.graph_params, seed=derive_seed(sc.seed, rep, 0))
    s = graph_spectrum(g)
    r = estimate_dimension(s).r
    b = temporal_basis(sc.T, sc.basis_kind)
    truth = generate_truth(s, sc.T, r)
    obs = simulate_observations(truth, sc.sigma2_true, derive_seed(sc.seed, rep, 1))
    obs = mask_at_random(obs, sc.mask_fraction, derive_seed(sc.seed, rep, 2))
    spec = SmoothnessSpec(beta=sc.beta, gamma=sc.gamma, r=r)
    Yobs = obs.masked_values()
    m = obs.missing
    nan = float("nan")

    if sc.method == "pinsker":
        F = _pinsker_impute(Yobs, m, s, b, spec, truth, max(sc.sigma2_true, 1e-12))
        return ReplicationResult(
            scenario=sc.name, replication=rep, r=r, alpha=None,
            mse=prediction_mse(F, obs.values, m), mse_truth=prediction_mse(F, truth, m),
            coverage=nan, coverage_inflated=nan, coverage_missing=nan, coverage_inflated_missing=nan,
            sigma2_mean=sc.sigma2_true, c_mean=nan, accept_hmc=nan, seconds=time.perf_counter() - t0,
        )

    alpha = None
    chain = replace(sc.chain, seed=derive_seed(sc.seed, rep, 4))
    if sc.method == "mcmc" and graph_prior != "independent":
        cv = cross_validate_alpha(
            Yobs, m, s, b, spec, sc.alpha_grid, sc.folds, sc.cv_chain, derive_seed(sc.seed, rep, 3),
            graph_prior=graph_prior,
        )
        alpha = cv.alpha
    elif sc.method == "conjugate":
        chain = replace(chain, fixed_c=select_scale_c(spec, s.n, sc.T).c)
    elif sc.method == "adaptive":
        chain = replace(chain, adaptive=True)
    tr = run_chain(Yobs, m, s, b, spec, chain, alpha=alpha, graph_prior=graph_prior)

    lo, hi = equal_tail_intervals(tr.f_draws, sc.level)
    K = default_inflation(s.n)
    lo_k, hi_k = equal_tail_intervals(tr.f_draws, sc.level, K)
    hit = interval_coverage(lo, hi, truth, reduce=False)
    hit_k = interval_coverage(lo_k, hi_k, truth, reduce=False)
    return ReplicationResult(
        scenario=sc.name,
        replication=rep,
        r=r,
        alpha=alpha,
        mse=prediction_mse(tr.f_mean, obs.values, m),
        mse_truth=prediction_mse(tr.f_mean, truth, m),
        coverage=float(hit.mean()),
        coverage_inflated=float(hit_k.mean()),
        coverage_missing=float(hit[m].mean()),
        coverage_inflated_missing=float(hit_k[m].mean()),
        sigma2_mean=float(tr.sigma2.mean()),
        c_mean=float(tr.c.mean()) if tr.c.size else nan,
        accept_hmc=tr.hmc_accept_rate,
        seconds=time.perf_counter() - t0,
    )


# --------------------------------------------------------------------------
# scenario runs and tables


def default_workers() -> int:
    """Worker count: ``GRAPHSMOOTH_THREADS`` if set, else the available cores."""
    env = os.environ.get("GRAPHSMOOTH_THREADS")
    if env:
        try:
            k = int(env)
        except ValueError:
            raise ValidationError(f"GRAPHSMOOTH_THREADS must be an integer, got {env!r}") from None
        if k < 1:
            raise ValidationError("GRAPHSMOOTH_THREADS must be >= 1")
        return k
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def _run_one(args):
    sc, rep, graph_prior = args
    return run_replication(sc, rep, graph_prior)


def run_scenario(sc: Scenario, workers: int | None = None, graph_prior: str | None = None) -> list[ReplicationResult]:
    """All replications of ``sc``, in replication order.

    Each replication derives its own seeds from ``(sc.seed, rep)``, so the
    results do not depend on ``workers``.
    """
    workers = default_workers() if workers is None else workers
    jobs = [(sc, rep, graph_prior) for rep in range(sc.replications)]
    if workers <= 1 or len(jobs) == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(_run_one, jobs))


def _mean_se(vals) -> tuple[float, float]:
    v = np.asarray(vals, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
    return float(v.mean()), se


@dataclass
class TableRun:
    """Replication results for a set of scenarios plus timing."""

    scenarios: list
    results: dict
    seconds: float

    def table1_rows(self):
        """Per-replication rows ``(scenario, replication, mse)``."""
        for sc in self.scenarios:
            for r in self.results[sc.name]:
                yield sc.name, r.replication, r.mse

    def table1_summary(self):
        """Rows ``(scenario, mean_mse, se, replications)``."""
        for sc in self.scenarios:
            mean, se = _mean_se([r.mse for r in self.results[sc.name]])
            yield sc.name, mean, se, len(self.results[sc.name])

    def table2_rows(self):
        """Rows ``(scenario, mode, K, coverage, se, replications)``."""
        for sc in self.scenarios:
            res = self.results[sc.name]
            for mode, attr, K in (
                ("equal_tail", "coverage", 1.0),
                ("inflated", "coverage_inflated", default_inflation(sc.n)),
            ):
                mean, se = _mean_se([getattr(r, attr) for r in res])
                yield sc.name, mode, K, mean, se, len(res)

    def mean_mse(self) -> dict:
        return {name: mean for name, mean, _, _ in self.table1_summary()}

    def coverage(self) -> dict:
        return {(name, mode): cov for name, mode, _, cov, _, _ in self.table2_rows()}


def run_tables(scenarios, workers: int | None = None) -> TableRun:
    """Run every scenario once; both result tables are summaries of the same replications."""
    t0 = time.perf_counter()
    results = {}
    for sc in scenarios:
        logger.info("scenario %s: %d replications", sc.name, sc.replications)
        results[sc.name] = run_scenario(sc, workers)
    return TableRun(list(scenarios), results, time.perf_counter() - t0)


def run_table1(scenarios=None, workers: int | None = None, **kw) -> TableRun:
    """Predictive MSE at masked cells for each scenario (defaults: the three simulation graphs)."""
    return run_tables(scenarios or table_scenarios(**kw), workers)


def run_table2(scenarios=None, workers: int | None = None, **kw) -> TableRun:
    """Equal-tail and inflated interval coverage for each scenario."""
    return run_tables(scenarios or table_scenarios(**kw), workers)


def borrowing_strength(sc: Scenario, workers: int | None = None) -> dict:
    """Mean predictive MSE of the graph prior against independent node effects on the same data."""
    base = replace(sc, method="index" if sc.method == "mcmc" else sc.method)
    graph = run_scenario(sc, workers)
    indep = run_scenario(base, workers, graph_prior="independent")
    return {
        "graph": _mean_se([r.mse for r in graph]),
        "independent": _mean_se([r.mse for r in indep]),
    }


def manifest(config: dict, seconds: float | None = None, **extra) -> dict:
    """Run record: configuration, seeds, library versions and timing."""
    import scipy

    from . import __version__
    from .kernels import BACKEND

    out = {
        "package": "graphsmooth",
        "version": __version__,
        "kernel_backend": BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
        "config": config,
    }
    if seconds is not None:
        out["seconds"] = seconds
    out.update(extra)
    return out
