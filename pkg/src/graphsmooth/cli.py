"""Command-line interface.

Exit codes: 0 on success, 1 on invalid input or configuration, 2 on
numerical failure. Every run writes ``config.yaml`` (the effective
configuration, loadable with ``--config``) and ``manifest.json`` under
``--out``.
"""
from __future__ import annotations

import argparse
import copy
import logging
import math
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import io
from .basis import from_canonical, temporal_basis, to_canonical
from .errors import ConfigError, GraphSmoothError, NumericalError, ValidationError
from .experiments import (
    SIMULATION_A,
    TABLE_SCENARIOS,
    Scenario,
    generate_truth,
    manifest,
    mask_at_random,
    run_tables,
    simulate_observations,
)
from .graph import estimate_dimension, generate_graph, graph_spectrum, synthetic_stations
from .mcmc import ChainConfig, cross_validate_alpha, run_chain
from .pinsker import empirical_rate_exponent, pinsker_filter
from .posterior import SmoothnessSpec, conjugate_posterior, export_posterior_rows, prior_variances, select_scale_c
from .seeding import derive_seed
from .uncertainty import ball_coverage

logger = logging.getLogger("graphsmooth")

COMMANDS = ("smooth", "impute", "spectrum", "dimension", "simulate", "table1", "table2", "rate", "coverage")
MODES = ("conjugate", "mcmc", "adaptive", "pinsker")

_CHAIN_DEFAULTS = {f.name: f.default for f in fields(ChainConfig) if f.name != "seed"}
_CHAIN_DEFAULTS["sigma2_prior"] = list(_CHAIN_DEFAULTS["sigma2_prior"])

DEFAULTS = {
    "command": None,
    "seed": 0,
    "out": "out",
    "verbosity": "info",
    "workers": None,
    "inputs": {"graph": None, "panel": None, "coords": None, "percentile": 70.0},
    "model": {
        "mode": "mcmc",
        "beta": 2.0,
        "gamma": 1.0,
        "r": None,
        "Q": 1.0,
        "alpha": None,
        "alpha_grid": [0.5, 1.0, 1.5, 2.0, 3.0],
        "folds": 5,
        "sigma2": None,
        "basis": "haar",
        "level": 0.95,
        "graph_prior": "index",
    },
    "chain": _CHAIN_DEFAULTS,
    "cv_chain": {"n_iter": 1000, "burn_in": 500},
    "scenario": {
        "names": list(TABLE_SCENARIOS),
        "replications": 50,
        "method": "mcmc",
        "T": 16,
        "mask_fraction": 0.5,
        "sigma2_true": 1.0,
        "a": SIMULATION_A,
        "n_iter": 10000,
        "burn_in": 5000,
        "graph_kind": "weighted_threshold",
        "graph_params": {"n": 100, "threshold": 0.8},
    },
    "rate": {
        "n_values": [64, 128, 256, 512],
        "replications": 500,
        "beta": 1.0,
        "gamma": 1.0,
        "r": 1.0,
        "Q": 1.0,
        "estimators": ["pinsker", "bayes"],
    },
    "coverage": {
        "n_values": [64, 128, 256, 512],
        "K": [1.0, 10.0],
        "K_log_n": True,
        "replications": 50,
        "beta": 1.0,
        "gamma": 1.0,
        "r": 1.0,
        "tau": 0.05,
        "mc_draws": 20000,
    },
}

# free-form mappings whose keys are not checked
_OPEN = {("scenario", "graph_params")}


# --------------------------------------------------------------------------
# configuration


def _merge(base: dict, over: dict, path=()) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = ".".join(path + (str(k),))
        if k not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[k], dict) and path + (k,) not in _OPEN:
            if not isinstance(v, dict):
                raise ConfigError(f"config key {where!r} must be a mapping")
            out[k] = _merge(base[k], v, path + (k,))
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(cfg: dict) -> dict:
    """Check types and ranges of an effective configuration; returns it unchanged."""
    if cfg["command"] not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {cfg['command']!r}")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    if cfg["workers"] is not None and (not isinstance(cfg["workers"], int) or cfg["workers"] < 1):
        raise ConfigError("workers must be a positive integer")
    if cfg["verbosity"] not in ("debug", "info", "warning", "error"):
        raise ConfigError("verbosity must be debug, info, warning or error")
    m = cfg["model"]
    if m["mode"] not in MODES:
        raise ConfigError(f"model.mode must be one of {MODES}")
    if not m["alpha_grid"]:
        raise ConfigError("model.alpha_grid must not be empty")
    if cfg["scenario"]["method"] not in MODES + ("index",):
        raise ConfigError("scenario.method is not a known method")
    unknown = set(cfg["scenario"]["names"]) - set(TABLE_SCENARIOS)
    if unknown:
        raise ConfigError(f"unknown scenario names {sorted(unknown)}; known: {sorted(TABLE_SCENARIOS)}")
    chain_config(cfg)  # range checks
    SmoothnessSpec(m["beta"], m["gamma"], m["r"] if m["r"] is not None else 1.0, m["Q"])
    return cfg


def build_config(command: str, file_cfg: dict | None = None, overrides: dict | None = None) -> dict:
    cfg = _merge(DEFAULTS, {"command": command})
    if file_cfg:
        file_cfg = dict(file_cfg)
        if file_cfg.get("command") not in (None, command):
            raise ConfigError(f"config file is for command {file_cfg['command']!r}, not {command!r}")
        file_cfg.pop("command", None)
        cfg = _merge(cfg, file_cfg)
    if overrides:
        cfg = _merge(cfg, overrides)
    return validate_config(cfg)


def chain_config(cfg: dict, seed: int | None = None) -> ChainConfig:
    c = dict(cfg["chain"])
    c["sigma2_prior"] = tuple(c["sigma2_prior"])
    return ChainConfig(seed=cfg["seed"] if seed is None else seed, **c)


def _flag_overrides(ns, command: str) -> dict:
    o: dict = {}

    def put(path, value):
        d = o
        for k in path[:-1]:
            d = d.setdefault(k, {})
        d[path[-1]] = value

    for attr, path in (
        ("seed", ("seed",)),
        ("out", ("out",)),
        ("workers", ("workers",)),
        ("graph", ("inputs", "graph")),
        ("panel", ("inputs", "panel")),
        ("coords", ("inputs", "coords")),
        ("beta", ("model", "beta")),
        ("gamma", ("model", "gamma")),
    ):
        v = getattr(ns, attr, None)
        if v is not None:
            put(path, v)
    if getattr(ns, "mode", None) is not None:
        put(("scenario", "method") if command in ("table1", "table2") else ("model", "mode"), ns.mode)
    if getattr(ns, "alpha_grid", None) is not None:
        put(("model", "alpha_grid"), ns.alpha_grid)
    if getattr(ns, "reps", None) is not None:
        for sec in ("scenario", "rate", "coverage"):
            put((sec, "replications"), ns.reps)
    if getattr(ns, "verbose", 0):
        put(("verbosity",), "debug")
    elif getattr(ns, "quiet", False):
        put(("verbosity",), "warning")
    return o


# --------------------------------------------------------------------------
# commands


def _load_graph(cfg):
    inp = cfg["inputs"]
    if inp["graph"]:
        return io.read_graph(inp["graph"])
    if inp["coords"]:
        return io.graph_from_coords(inp["coords"], inp["percentile"])
    raise ValidationError("this command needs --graph or --coords")


def _smoothness(cfg, s):
    m = cfg["model"]
    fit = None
    r = m["r"]
    if r is None:
        fit = estimate_dimension(s)
        r = fit.r
    return SmoothnessSpec(m["beta"], m["gamma"], r, m["Q"]), fit


def _noise_estimate(Y, s, b) -> float:
    """Median-absolute-deviation noise estimate from the finest temporal half of the coefficients."""
    Z = np.asarray(to_canonical(Y, s, b))
    fine = Z[:, Z.shape[1] // 2 :] if Z.shape[1] > 1 else Z
    sd = float(np.median(np.abs(fine))) / 0.6744897501960817
    return max(sd * sd, 1e-12)


def cmd_spectrum(cfg, out: Path, record: dict):
    g = _load_graph(cfg)
    s = graph_spectrum(g)
    io.write_spectrum(out / "spectrum.csv", s.eigenvalues)
    n = s.n
    fit = estimate_dimension(s)
    lo, hi = fit.fit_range
    rows = []
    for i in range(1, n):
        lam = s.eigenvalues[i]
        ok = lam > 0
        rows.append(
            (i, i / n, lam, math.log(i / n), math.log(lam) if ok else float("nan"), int(lo <= i <= hi and ok))
        )
    io.write_csv(
        out / "dimension_plot.csv", ["index", "index_ratio", "eigenvalue", "log_index_ratio", "log_eigenvalue", "in_fit"], rows
    )
    io.write_json(out / "dimension.json", fit.to_dict())
    record["r"] = fit.r
    print(f"n={n} r={fit.r:.4f}")


def cmd_dimension(cfg, out: Path, record: dict):
    s = graph_spectrum(_load_graph(cfg))
    fit = estimate_dimension(s)
    io.write_json(out / "dimension.json", fit.to_dict())
    record["r"] = fit.r
    print(f"r={fit.r:.6f}")


def cmd_smooth(cfg, out: Path, record: dict, impute: bool = False):
    inp, m = cfg["inputs"], cfg["model"]
    if not inp["panel"]:
        raise ValidationError("this command needs --panel")
    Y = io.read_panel(inp["panel"])
    g = _load_graph(cfg)
    if not g.is_connected():
        raise ValidationError("smoothing requires a connected graph")
    s = graph_spectrum(g)
    if Y.shape[0] != s.n:
        raise ValidationError(f"panel has {Y.shape[0]} rows but the graph has {s.n} nodes")
    b = temporal_basis(Y.shape[1], m["basis"])
    spec, fit = _smoothness(cfg, s)
    if fit is not None:
        io.write_json(out / "dimension.json", fit.to_dict())
    missing = np.isnan(Y)
    if missing.all():
        raise ValidationError("panel has no observed cells")
    mode = m["mode"]
    n, T = Y.shape
    record.update(mode=mode, n=n, T=T, r=spec.r, n_missing=int(missing.sum()))

    if mode == "pinsker":
        sigma2 = m["sigma2"] or _noise_estimate(np.where(missing, np.nanmean(Y), Y), s, b)
        q2 = T * spec.Q**2 / sigma2
        f = pinsker_filter(SmoothnessSpec(spec.beta, spec.gamma, spec.r, math.sqrt(q2)), n, T)
        Yf = np.where(missing, np.nanmean(Y), Y)
        for _ in range(50 if missing.any() else 1):
            F = from_canonical(f.weights * np.asarray(to_canonical(Yf, s, b)), s, b)
            Yf = np.where(missing, F, Y)
        io.write_panel(out / "fitted.csv", F)
        io.write_json(out / "pinsker.json", {"delta": f.delta, "active_set_size": f.active_set_size, "sigma2": sigma2})
    elif mode == "conjugate" and not missing.any():
        choice = select_scale_c(spec, n, T)
        sigma2 = m["sigma2"] or _noise_estimate(Y, s, b)
        Z = to_canonical(Y, s, b)
        pf = conjugate_posterior(Z, prior_variances(spec, choice.c, n, T), sigma2)
        io.write_coefficients(out / "coefficients.csv", Z)
        io.write_csv(out / "posterior.csv", ["i", "j", "mean", "variance"], export_posterior_rows(pf))
        F = from_canonical(pf.mean, s, b)
        io.write_panel(out / "fitted.csv", F)
        io.write_json(out / "regime.json", {**choice.to_dict(), "sigma2": sigma2})
    else:
        chain = chain_config(cfg, derive_seed(cfg["seed"], 4))
        alpha = m["alpha"]
        if mode == "conjugate":
            choice = select_scale_c(spec, n, T)
            io.write_json(out / "regime.json", choice.to_dict())
            chain = replace(chain, fixed_c=choice.c)
            if m["sigma2"]:
                chain = replace(chain, fixed_sigma2=m["sigma2"])
        elif mode == "adaptive":
            chain = replace(chain, adaptive=True)
        elif alpha is None and len(m["alpha_grid"]) > 1 and missing.any():
            cv_cfg = replace(chain, **cfg["cv_chain"])
            cv = cross_validate_alpha(
                Y, missing, s, b, spec, m["alpha_grid"], m["folds"], cv_cfg, derive_seed(cfg["seed"], 3),
                graph_prior=m["graph_prior"],
            )
            alpha = cv.alpha
            io.write_json(out / "cv.json", {"alpha": cv.alpha, "grid": cv.grid, "scores": cv.scores})
        elif alpha is None and len(m["alpha_grid"]) == 1:
            alpha = float(m["alpha_grid"][0])
        tr = run_chain(Y, missing, s, b, spec, chain, alpha=alpha, graph_prior=m["graph_prior"])
        tr.write_ndjson(out / "trace.ndjson")
        io.write_csv(out / "summary.csv", ["node", "time", "mean", "q025", "q975"], tr.summary_rows())
        F = tr.f_mean
        io.write_panel(out / "fitted.csv", F)
        record.update(alpha=alpha, hmc_accept=tr.hmc_accept_rate, sigma2_mean=float(tr.sigma2.mean()))
    if impute:
        io.write_panel(out / "imputed.csv", np.where(missing, F, Y))
    print(f"mode={mode} n={n} T={T} r={spec.r:.3f} missing={int(missing.sum())}")


def cmd_simulate(cfg, out: Path, record: dict):
    sc = cfg["scenario"]
    seed = cfg["seed"]
    params = dict(sc["graph_params"])
    if sc["graph_kind"] == "geometric_distance" and "lat" not in params:
        lat, lon = synthetic_stations(int(params.get("n", 50)), derive_seed(seed, 0))
        params = {"lat": lat, "lon": lon, "percentile": params.get("percentile", 70.0)}
        io.write_coords(out / "coords.csv", lat, lon)
    g = generate_graph(sc["graph_kind"], params, seed=derive_seed(seed, 0))
    s = graph_spectrum(g)
    r = estimate_dimension(s).r
    truth = generate_truth(s, sc["T"], r)
    obs = simulate_observations(truth, sc["sigma2_true"], derive_seed(seed, 1))
    obs = mask_at_random(obs, sc["mask_fraction"], derive_seed(seed, 2))
    io.write_edges(out / "edges.csv", g)
    io.write_panel(out / "truth.csv", truth)
    io.write_panel(out / "full.csv", obs.values)
    io.write_panel(out / "panel.csv", obs.masked_values())
    record.update(n=g.n, T=sc["T"], r=r)
    print(f"simulated n={g.n} T={sc['T']} r={r:.3f} -> {out}")


def _scenarios(cfg):
    sc, m = cfg["scenario"], cfg["model"]
    a = sc["a"]
    chain = replace(chain_config(cfg), a=a, n_iter=sc["n_iter"], burn_in=sc["burn_in"])
    cv_chain = replace(chain, **cfg["cv_chain"])
    return [
        Scenario(
            name=name,
            replications=sc["replications"],
            seed=cfg["seed"],
            method=sc["method"],
            T=sc["T"],
            mask_fraction=sc["mask_fraction"],
            sigma2_true=sc["sigma2_true"],
            beta=m["beta"],
            gamma=m["gamma"],
            alpha_grid=tuple(m["alpha_grid"]),
            folds=m["folds"],
            chain=chain,
            cv_chain=cv_chain,
            level=m["level"],
            basis_kind=m["basis"],
            graph_prior=m["graph_prior"],
            **TABLE_SCENARIOS[name],
        )
        for name in sc["names"]
    ]


def _write_details(path, tr):
    cols = ["scenario", "replication", "r", "alpha", "mse", "mse_truth", "coverage", "coverage_inflated",
            "coverage_missing", "coverage_inflated_missing", "sigma2_mean", "c_mean", "accept_hmc"]
    rows = ([getattr(r, c) for c in cols] for sc in tr.scenarios for r in tr.results[sc.name])
    io.write_csv(path, cols, ([("" if v is None else v) for v in row] for row in rows))


def cmd_table1(cfg, out: Path, record: dict):
    tr = run_tables(_scenarios(cfg), cfg["workers"])
    io.write_csv(out / "table1.csv", ["scenario", "mean_mse", "se", "replications"], tr.table1_summary())
    io.write_csv(out / "table1_replications.csv", ["scenario", "replication", "mse"], tr.table1_rows())
    _write_details(out / "replications_detail.csv", tr)
    record["table_seconds"] = tr.seconds
    for name, mean, se, k in tr.table1_summary():
        print(f"{name:20s} mse={mean:.3f} (se {se:.3f}, {k} reps)")


def cmd_table2(cfg, out: Path, record: dict):
    tr = run_tables(_scenarios(cfg), cfg["workers"])
    io.write_csv(out / "table2.csv", ["scenario", "mode", "K", "coverage", "se", "replications"], tr.table2_rows())
    _write_details(out / "replications_detail.csv", tr)
    record["table_seconds"] = tr.seconds
    for name, mode, K, cov, se, k in tr.table2_rows():
        print(f"{name:20s} {mode:10s} K={K:.3f} coverage={cov:.3f} (se {se:.3f})")


def cmd_rate(cfg, out: Path, record: dict):
    rc = cfg["rate"]
    spec = SmoothnessSpec(rc["beta"], rc["gamma"], rc["r"], rc["Q"])
    report = {}
    for est in rc["estimators"]:
        rep = empirical_rate_exponent(spec, tuple(rc["n_values"]), rc["replications"], cfg["seed"], est)
        io.write_csv(out / f"rate_{est}.csv", ["n", "mean_risk", "se"], rep.rows())
        report[est] = {**rep.to_dict(), "decreasing": rep.decreasing}
        print(f"{est:8s} slope={rep.fitted_slope:.3f} theory={rep.theoretical_slope:.3f}")
    io.write_json(out / "rate.json", report)


def cmd_coverage(cfg, out: Path, record: dict):
    cc = cfg["coverage"]
    spec = SmoothnessSpec(cc["beta"], cc["gamma"], cc["r"])
    rows = []
    for k, n in enumerate(cc["n_values"]):
        for K0 in cc["K"]:
            K = K0 * math.log(n) if cc["K_log_n"] and K0 != 1.0 else K0
            res = ball_coverage(spec, n, K, cc["replications"], derive_seed(cfg["seed"], k), cc["tau"], cc["mc_draws"])
            rows.append((f"ball_n{n}", "ball", K, res["coverage"], res["se"], res["replications"]))
            print(f"n={n:5d} K={K:8.3f} coverage={res['coverage']:.3f} q_tau={res['q_tau']:.4g}")
    io.write_csv(out / "coverage.csv", ["scenario", "mode", "K", "coverage", "se", "replications"], rows)


HANDLERS = {
    "smooth": cmd_smooth,
    "impute": lambda cfg, out, rec: cmd_smooth(cfg, out, rec, impute=True),
    "spectrum": cmd_spectrum,
    "dimension": cmd_dimension,
    "simulate": cmd_simulate,
    "table1": cmd_table1,
    "table2": cmd_table2,
    "rate": cmd_rate,
    "coverage": cmd_coverage,
}


# --------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _float_list(text: str):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--graph", help="edge list (i,j,weight) or dense adjacency CSV")
    common.add_argument("--coords", help="station coordinates CSV (id,lat,lon)")
    common.add_argument("--panel", help="observation panel CSV; empty fields are missing")
    common.add_argument("--mode", choices=MODES)
    common.add_argument("--beta", type=float)
    common.add_argument("--gamma", type=float)
    common.add_argument("--alpha-grid", type=_float_list, dest="alpha_grid")
    common.add_argument("--reps", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")
    p = _Parser(prog="graphsmooth", description="Bayesian smoothing of functional data on graphs")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "smooth": "posterior fit of a panel",
        "impute": "fill missing panel cells",
        "spectrum": "Laplacian eigenvalues and dimension plot data",
        "dimension": "estimate the graph dimension r",
        "simulate": "generate a synthetic graph and panel",
        "table1": "predictive MSE over simulated replications",
        "table2": "interval coverage over simulated replications",
        "rate": "empirical risk-rate slopes",
        "coverage": "credible-ball coverage in the sequence model",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def run(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    file_cfg = io.read_yaml(ns.config) if ns.config else None
    cfg = build_config(ns.command, file_cfg, _flag_overrides(ns, ns.command))
    logging.basicConfig(level=getattr(logging, cfg["verbosity"].upper()), format="%(levelname)s %(name)s: %(message)s")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    io.write_yaml(out / "config.yaml", cfg)
    record: dict = {}
    t0 = time.perf_counter()
    HANDLERS[cfg["command"]](cfg, out, record)
    io.write_json(out / "manifest.json", manifest(cfg, time.perf_counter() - t0, results=record))
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except NumericalError as e:
        print(f"graphsmooth: numerical failure: {e}", file=sys.stderr)
        return 2
    except (ValidationError, OSError) as e:
        print(f"graphsmooth: error: {e}", file=sys.stderr)
        return 1
    except GraphSmoothError as e:  # pragma: no cover - every subclass is one of the above
        print(f"graphsmooth: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
