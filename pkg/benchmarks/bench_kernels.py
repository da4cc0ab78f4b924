"""Compare the compiled and pure-Python sampler kernels.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. Each kernel is
checked for agreement between the two backends before it is timed; a full
chain sweep is timed under both backends as well.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from graphsmooth import _kernels_py as py

try:
    from graphsmooth import _kernels_ext as ext
except ImportError:
    ext = None


def cases(rng):
    n, T = 100, 16
    Z = np.ascontiguousarray(rng.standard_normal((n, T)))
    d2 = np.ascontiguousarray(rng.uniform(0.01, 5.0, (n, T)))
    eps = np.ascontiguousarray(rng.standard_normal((n, T)))
    inv_base = np.ascontiguousarray(rng.uniform(0.5, 2.0, (n, T)))
    table = np.ascontiguousarray(rng.standard_normal((n, T)))
    steps = 100_000
    dirs = rng.integers(0, 4, steps).astype(np.int64)
    log_u = np.log(rng.uniform(size=steps))

    def walk(mod):
        counts = np.zeros((n, T), dtype=np.int64)
        return mod.adaptive_walk(table, 5, 5, dirs, log_u, counts), counts

    return {
        "conjugate_draw (100x16)": lambda m: m.conjugate_draw(Z, d2, 0.7, eps, inv_base),
        "log_scale_target": lambda m: m.log_scale_target(0.3, 1500.0, 1600.0, 1.4, 0.3),
        "hmc_transition (10 leapfrog)": lambda m: m.hmc_transition(0.3, 1500.0, 1600.0, 1.4, 0.3, 0.05, 10, 0.4, -0.2),
        "adaptive_walk (1e5 steps)": walk,
    }


def agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(agree(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.allclose(a, b, rtol=1e-12, atol=1e-12)
    if isinstance(a, float):
        return np.isclose(a, b, rtol=1e-12, atol=1e-12)
    return a == b


def time_chain(backend: str, n_iter: int) -> float:
    env = dict(os.environ, GRAPHSMOOTH_PURE_PYTHON="1" if backend == "python" else "0")
    code = f"""
import time, numpy as np
from graphsmooth import ChainConfig, SmoothnessSpec, generate_graph, graph_spectrum, run_chain, temporal_basis, BACKEND
assert BACKEND == {backend!r}, BACKEND
s = graph_spectrum(generate_graph("erdos_renyi", {{"n": 50}}, seed=1))
Y = np.random.default_rng(0).standard_normal((50, 16))
mask = np.random.default_rng(1).uniform(size=Y.shape) < 0.5
t = time.perf_counter()
run_chain(Y, mask, s, temporal_basis(16), SmoothnessSpec(2, 1, 3), ChainConfig(n_iter={n_iter}, burn_in={n_iter // 2}))
print(time.perf_counter() - t)
"""
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--chain-iter", type=int, default=2000)
    args = ap.parse_args(argv)
    if ext is None:
        print("compiled extension not built; only the Python backend is available")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'python [us]':>12s} {'cython [us]':>12s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        if not agree(fn(py), fn(ext)):
            print(f"{name}: backends disagree")
            return 1
        number = 3 if "walk" in name else 200
        tp = min(timeit.repeat(lambda: fn(py), number=number, repeat=args.repeat)) / number * 1e6
        te = min(timeit.repeat(lambda: fn(ext), number=number, repeat=args.repeat)) / number * 1e6
        print(f"{name:32s} {tp:12.1f} {te:12.1f} {tp / te:8.1f}x")
    tp, te = time_chain("python", args.chain_iter), time_chain("cython", args.chain_iter)
    print(f"{'run_chain (' + str(args.chain_iter) + ' sweeps)':32s} {tp * 1e6:12.0f} {te * 1e6:12.0f} {tp / te:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
