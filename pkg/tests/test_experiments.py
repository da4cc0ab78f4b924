import math
from dataclasses import replace

import numpy as np
import pytest

from graphsmooth import ChainConfig, ValidationError, generate_graph, graph_spectrum
from graphsmooth.experiments import (
    Scenario,
    TABLE_SCENARIOS,
    borrowing_strength,
    default_workers,
    generate_truth,
    manifest,
    mask_at_random,
    prediction_mse,
    run_replication,
    run_scenario,
    run_tables,
    simulate_observations,
    table_scenarios,
)

FAST = ChainConfig(n_iter=300, burn_in=150, a=0.3)


def fast(name="erdos_renyi", **kw):
    base = dict(replications=2, chain=FAST, cv_chain=ChainConfig(n_iter=80, burn_in=40, a=0.3), alpha_grid=(0.5, 2.0), folds=2)
    base.update(kw)
    return Scenario(name=name, **TABLE_SCENARIOS[name], **base)


def test_mask_count_exact():
    obs = mask_at_random(np.zeros((100, 16)), 0.5, seed=1)
    assert obs.missing.sum() == 800
    again = mask_at_random(np.zeros((100, 16)), 0.5, seed=1)
    np.testing.assert_array_equal(obs.missing, again.missing)
    with pytest.raises(ValidationError):
        mask_at_random(np.zeros((2, 2)), 1.0, seed=0)


def test_truth_constant_over_time_and_mean_zero():
    s = graph_spectrum(generate_graph("erdos_renyi", {"n": 30}, seed=0))
    f = generate_truth(s, 16, 1.5)
    np.testing.assert_allclose(f, np.repeat(f[:, :1], 16, axis=1))
    # no constant eigenvector component
    assert abs(f[:, 0].sum()) < 1e-10


def test_noise_level():
    obs = simulate_observations(np.zeros((200, 50)), 2.0, seed=3)
    assert np.var(obs.values) == pytest.approx(2.0, rel=0.03)
    assert not obs.missing.any()


def test_prediction_mse():
    m = np.array([[True, False]])
    assert prediction_mse([[1.0, 5.0]], [[3.0, 0.0]], m) == 4.0
    with pytest.raises(ValidationError):
        prediction_mse([[1.0]], [[1.0]], [[False]])


def test_table_scenarios_protocol():
    scs = table_scenarios()
    assert [s.name for s in scs] == list(TABLE_SCENARIOS)
    assert [s.n for s in scs] == [100, 50, 50]
    assert all(s.T == 16 and s.mask_fraction == 0.5 and s.replications == 50 for s in scs)
    with pytest.raises(ValidationError):
        Scenario("x", "erdos_renyi", {"n": 10}, method="magic")


@pytest.mark.filterwarnings("ignore:beta=")
@pytest.mark.parametrize("method", ["mcmc", "conjugate", "adaptive", "pinsker", "index"])
def test_replication_methods(method):
    res = run_replication(fast(method=method), 0)
    assert math.isfinite(res.mse) and res.mse > 0
    if method == "pinsker":
        assert math.isnan(res.coverage)
    else:
        assert 0 <= res.coverage <= res.coverage_inflated <= 1
    assert (res.alpha is not None) == (method == "mcmc")


def test_replications_deterministic_and_worker_independent():
    sc = fast(method="index")
    a = run_scenario(sc, workers=1)
    b = run_scenario(sc, workers=2)
    assert [r.mse for r in a] == [r.mse for r in b]
    assert a[0].mse != a[1].mse


def test_tables_share_replications():
    tr = run_tables([fast(method="index", replications=3)], workers=1)
    (name, mean, se, k), = tr.table1_summary()
    assert k == 3 and mean == pytest.approx(np.mean([r.mse for r in tr.results[name]]))
    rows = list(tr.table2_rows())
    assert [r[1] for r in rows] == ["equal_tail", "inflated"]
    assert rows[1][2] == pytest.approx(0.8 * math.log(50))
    assert set(tr.coverage()) == {(name, "equal_tail"), (name, "inflated")}


def test_borrowing_strength_graph_beats_independent():
    out = borrowing_strength(fast("cluster", method="index", replications=3), workers=1)
    assert out["graph"][0] < out["independent"][0]


def test_default_workers_env(monkeypatch):
    monkeypatch.setenv("GRAPHSMOOTH_THREADS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("GRAPHSMOOTH_THREADS", "zero")
    with pytest.raises(ValidationError):
        default_workers()


def test_manifest_fields():
    m = manifest({"seed": 1}, 2.5)
    assert {"version", "kernel_backend", "numpy", "python", "seconds"} <= set(m)
