import json
import subprocess
import sys

import numpy as np
import pytest
import yaml
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from graphsmooth import ConfigError, ValidationError, generate_graph
from graphsmooth import io
from graphsmooth.cli import DEFAULTS, build_config, main


@given(arrays(float, (4, 3), elements=st.floats(-1e6, 1e6) | st.just(np.nan)))
def test_panel_round_trip(tmp_path_factory, Y):
    # fully missing rows and columns must survive too
    p = tmp_path_factory.mktemp("p") / "panel.csv"
    io.write_panel(p, Y)
    back = io.read_panel(p)
    np.testing.assert_array_equal(np.isnan(back), np.isnan(Y))
    np.testing.assert_array_equal(back[~np.isnan(Y)], Y[~np.isnan(Y)])


def test_graph_round_trip_edges_and_dense(tmp_path):
    g = generate_graph("weighted_threshold", {"n": 15}, seed=2)
    io.write_edges(tmp_path / "e.csv", g)
    np.testing.assert_array_equal(io.read_graph(tmp_path / "e.csv").weights, g.weights)
    io.write_panel(tmp_path / "d.csv", g.weights)
    np.testing.assert_array_equal(io.read_graph(tmp_path / "d.csv").weights, g.weights)


def test_coords_and_coefficients(tmp_path):
    io.write_coords(tmp_path / "c.csv", [35.0, 35.5, 36.0], [-80.0, -79.0, -78.5], ids=["a", "b", "c"])
    ids, lat, lon = io.read_coords(tmp_path / "c.csv")
    assert ids == ["a", "b", "c"] and lat[1] == 35.5
    C = np.arange(6.0).reshape(2, 3)
    io.write_coefficients(tmp_path / "k.csv", C)
    np.testing.assert_array_equal(io.read_coefficients(tmp_path / "k.csv"), C)


def test_io_errors(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2\n3\n")
    with pytest.raises(ValidationError, match="expected 2 fields"):
        io.read_panel(tmp_path / "bad.csv")
    (tmp_path / "nan.csv").write_text("1,x\n")
    with pytest.raises(ValidationError, match="not a number"):
        io.read_panel(tmp_path / "nan.csv")
    with pytest.raises(ValidationError, match="not found"):
        io.read_panel(tmp_path / "missing.csv")
    (tmp_path / "y.yaml").write_text("- 1\n")
    with pytest.raises(ConfigError):
        io.read_yaml(tmp_path / "y.yaml")


def test_config_precedence_and_unknown_keys():
    cfg = build_config("smooth", {"model": {"beta": 3.0, "gamma": 0.5}}, {"model": {"beta": 1.5}})
    assert cfg["model"]["beta"] == 1.5 and cfg["model"]["gamma"] == 0.5
    assert cfg["chain"]["n_iter"] == DEFAULTS["chain"]["n_iter"]
    with pytest.raises(ConfigError, match="model.betta"):
        build_config("smooth", {"model": {"betta": 1.0}})
    with pytest.raises(ConfigError):
        build_config("smooth", {"command": "rate"})
    with pytest.raises(ConfigError):
        build_config("smooth", {"model": {"mode": "exact"}})


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--out", str(out), "--seed", "3", "--config", str(_small_cfg(out))]) == 0
    return out


def _small_cfg(d):
    p = d / "small.yaml"
    p.write_text(yaml.safe_dump({
        "scenario": {"graph_kind": "erdos_renyi", "graph_params": {"n": 20, "p": 0.3}, "T": 8,
                     "n_iter": 200, "burn_in": 100, "replications": 2, "names": ["erdos_renyi"]},
        "chain": {"n_iter": 200, "burn_in": 100},
        "cv_chain": {"n_iter": 60, "burn_in": 30},
        "model": {"alpha_grid": [0.5, 2.0], "folds": 2},
    }))
    return p


def test_simulate_outputs(simulated):
    for name in ("edges.csv", "truth.csv", "full.csv", "panel.csv", "config.yaml", "manifest.json"):
        assert (simulated / name).exists()
    Y = io.read_panel(simulated / "panel.csv")
    assert Y.shape == (20, 8) and np.isnan(Y).sum() == 80
    assert json.loads((simulated / "manifest.json").read_text())["config"]["seed"] == 3


@pytest.mark.parametrize("mode", ["mcmc", "conjugate", "adaptive", "pinsker"])
def test_impute_modes(simulated, tmp_path, mode):
    args = ["impute", "--graph", str(simulated / "edges.csv"), "--panel", str(simulated / "panel.csv"),
            "--out", str(tmp_path), "--mode", mode, "--config", str(_small_cfg(tmp_path))]
    assert main(args) == 0
    Y = io.read_panel(simulated / "panel.csv")
    imp = io.read_panel(tmp_path / "imputed.csv")
    assert not np.isnan(imp).any()
    np.testing.assert_array_equal(imp[~np.isnan(Y)], Y[~np.isnan(Y)])


def test_smooth_complete_panel_conjugate(simulated, tmp_path):
    assert main(["smooth", "--graph", str(simulated / "edges.csv"), "--panel", str(simulated / "full.csv"),
                 "--out", str(tmp_path), "--mode", "conjugate"]) == 0
    assert (tmp_path / "posterior.csv").exists() and (tmp_path / "regime.json").exists()
    C = io.read_coefficients(tmp_path / "coefficients.csv")
    assert C.shape == (20, 8)


def test_spectrum_and_dimension(simulated, tmp_path):
    assert main(["spectrum", "--graph", str(simulated / "edges.csv"), "--out", str(tmp_path)]) == 0
    head = (tmp_path / "spectrum.csv").read_text().splitlines()[0]
    assert head == "index,eigenvalue"
    fit = json.loads((tmp_path / "dimension.json").read_text())
    assert set(fit) == {"r", "slope", "residual", "fit_range"}


def test_tables_byte_identical_for_same_seed(tmp_path):
    cfg = _small_cfg(tmp_path)
    data = yaml.safe_load(cfg.read_text())
    data["scenario"]["method"] = "index"
    cfg.write_text(yaml.safe_dump(data))
    for d in ("a", "b"):
        assert main(["table1", "--out", str(tmp_path / d), "--seed", "1", "--config", str(cfg)]) == 0
    assert (tmp_path / "a" / "table1.csv").read_bytes() == (tmp_path / "b" / "table1.csv").read_bytes()
    assert main(["table2", "--out", str(tmp_path / "c"), "--seed", "1", "--config", str(cfg)]) == 0
    rows = (tmp_path / "c" / "table2.csv").read_text().splitlines()
    assert rows[0] == "scenario,mode,K,coverage,se,replications" and len(rows) == 3


def test_rate_and_coverage_commands(tmp_path):
    cfg = tmp_path / "r.yaml"
    cfg.write_text(yaml.safe_dump({"rate": {"n_values": [16, 32, 64], "replications": 3},
                                   "coverage": {"n_values": [32], "replications": 3, "mc_draws": 2000}}))
    assert main(["rate", "--out", str(tmp_path), "--config", str(cfg)]) == 0
    assert set(json.loads((tmp_path / "rate.json").read_text())) == {"pinsker", "bayes"}
    assert main(["coverage", "--out", str(tmp_path), "--config", str(cfg)]) == 0
    assert (tmp_path / "coverage.csv").read_text().startswith("scenario,mode,K,coverage")


def test_exit_codes(tmp_path, capsys):
    assert main(["smooth", "--graph", str(tmp_path / "nope.csv"), "--panel", "x.csv", "--out", str(tmp_path)]) == 1
    assert "not found" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("model:\n  betta: 1\n")
    assert main(["dimension", "--config", str(bad), "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as e:
        main(["smooth", "--frobnicate"])
    assert e.value.code == 1


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "graphsmooth.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "impute" in out.stdout
