import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from gclab.cli import main
from gclab.config import ConfigError, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL_SCALAR = {
    "model": {"scalar": {"map": {"kind": "tanh", "kappa": 2.0}, "grid": {"n": 128}}},
    "scgf": {"method": "oracle", "window": [-1.0, 2.0], "step": 0.05, "r_max": 0.5, "r_step": 0.01},
    "output": {"tag": "small"},
}


def write(tmp_path, data, name="run.conf"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


# -- schema ---------------------------------------------------------------------

@pytest.mark.parametrize("name", ["ar1.conf", "tanh.conf", "burgers.conf", "burgers_quick.conf"])
def test_shipped_configs_parse(name):
    cfg = load_config(CONFIGS / name)
    assert parse_config(yaml.safe_load(cfg.resolved_yaml())) == cfg


@pytest.mark.parametrize(
    "patch, path",
    [
        ({"foo": 1}, "foo"),
        ({"noise": {"r": 0.5}}, "noise.r"),
        ({"noise": {"beta": 2.5}}, "noise.beta"),
        ({"run": {"k": 0}}, "run.k"),
        ({"scgf": {"method": "cloning", "alphas": [0.5], "population": 10}}, "scgf.population"),
        ({"model": {"burgers": {"nu": -1.0}}}, "model.burgers.nu"),
        ({"model": {"scalar": {"grid": {"n": 16}}}}, "model.scalar.grid.n"),
    ],
)
def test_schema_errors_name_path(patch, path):
    data = {"model": {"burgers": {}}}
    data.update(patch)
    with pytest.raises(ConfigError) as e:
        parse_config(data)
    assert str(e.value).startswith(path + ":")


def test_model_exactly_one():
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config({"model": {}})
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config({"model": {"burgers": {}, "scalar": {}}})


def test_scgf_grid_required():
    with pytest.raises(ConfigError, match="alphas"):
        parse_config({"model": {"burgers": {}}, "scgf": {"method": "naive"}})


def test_alpha_grid():
    cfg = parse_config(SMALL_SCALAR)
    g = cfg.scgf.alpha_grid()
    assert g[0] == -1.0 and g[-1] == 2.0 and g.size == 61
    assert 0.5 in g


def test_bad_yaml(tmp_path):
    p = tmp_path / "bad.conf"
    p.write_text("model: [unclosed")
    with pytest.raises(ConfigError):
        load_config(p)


# -- CLI ------------------------------------------------------------------------

def test_unknown_key_exit_2(tmp_path, capsys):
    p = write(tmp_path, {**SMALL_SCALAR, "foo": 1})
    assert main(["oracle", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "foo" in capsys.readouterr().err


def test_missing_scgf_exit_2(tmp_path, capsys):
    data = {k: v for k, v in SMALL_SCALAR.items() if k != "scgf"}
    p = write(tmp_path, data)
    assert main(["rate", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "scgf" in capsys.readouterr().err


def test_oracle_outputs(tmp_path):
    p = write(tmp_path, SMALL_SCALAR)
    assert main(["oracle", "--config", str(p), "--out", str(tmp_path)]) == 0
    d = tmp_path / "oracle" / "small"
    summary = json.loads((d / "summary.json").read_text())
    assert set(summary) >= {"ep", "h_plus", "h_minus", "db_residual", "duality_residual", "tau_q"}
    assert summary["ep"] > 10 * summary["tau_q"]
    rows = (d / "rho.csv").read_text().splitlines()
    assert rows[0] == "node,rho" and len(rows) == 129
    assert parse_config(yaml.safe_load((d / "config.resolved").read_text())) == parse_config(SMALL_SCALAR)


def test_rate_reproducible(tmp_path):
    p = write(tmp_path, SMALL_SCALAR)
    outs = []
    for sub in ("a", "b"):
        assert main(["rate", "--config", str(p), "--out", str(tmp_path / sub)]) == 0
        d = tmp_path / sub / "rate" / "small"
        outs.append({f.name: f.read_bytes() for f in sorted(d.iterdir())})
    assert outs[0] == outs[1]
    verdict = json.loads(outs[0]["verdict.json"])
    assert verdict["pass"]
    assert outs[0]["scgf.csv"].decode().startswith("alpha,scgf,stderr,provenance\n")


def test_scgf_command(tmp_path):
    p = write(tmp_path, SMALL_SCALAR)
    assert main(["scgf", "--config", str(p), "--out", str(tmp_path)]) == 0
    text = (tmp_path / "scgf" / "small" / "scgf.csv").read_text()
    vals = np.array([float(r.split(",")[1]) for r in text.splitlines()[1:]])
    assert vals.size == 61 and vals.min() < 0


def test_untagged_output_dir_is_digest(tmp_path):
    data = {**SMALL_SCALAR, "output": {}}
    p = write(tmp_path, data)
    assert main(["oracle", "--config", str(p), "--out", str(tmp_path)]) == 0
    (sub,) = (tmp_path / "oracle").iterdir()
    assert len(sub.name) == 16


@pytest.mark.parametrize("name", ["ar1.conf", "tanh.conf"])
def test_verify_scalar_configs(tmp_path, name):
    assert main(["verify", "--config", str(CONFIGS / name), "--out", str(tmp_path)]) == 0
    (d,) = (tmp_path / "verify").iterdir()
    summary = json.loads((d / "summary.json").read_text())
    assert summary["pass"] and summary["failures"] == []


def test_simulate_burgers_quick(tmp_path):
    assert main(["simulate", "--config", str(CONFIGS / "burgers_quick.conf"), "--out", str(tmp_path), "--seed", "2"]) == 0
    d = tmp_path / "simulate" / "burgers-quick"
    summary = json.loads((d / "summary.json").read_text())
    assert summary["seeds"] == [[2, 0]]
    assert summary["ci95"][0] < summary["ep_mean"] < summary["ci95"][1]
    assert summary["q_hat"] < 1
    rows = (d / "trajectory_0.csv").read_text().splitlines()
    assert len(rows) == 3002
    assert "seed: 2" in (d / "config.resolved").read_text()
