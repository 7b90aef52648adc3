import json

import pytest

from degendens import cli
from degendens.config import ConfigError, RunConfig, load_config

SPEC = ["--spec", "radial", "--n", "1", "--k", "2"]


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(data if isinstance(data, str) else json.dumps(data))
    return str(p)


def test_minimal_file_gets_defaults(tmp_path):
    cfg = load_config(write(tmp_path, {"spec": {"family": "radial", "n": 1, "k": 2}}))
    assert cfg.mc.steps == 512 and cfg.mc.antithetic is True and cfg.bridge_form == "endpoint"
    assert cfg.thresholds == {"K_large": 5.0, "Cbar": 1.0, "K_small": 0.1}


def test_radial_odd_k_rejected(tmp_path):
    with pytest.raises(ConfigError, match="spec: .*even"):
        load_config(write(tmp_path, {"spec": {"family": "radial", "n": 1, "k": 3}}))


def test_effective_config_roundtrip(tmp_path):
    cfg = load_config(write(tmp_path, {
        "spec": {"family": "component", "n": 2, "k": 3},
        "sweep": [{"t": 1, "x": [0, 0, 0], "xi": [1, 1, -1]}, {"t": 2, "x": [1, 0, 0], "xi": [0, 1, 5]}],
        "mc": {"paths": 5000, "seed": 3}, "bandwidth": 0.01,
    }))
    assert RunConfig.from_json(cfg.to_json()) == cfg
    assert load_config(write(tmp_path, cfg.to_json(), "again.json")) == cfg


@pytest.mark.parametrize("data,field", [
    ("{not json", "malformed"),
    ({"spec": {"family": "radial", "n": 1}}, "spec"),
    ({"spec": {"family": "radial", "n": 1, "k": 2}, "mc": {"paths": "many"}}, "mc.paths"),
    ({"spec": {"family": "radial", "n": 1, "k": 2}, "mc": {"antithetic": 1}}, "mc.antithetic"),
    ({"spec": {"family": "radial", "n": 1, "k": 2}, "query": {"t": 1, "x": [0, 0, 0], "xi": [0, 0, 1]}}, "query.x"),
    ({"spec": {"family": "radial", "n": 1, "k": 2}, "query": {"t": -1, "x": [0, 0], "xi": [0, 1]}}, "query.t"),
    ({"spec": {"family": "radial", "n": 1, "k": 2}, "thresholds": {"Cbar": 0}}, "thresholds.Cbar"),
    ({"spec": {"family": "radial", "n": 1, "k": 2}, "bridge_form": "euler"}, "bridge_form"),
    ({"spec": {"family": "radial", "n": 1, "k": 2}, "schema_version": 2}, "schema_version"),
    ({"spec": {"family": "radial", "n": 1, "k": 2}, "extra": 1}, "extra"),
])
def test_field_level_errors(tmp_path, data, field):
    with pytest.raises(ConfigError, match=field):
        load_config(write(tmp_path, data))


def test_flags_override_file(tmp_path):
    path = write(tmp_path, {"spec": {"family": "radial", "n": 1, "k": 2}, "mc": {"paths": 5000, "seed": 1}})
    args = cli.build_parser().parse_args(["density", "--config", path, "--seed", "9", "--t", "1",
                                          "--x", "0,0", "--xi", "0,1"])
    cfg = cli._resolve(args)
    assert cfg.mc.seed == 9 and cfg.mc.paths == 5000 and cfg.query.t == 1.0


def run(capsys, argv):
    code = cli.run_command(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_density_command_is_deterministic(capsys, tmp_path):
    argv = ["density", *SPEC, "--t", "1", "--x", "0,0", "--xi", "0,0.5", "--paths", "100000", "--seed", "7"]
    code, first, _ = run(capsys, argv)
    assert code == 0
    doc = json.loads(first)
    assert doc["schema_version"] == 1 and doc["config"]["mc"]["seed"] == 7
    res = doc["result"]
    assert res["value"] > 0 and res["ci"][0] < res["value"] < res["ci"][1]
    assert run(capsys, argv)[1] == first
    assert run(capsys, argv + ["--workers", "4"])[1] == first


def test_control_command_writes_artifacts(capsys, tmp_path):
    out = tmp_path / "out"
    code, text, _ = run(capsys, ["control", *SPEC, "--t", "1", "--x", "0,0", "--xi", "0.5,0.2", "--out", str(out)])
    assert code == 0
    assert json.loads(text)["result"]["endpoint_error"] < 1e-9
    assert (out / "degendens.control.csv").read_text().startswith("s,x1,xdeg,omega1\n")
    eff = load_config(str(out / "degendens.config.json"))
    assert eff.query.end.deg == 0.2
    assert json.loads((out / "degendens.control.json").read_text()) == json.loads(text)


@pytest.mark.parametrize("argv", [["simulate", *SPEC, "--t", "1", "--x", "0.5,0", "--xi", "0,0", "--paths", "5000"],
                                  ["sweep", *SPEC, "--t", "1", "--x", "1,0", "--xi", "1,0"],
                                  ["bounds", *SPEC, "--t", "1", "--x", "0,0", "--xi", "0,1"],
                                  ["bounds", *SPEC, "--t", "1", "--x", "0,0", "--xi", "0,1", "--empirical",
                                   "--paths", "20000"]])
def test_other_commands(capsys, argv):
    code, text, _ = run(capsys, argv)
    assert code == 0
    doc = json.loads(text)
    assert doc["command"] == argv[0] and "config" in doc


def test_sweep_from_config(capsys, tmp_path):
    path = write(tmp_path, {"spec": {"family": "radial", "n": 1, "k": 2},
                            "sweep": [{"t": t, "x": [1, 0], "xi": [2, 0]} for t in (0.5, 1, 2)]})
    code, text, _ = run(capsys, ["sweep", "--config", path])
    rows = json.loads(text)["result"]["rows"]
    assert code == 0 and len(rows) == 3


@pytest.mark.parametrize("argv", [["nope"], ["density", "--bogus"], [],
                                  ["density", *SPEC, "--t", "1", "--x", "0,0"],
                                  ["density", "--spec", "radial", "--n", "1", "--k", "3", "--t", "1",
                                   "--x", "0,0", "--xi", "0,1"],
                                  ["control", *SPEC, "--t", "1", "--x", "0,0", "--xi", "0,-1"],
                                  ["density", *SPEC, "--t", "1", "--x", "0,0", "--xi", "0,1", "--workers", "0"],
                                  ["verify", "--criteria", "13"]])
def test_invalid_input_exit_1(capsys, argv):
    code, _, err = run(capsys, argv)
    assert code == 1 and err


def test_numerical_failure_exit_2(capsys, tmp_path, monkeypatch):
    # densities no envelope can hold force the fit to fail
    monkeypatch.setattr(cli.density, "transition_density", lambda *a, **kw: (1e300, 0.0))
    path = write(tmp_path, {"spec": {"family": "radial", "n": 1, "k": 2},
                            "sweep": [{"t": 1, "x": [0, 0], "xi": [0, 1 + i]} for i in range(12)]})
    code, _, err = run(capsys, ["bounds", "--config", path, "--fit"])
    assert code == 2 and "numerical failure" in err and "worst violators" in err


def test_verify_subset(capsys):
    code, text, err = run(capsys, ["verify", "--suite", "core", "--criteria", "10", "--no-determinism"])
    assert code == 0
    doc = json.loads(text)
    assert doc["result"]["passed"] and "criterion 10" in err
