import json
import subprocess
from importlib import resources

import pytest

from pqflow import cli
from pqflow.experiments import ConfigError, ExperimentConfig, SuiteReport, load_manifest

NEGATIVE = str(resources.files("pqflow") / "data" / "negative_control.json")
SMALL_FLOW = {"kind": "flow", "name": "small-flow", "seed": 3,
              "params": {"n_metrics": 2, "starts": [[-0.5, 0.0], [-0.4, 1.0]]}}


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.mark.parametrize("doc, field", [
    ({"kind": "nope"}, "kind"),
    ({"kind": "flow", "seed": -1}, "seed"),
    ({"kind": "flow", "colour": 1}, "colour"),
    ({"kind": "flow", "params": {"delta2": 1}}, "params.delta2"),
    ({"kind": "flow", "tolerances": {"rtol": 0}}, "tolerances.rtol"),
    ({"kind": "flow", "params": {"starts": [[0.5, 0.0]]}}, "params.starts"),
    ({"kind": "annulus-cylinder", "params": {"r_minus": 2.0, "r_plus": 1.0}}, "params.r_plus"),
    ({"kind": "plane", "params": {"start": [0.0, None, 0.5]}}, "params.start"),
    ({"kind": "identities", "params": {"n": [4]}}, "params.n"),
    ({"kind": "energy", "params": {"case": "sine"}}, "params.case"),
])
def test_config_errors_name_the_field(doc, field):
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict(doc)
    assert exc.value.field == field


def test_cli_bad_config_exit_2(tmp_path, capsys):
    path = write(tmp_path, "bad.json", {"kind": "flow", "tolerances": {"band": -1}})
    assert cli.main(["run", "--config", path, "--out", str(tmp_path)]) == 2
    assert "tolerances.band" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2


def test_flags_override_config(tmp_path):
    path = write(tmp_path, "m.json", [dict(SMALL_FLOW, tolerances={"rtol": 1e-6})])
    (cfg,) = load_manifest(path, {"seed": 11, "rtol": 1e-7, "bins": 12, "out": str(tmp_path / "o")})
    assert cfg.seed == 11 and cfg.tolerances["rtol"] == 1e-7 and cfg.tolerances["bins"] == 12
    assert cfg.out == tmp_path / "o" / "small-flow"


def test_duplicate_names_rejected(tmp_path):
    path = write(tmp_path, "m.json", [SMALL_FLOW, SMALL_FLOW])
    with pytest.raises(ConfigError):
        load_manifest(path, {})


def test_rng_streams_split_by_name():
    a = ExperimentConfig.from_dict(dict(SMALL_FLOW, name="a")).rng().random(3)
    b = ExperimentConfig.from_dict(dict(SMALL_FLOW, name="b")).rng().random(3)
    a2 = ExperimentConfig.from_dict(dict(SMALL_FLOW, name="a")).rng().random(3)
    assert (a == a2).all() and not (a == b).any()


def test_empty_manifest(tmp_path, capsys):
    path = write(tmp_path, "empty.json", [])
    assert cli.main(["suite", path]) == 0
    assert SuiteReport([]).exit_code == 0


def test_negative_control_manifest(tmp_path):
    summary = tmp_path / "summary.json"
    code = cli.main(["suite", NEGATIVE, "--out", str(tmp_path / "o"), "--summary", str(summary)])
    assert code == 1
    doc = json.loads(summary.read_text())
    status = {e["name"]: e["passed"] for e in doc["experiments"]}
    assert status == {"trivial": True, "arctan-truncated": False, "identities-n1": True}


def test_overwrite_refused(tmp_path, capsys):
    path = write(tmp_path, "t.json", {"kind": "energy", "name": "t", "params": {"case": "trivial", "s_max": 5,
                                                                                "residual": False}})
    out = str(tmp_path / "o")
    assert cli.main(["run", "--config", path, "--out", out]) == 0
    assert cli.main(["run", "--config", path, "--out", out]) == 2
    assert "force-overwrite" in capsys.readouterr().err
    assert cli.main(["run", "--config", path, "--out", out, "--force-overwrite"]) == 0


def test_identities_exit_0(tmp_path):
    assert cli.main(["identities", "--n", "2", "--seed", "7", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "identities" / "report.json").read_text())
    assert doc["passed"] and doc["seed"] == 7


def test_flow_run_deterministic(tmp_path):
    path = write(tmp_path, "f.json", SMALL_FLOW)
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert cli.main(["run", "--config", path, "--out", str(out)]) == 0
        outs.append(out / "small-flow")
    csvs = sorted(p.name for p in outs[0].glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    report = json.loads((outs[0] / "report.json").read_text())
    assert report["checks"]["coverage"]["passed"]


def test_console_script(tmp_path):
    proc = subprocess.run(["pqflow", "identities", "--n", "1", "--out", str(tmp_path)],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert "identities" in proc.stdout
