import json
import os
import shutil

import pytest

from s2s_sls import cli
from s2s_sls.config import ExperimentConfig


@pytest.fixture(scope="module")
def staged(tmp_path_factory):
    """Run the stages one command at a time into a shared directory."""
    out = str(tmp_path_factory.mktemp("cli"))
    codes = {name: cli.main([name, "--out", out]) for name in ("gen-data", "learn", "synthesize")}
    return out, codes


def test_stages_succeed(staged):
    out, codes = staged
    assert codes == {"gen-data": 0, "learn": 0, "synthesize": 0}
    for f in ("steps.csv", "config.txt", "model.txt", "fit.json", "controller.txt", "certificate.json"):
        assert os.path.exists(os.path.join(out, f)), f


def test_simulate_compare_plot(staged, capsys):
    out, _ = staged
    assert cli.main(["simulate", "--out", out, "--controller", "deadbeat", "--force", "20"]) == 0
    assert os.path.exists(os.path.join(out, "episode_deadbeat.csv"))
    assert cli.main(["compare", "--out", out, "--names", "sls", "lqr"]) == 0
    with open(os.path.join(out, "comparison.json")) as fh:
        assert set(json.load(fh)["controllers"]) == {"sls", "lqr"}
    assert cli.main(["plot", "--out", out, "--kind", "input", "--names", "sls", "deadbeat"]) == 0
    assert open(os.path.join(out, "input.svg")).read().startswith("<?xml")
    assert "max |u|" in capsys.readouterr().out


def test_model_from_other_config_rejected(staged, tmp_path, capsys):
    out, _ = staged
    cfg = tmp_path / "other.cfg"
    cfg.write_text("gait.v_d = 0.5\n")
    assert cli.main(["synthesize", "--out", out, "--config", str(cfg)]) == 1
    assert "different config" in capsys.readouterr().err


def test_infeasible_exit_code(staged, tmp_path):
    out, _ = staged
    d = tmp_path / "inf"
    d.mkdir()
    shutil.copy(os.path.join(out, "steps.csv"), d / "steps.csv")
    cfg = tmp_path / "tight.cfg"
    cfg.write_text("sets.u = [-0.45, 0.45]\nsls.s0_max_factor = 2.0\n")
    args = ["--out", str(d), "--config", str(cfg)]
    assert cli.main(["learn"] + args) == 0
    assert cli.main(["synthesize"] + args) == 2
    with open(d / "certificate.json") as fh:
        cert = json.load(fh)
    assert not cert["passed"] and cert["infeasible_family"] is not None
    assert cli.main(["simulate"] + args) == 2


def test_missing_inputs_exit_one(tmp_path, capsys):
    assert cli.main(["learn", "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_bad_config_exit_one(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no.such.key = 1\n")
    assert cli.main(["gen-data", "--out", str(tmp_path), "--config", str(cfg)]) == 1


def test_out_is_required():
    with pytest.raises(SystemExit):
        cli.main(["pipeline"])


def test_config_written_matches(staged):
    out, _ = staged
    assert ExperimentConfig.load(os.path.join(out, "config.txt")).digest() == ExperimentConfig().digest()
