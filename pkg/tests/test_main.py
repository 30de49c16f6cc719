import json

import pytest

import main
import run_registry

TINY_RUN = """include snake
algorithm = plain_es
lambda = 4
mu = 2
generations = 2
horizon = 20
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_RUN)
    return path


def test_run_then_analyze_and_replay(tmp_path, config_file, capsys):
    out = tmp_path / "run"
    assert main.main(["run", "--config", str(config_file), "--out", str(out), "--no-register"]) == 0
    assert (out / "generations.csv").exists()
    assert "Run complete" in capsys.readouterr().out

    assert main.main(["analyze", "--run", str(out)]) == 0
    assert (out / "reward_curve.csv").exists()

    checkpoint = out / "checkpoints" / "gen_0002"
    assert main.main(["replay", "--checkpoint", str(checkpoint), "--episodes", "2",
                      "--out", str(tmp_path / "replay")]) == 0
    assert len(json.loads((tmp_path / "replay" / "summary.json").read_text())) == 2


def test_run_is_registered(tmp_path, config_file):
    run_registry.configure_registry(tmp_path / "runs.db")
    out = tmp_path / "run"
    assert main.main(["run", "--config", str(config_file), "--out", str(out), "--seed", "3"]) == 0
    history = run_registry.load_run_history()
    assert len(history) == 1
    assert history[0]["algorithm"] == "plain_es" and history[0]["seed"] == 3


def test_bad_config_exits_with_error(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("include snake\nlambda = -1\n")
    assert main.main(["run", "--config", str(path), "--no-register"]) == 2
    assert main.main(["run", "--config", str(tmp_path / "absent.cfg"), "--no-register"]) == 2


def test_analyze_missing_run_exits_with_error(tmp_path):
    assert main.main(["analyze", "--run", str(tmp_path / "nothing")]) == 2
