import csv
import json

import pytest

from app.config import save_config
from app.main import EXIT_INPUT, EXIT_OK, main


@pytest.fixture
def config_file(tiny_config, tmp_path):
    path = tmp_path / "tiny.env"
    save_config(tiny_config, str(path))
    return str(path)


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_gen_is_deterministic(tmp_path):
    assert main(["gen", "--seed", "7", "--out", str(tmp_path / "a" / "w.json")]) == EXIT_OK
    assert main(["gen", "--seed", "7", "--out", str(tmp_path / "b" / "w.json")]) == EXIT_OK
    first = (tmp_path / "a" / "w.json").read_text()
    assert first == (tmp_path / "b" / "w.json").read_text()
    world = json.loads(first)
    assert world["grid_w"] == 80 and len(world["objects"]) == 12
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "gen" and manifest["seed"] == 7


def test_demo_writes_both_directions(config_file, tmp_path):
    out = tmp_path / "demo"
    assert main(["demo", "--config", config_file, "--seed", "3", "--demo-seed", "1", "--reverse", "--out", str(out)]) == EXIT_OK
    forward = (out / "demo.jsonl").read_text().splitlines()
    backward = (out / "demo_reversed.jsonl").read_text().splitlines()
    assert len(forward) == len(backward)
    assert json.loads(backward[0])["reversed"] is True
    assert (out / "world.json").exists()


def test_open_loop_without_noise_always_succeeds(config_file, tmp_path):
    out = tmp_path / "eval"
    code = main(
        ["eval", "--config", config_file, "--set", "sim.noise=0.0", "--policy", "open_loop", "--trials", "3", "--out", str(out)]
    )
    assert code == EXIT_OK
    rows = {r["metric"]: r for r in _rows(out / "eval_open_loop.csv")}
    assert float(rows["success_rate"]["estimate"]) == 1.0
    assert float(rows["success_rate"]["axis_value"]) == 0.0
    assert rows["spl"]["n"] == "3"
    assert len(_rows(out / "trials_open_loop.csv")) == 3


def test_render_writes_an_svg(config_file, tmp_path):
    out = tmp_path / "render"
    assert main(["render", "--config", config_file, "--policy", "open_loop", "--trial", "1", "--out", str(out)]) == EXIT_OK
    svg = (out / "topview.svg").read_text()
    assert 'id="rollout-open_loop-0"' in svg


def test_learned_policy_needs_a_checkpoint(config_file, tmp_path):
    assert main(["eval", "--config", config_file, "--policy", "rpf", "--out", str(tmp_path)]) == EXIT_INPUT
    missing = str(tmp_path / "nowhere")
    code = main(["eval", "--config", config_file, "--policy", "rpf", "--checkpoint", f"rpf={missing}", "--out", str(tmp_path)])
    assert code == EXIT_INPUT


def test_malformed_config_is_an_input_error(config_file, tmp_path):
    assert main(["gen", "--config", config_file, "--set", "sim.noise=loud", "--out", str(tmp_path)]) == EXIT_INPUT
    assert main(["gen", "--set", "sim.nosie=0.1", "--out", str(tmp_path)]) == EXIT_INPUT
    assert main(["gen", "--config", str(tmp_path / "absent.env"), "--out", str(tmp_path)]) == EXIT_INPUT


@pytest.mark.slow
def test_train_then_evaluate(config_file, tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", config_file, "--out", str(out)]) == EXIT_OK
    assert (out / "checkpoint" / "manifest.json").exists()
    assert len(_rows(out / "metrics.csv")) == 2

    code = main(
        [
            "eval", "--config", config_file, "--trials", "2", "--out", str(tmp_path / "eval"),
            "--policy", "rpf", "--policy", "open_loop", "--checkpoint", f"rpf={out / 'checkpoint'}",
        ]
    )
    assert code == EXIT_OK
    assert (tmp_path / "eval" / "eval_rpf.csv").exists()
    assert (tmp_path / "eval" / "eval_open_loop.csv").exists()


@pytest.mark.slow
def test_gradcheck_in_double_precision(config_file, tmp_path, capsys):
    code = main(["gradcheck", "--config", config_file, "--dtype", "float64", "--tolerance", "1e-4", "--out", str(tmp_path)])
    printed = capsys.readouterr().out
    assert code == EXIT_OK, printed
    assert "rpf.pi.gru.Whz" in printed
    assert "worst max_rel_error" in printed
