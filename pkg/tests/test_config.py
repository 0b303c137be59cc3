import pytest

from app.config import RunConfig, SeedRange, load_config, parse_overrides, save_config
from app.errors import ConfigurationError


def test_defaults_match_base_settings():
    config = RunConfig()
    assert config.task == "following"
    assert config.sim.noise == 0.2
    assert config.demo.length == 30
    assert config.demo.clearance == 0.6
    assert config.eval.horizon == 40
    assert config.eval.trials == 500
    assert config.encoder.width == 64
    assert config.gru.hidden == 128
    assert config.attention.span == 0
    assert config.policy.increment == "one_plus_tanh"


def test_flat_form_reloads_to_an_equal_config(tiny_config):
    flat = tiny_config.to_flat()
    assert flat["seeds.test"] == "9000-9999"
    assert flat["encoder.width"] == "8"
    assert RunConfig.from_flat(flat) == tiny_config
    assert RunConfig.from_flat(flat).config_hash() == tiny_config.config_hash()


def test_overrides_are_validated():
    config = RunConfig().with_overrides({"sim.noise": "0.35", "policy.kind": "open_loop"})
    assert config.sim.noise == pytest.approx(0.35)
    assert config.policy.kind == "open_loop"

    with pytest.raises(ConfigurationError, match="unknown config keys"):
        RunConfig().with_overrides({"sim.nosie": "0.1"})
    with pytest.raises(ConfigurationError):
        RunConfig().with_overrides({"policy.kind": "teleport"})
    with pytest.raises(ConfigurationError):
        RunConfig().with_overrides({"sim.noise": "1.5"})


def test_test_seeds_must_be_held_out():
    with pytest.raises(ConfigurationError, match="overlaps"):
        RunConfig().with_overrides({"seeds.test": "7000-9000"})
    with pytest.raises(ConfigurationError):
        RunConfig().with_overrides({"seeds.val": "9500-9600"})


def test_seed_range_parsing_and_wrapping():
    seeds = SeedRange.model_validate("10-14")
    assert len(seeds) == 5
    assert [seeds.seed(i) for i in range(7)] == [10, 11, 12, 13, 14, 10, 11]
    assert seeds.overlaps(SeedRange(start=14, end=20))
    assert not seeds.overlaps(SeedRange(start=15, end=20))
    with pytest.raises(ValueError):
        SeedRange.model_validate("14-10")
    with pytest.raises(ValueError):
        SeedRange.model_validate("ten-twenty")


def test_load_config_file_then_overrides(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("# comment\ntask=homing\nsim.noise=0.1\ndemo.length = 60\n")
    config = load_config(str(path), {"sim.noise": "0.3"})
    assert config.task == "homing"
    assert config.demo.length == 60
    assert config.sim.noise == pytest.approx(0.3)


def test_saved_config_loads_back(tmp_path, tiny_config):
    path = tmp_path / "config.env"
    save_config(tiny_config, str(path))
    assert load_config(str(path)) == tiny_config


def test_missing_file_and_bad_override_pairs(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        load_config(str(tmp_path / "nope.env"))
    assert parse_overrides(["a.b=1", "c = x=y"]) == {"a.b": "1", "c": "x=y"}
    with pytest.raises(ConfigurationError):
        parse_overrides(["noequals"])


def test_environment_supplies_workers_and_output(monkeypatch):
    monkeypatch.setenv("RPF_WORKERS", "3")
    monkeypatch.setenv("RPF_OUT", "/tmp/rpf-out")
    config = RunConfig()
    assert config.workers == 3
    assert config.out == "/tmp/rpf-out"
