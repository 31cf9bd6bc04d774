import pytest
import tomli

from riskshape.config import ExperimentConfig, dump_resolved, load_config, parse_config
from riskshape.reward import PRESETS


def test_empty_config_uses_defaults():
    cfg = parse_config({})
    assert cfg.reward is None
    assert cfg.harness.episodes == 500 and cfg.harness.eval_episodes == 100
    assert cfg.harness.observation == "features" and cfg.output == "runs"


def test_reward_preset_by_name():
    cfg = parse_config({"reward": {"preset": "reshaped"}})
    assert cfg.reward == PRESETS["reshaped"] and cfg.reward_preset == "reshaped"


def test_explicit_reward_keys():
    cfg = parse_config({"reward": PRESETS["default"].to_config() | {"r_out": -5.0}})
    assert cfg.reward.r_out == -5.0 and cfg.reward_preset == "custom"


@pytest.mark.parametrize("bad", [
    {"rewards": {}},
    {"world": {"tile_len": 1.0}},
    {"reward": {"preset": "bold"}},
    {"reward": {"r_exp": 1.0}},
    {"reward": PRESETS["default"].to_config() | {"r_obs": 10.0}},
    {"agent": {"a2c": {}}},
    {"agent": {"ppo": {"clip_range": 0.1}}},
    {"agent": {"ppo": {"gamma": 1.0}}},
    {"harness": {"episodes": 0}},
    {"harness": {"observation": "lidar"}},
    {"harness": {"speed": 2}},
    {"output": {"directory": "x", "format": "csv"}},
])
def test_invalid_configs_rejected(bad):
    with pytest.raises((ValueError, TypeError)):
        parse_config(bad)


def test_world_keys_route_to_parts():
    cfg = parse_config({"world": {"track_seed": 4, "tile_length": 2.0, "v_max": 20.0}})
    assert cfg.world.track_seed == 4
    assert cfg.world.track.tile_length == 2.0 and cfg.world.vehicle.v_max == 20.0


@pytest.mark.parametrize("name", ["default", "reshaped"])
def test_resolved_snapshot_reproduces_config(tmp_path, name):
    cfg = parse_config({"agent": {"ppo": {"hidden": [16]}}, "harness": {"episodes": 3, "seeds": [2]}}).with_reward(name)
    dump_resolved(cfg, tmp_path / "c.toml", agent="ppo")
    snap = tomli.loads((tmp_path / "c.toml").read_text())
    assert snap["reward"]["preset"] == name
    assert set(snap["agent"]) == {"ppo"} and snap["agent"]["ppo"]["hidden"] == [16]
    assert snap["agent"]["ppo"]["gamma"] == 0.99  # defaults are spelled out
    back = load_config(tmp_path / "c.toml")
    assert back.reward == cfg.reward and back.reward_preset == name
    assert back.world == cfg.world and back.harness == cfg.harness


def test_resolved_lists_every_learner_without_agent():
    assert set(ExperimentConfig().resolved()["agent"]) == {"dqn", "ddpg", "ppo"}
