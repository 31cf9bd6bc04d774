"""Experiment configuration: dataclasses plus a strict TOML loader."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli
import tomli_w

from riskshape.agents import LEARNERS, config_from_dict
from riskshape.agents.common import hyper_dict
from riskshape.reward import PRESETS, RewardConfig, preset
from riskshape.world import Track, TrackGenParams, VehicleParams, generate_track, place_obstacles


@dataclass(frozen=True)
class WorldConfig:
    track_seed: int = 0
    n_obstacles: int = 6
    obstacle_radius: float = 1.5
    track: TrackGenParams = field(default_factory=TrackGenParams)
    vehicle: VehicleParams = field(default_factory=VehicleParams)

    def build_track(self, track_seed: int | None = None) -> Track:
        seed = self.track_seed if track_seed is None else track_seed
        base = generate_track(seed, self.track)
        return place_obstacles(base, seed, self.n_obstacles, self.obstacle_radius)

    def to_dict(self) -> dict:
        """Flat key space, as written in the [world] section."""
        return {"track_seed": self.track_seed, "n_obstacles": self.n_obstacles,
                "obstacle_radius": self.obstacle_radius, **asdict(self.track), **asdict(self.vehicle)}

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        own = {"track_seed", "n_obstacles", "obstacle_radius"}
        track_keys = {f.name for f in fields(TrackGenParams)}
        vehicle_keys = {f.name for f in fields(VehicleParams)}
        unknown = set(d) - own - track_keys - vehicle_keys
        if unknown:
            raise ValueError(f"unknown [world] keys: {sorted(unknown)}")
        return cls(
            **{k: d[k] for k in own if k in d},
            track=TrackGenParams(**{k: d[k] for k in track_keys if k in d}),
            vehicle=VehicleParams(**{k: d[k] for k in vehicle_keys if k in d}),
        )


@dataclass(frozen=True)
class HarnessConfig:
    episodes: int = 500
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    eval_episodes: int = 100
    eval_base_seed: int = 10_000
    observation: str = "features"
    raster_size: int = 24
    checkpoint_every: int = 0
    new_track_eval: bool = False
    trace: bool = False

    def __post_init__(self):
        if self.episodes < 1 or self.eval_episodes < 1:
            raise ValueError("episodes and eval_episodes must be >= 1")
        if self.observation not in ("features", "raster"):
            raise ValueError(f"unknown observation mode {self.observation!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    reward: RewardConfig | None = None  # None: choose per run (both presets in compare)
    reward_preset: str | None = None
    agents: dict = field(default_factory=dict)  # name -> hyperparameter dict
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    output: str = "runs"

    def agent_hyper(self, name: str) -> dict:
        return dict(self.agents.get(name, {}))

    def with_reward(self, name: str) -> "ExperimentConfig":
        return replace(self, reward=preset(name), reward_preset=name)

    def resolved(self, agent: str | None = None) -> dict:
        """Every setting spelled out, suitable for the run-directory snapshot."""
        d: dict = {"world": self.world.to_dict()}
        if self.reward is not None:
            d["reward"] = {"preset": self.reward_preset or "custom", **self.reward.to_config()}
        names = [agent] if agent else sorted(set(self.agents) | set(LEARNERS))
        d["agent"] = {}
        for name in names:
            if name in LEARNERS:
                d["agent"][name] = hyper_dict(config_from_dict(LEARNERS[name][1], self.agent_hyper(name)))
        h = asdict(self.harness)
        h["seeds"] = list(h["seeds"])
        d["harness"] = h
        d["output"] = {"directory": self.output}
        return d


SECTIONS = {"world", "reward", "agent", "harness", "output"}


def parse_config(d: dict) -> ExperimentConfig:
    unknown = set(d) - SECTIONS
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    world = WorldConfig.from_dict(d.get("world", {}))

    reward, reward_name = None, None
    r = dict(d.get("reward", {}))
    if "preset" in r:
        reward_name = r.pop("preset")
        reward = preset(reward_name)
        if r:
            # explicit keys after a preset must restate it exactly (e.g. a resolved snapshot)
            explicit = RewardConfig.from_config(r)
            if explicit != reward:
                reward, reward_name = explicit, "custom"
    elif r:
        reward, reward_name = RewardConfig.from_config(r), "custom"

    agents = {}
    for name, hyper in d.get("agent", {}).items():
        if name not in LEARNERS:
            raise ValueError(f"unknown [agent.{name}] section")
        config_from_dict(LEARNERS[name][1], hyper)  # validate early
        agents[name] = dict(hyper)

    h = dict(d.get("harness", {}))
    if "seeds" in h:
        h["seeds"] = tuple(h["seeds"])
    harness = HarnessConfig(**h)

    out = dict(d.get("output", {}))
    directory = out.pop("directory", "runs")
    if out:
        raise ValueError(f"unknown [output] keys: {sorted(out)}")
    return ExperimentConfig(world, reward, reward_name, agents, harness, directory)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        return parse_config(tomli.load(fh))


def dump_resolved(cfg: ExperimentConfig, path, agent: str | None = None) -> None:
    Path(path).write_text(tomli_w.dumps(cfg.resolved(agent)))


__all__ = ["WorldConfig", "HarnessConfig", "ExperimentConfig", "parse_config", "load_config", "dump_resolved",
           "PRESETS"]
