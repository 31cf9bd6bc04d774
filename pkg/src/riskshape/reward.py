"""Risk-aware per-step reward and the five episode-termination conditions."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum

from riskshape.world import DT


@dataclass(frozen=True)
class RewardConfig:
    r_exp: float
    r_obs: float
    r_out: float
    r_alive: float
    n_eps: int
    t_out: float = 5.0
    r_up: float = 3000.0
    r_down: float = -400.0

    def __post_init__(self):
        checks = {
            "r_exp > 0": self.r_exp > 0,
            "r_obs < 0": self.r_obs < 0,
            "r_out < 0": self.r_out < 0,
            "r_alive < 0": self.r_alive < 0,
            "n_eps > 0": self.n_eps > 0 and int(self.n_eps) == self.n_eps,
            "t_out > 0": self.t_out > 0,
            "r_up > 0": self.r_up > 0,
            "r_down < 0": self.r_down < 0,
        }
        bad = [name for name, ok in checks.items() if not ok]
        if bad:
            raise ValueError(f"invalid RewardConfig: violates {', '.join(bad)}")

    def risk_steps(self, dt: float = DT) -> int:
        # guard against 5 / 0.02 landing a hair above 250
        return math.ceil(self.t_out / dt - 1e-9)

    def to_config(self) -> dict:
        """Keys as they appear in the [reward] section of an experiment file."""
        d = asdict(self)
        d["t_out_s"] = d.pop("t_out")
        return {k: d[k] for k in CONFIG_KEYS}

    @classmethod
    def from_config(cls, d: dict) -> "RewardConfig":
        missing = set(CONFIG_KEYS) - set(d)
        extra = set(d) - set(CONFIG_KEYS)
        if missing or extra:
            raise ValueError(f"reward keys mismatch: missing={sorted(missing)} unknown={sorted(extra)}")
        return cls(
            r_exp=float(d["r_exp"]), r_obs=float(d["r_obs"]), r_out=float(d["r_out"]),
            r_alive=float(d["r_alive"]), n_eps=int(d["n_eps"]), t_out=float(d["t_out_s"]),
            r_up=float(d["r_up"]), r_down=float(d["r_down"]),
        )


CONFIG_KEYS = ("r_exp", "r_obs", "r_out", "r_alive", "n_eps", "t_out_s", "r_up", "r_down")

PRESETS = {
    "default": RewardConfig(r_exp=1.0, r_obs=-600.0, r_out=-1.0, r_alive=-1.0, n_eps=700),
    "reshaped": RewardConfig(r_exp=1.4, r_obs=-600.0, r_out=-200.0, r_alive=-1.0, n_eps=1200),
}


def preset(name: str) -> RewardConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown reward preset {name!r}; expected one of {sorted(PRESETS)}") from None


class TerminationCause(str, Enum):
    COLLISION = "Collision"
    STEP_LIMIT = "StepLimit"
    RISK_TIMEOUT = "RiskTimeout"
    REWARD_UPPER = "RewardUpper"
    REWARD_LOWER = "RewardLower"


@dataclass(frozen=True)
class StepEvents:
    new_tile: bool = False
    collided: bool = False
    off_track: bool = False
    step_index: int = 0
    consecutive_off_track_steps: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpisodeAccumulator:
    cum_reward: float = 0.0
    step_count: int = 0
    consecutive_off_track_steps: int = 0

    def update(self, reward: float, events: StepEvents) -> None:
        self.cum_reward += reward
        self.step_count += 1
        self.consecutive_off_track_steps = events.consecutive_off_track_steps

    def reset(self) -> None:
        self.cum_reward = 0.0
        self.step_count = 0
        self.consecutive_off_track_steps = 0


def compute_reward(events: StepEvents, config: RewardConfig) -> float:
    """Sum of the gated terms; the alive penalty applies on every step."""
    r = config.r_alive
    if events.new_tile:
        r += config.r_exp
    if events.collided:
        r += config.r_obs
    if events.off_track:
        r += config.r_out
    return r


def check_termination(acc: EpisodeAccumulator, events: StepEvents, config: RewardConfig,
                      dt: float = DT, test_mode: bool = False) -> TerminationCause | None:
    """First satisfied cause in priority order; `acc` must already include this step."""
    if events.collided:
        return TerminationCause.COLLISION
    if acc.cum_reward <= config.r_down:
        return TerminationCause.REWARD_LOWER
    if acc.cum_reward >= config.r_up:
        return TerminationCause.REWARD_UPPER
    if acc.consecutive_off_track_steps > config.risk_steps(dt):
        return TerminationCause.RISK_TIMEOUT
    if not test_mode and acc.step_count >= config.n_eps:
        return TerminationCause.STEP_LIMIT
    return None
