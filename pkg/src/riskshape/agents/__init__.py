"""DQN, DDPG and PPO learners sharing the racing-env interface."""

from riskshape.agents.common import (
    N_ACTIONS,
    Agent,
    ConstantAgent,
    RandomAgent,
    ReplayBuffer,
    as_discrete,
    bin_control,
    config_from_dict,
)
from riskshape.agents.ddpg import DDPGAgent, DDPGConfig, ddpg_act, ddpg_train_step
from riskshape.agents.dqn import DQNAgent, DQNConfig, dqn_act, dqn_td_target, dqn_train_step
from riskshape.agents.ppo import PPOAgent, PPOConfig, Rollout, ppo_collect, ppo_gae, ppo_update

LEARNERS = {"dqn": (DQNAgent, DQNConfig), "ddpg": (DDPGAgent, DDPGConfig), "ppo": (PPOAgent, PPOConfig)}
_ALL = {**{k: v[0] for k, v in LEARNERS.items()}, "random": RandomAgent, "constant": ConstantAgent}


def make_agent(name: str, obs_dim: int, hyper: dict | None = None, seed: int = 0) -> Agent:
    if name in LEARNERS:
        cls, cfg_cls = LEARNERS[name]
        return cls(obs_dim, config_from_dict(cfg_cls, hyper or {}), seed)
    if name == "random":
        return RandomAgent(obs_dim, seed)
    raise ValueError(f"unknown agent {name!r}; expected one of {sorted(LEARNERS) + ['random']}")


def agent_from_state(d: dict) -> Agent:
    try:
        cls = _ALL[d["agent"]]
    except KeyError:
        raise ValueError(f"checkpoint names unknown agent {d.get('agent')!r}") from None
    return cls.from_state(d)


__all__ = [
    "Agent", "ConstantAgent", "RandomAgent", "ReplayBuffer", "N_ACTIONS", "as_discrete", "bin_control",
    "DDPGAgent", "DDPGConfig", "ddpg_act", "ddpg_train_step",
    "DQNAgent", "DQNConfig", "dqn_act", "dqn_td_target", "dqn_train_step",
    "PPOAgent", "PPOConfig", "Rollout", "ppo_collect", "ppo_gae", "ppo_update",
    "LEARNERS", "make_agent", "agent_from_state",
]
