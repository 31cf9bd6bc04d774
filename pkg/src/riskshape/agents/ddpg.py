"""Deterministic policy-gradient actor-critic acting on continuous controls."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from riskshape.agents.common import (
    Agent,
    ReplayBuffer,
    config_from_dict,
    hyper_dict,
    restore_rng,
    rng_state,
)
from riskshape.env import ContinuousControl
from riskshape.nn import Adam, DenseNet

CONTROL_DIM = 3
# d(control)/d(actor output): steer passes through, accel/brake map [-1, 1] -> [0, 1]
_CONTROL_SCALE = np.array([1.0, 0.5, 0.5])
_CONTROL_SHIFT = np.array([0.0, 0.5, 0.5])
_LOW = np.array([-1.0, 0.0, 0.0])
_HIGH = np.array([1.0, 1.0, 1.0])


@dataclass(frozen=True)
class DDPGConfig:
    gamma: float = 0.99
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    hidden: tuple[int, ...] = (64, 64)
    buffer_size: int = 50_000
    batch_size: int = 64
    learning_starts: int = 1000
    train_every: int = 1
    tau: float = 0.005
    noise: float = 0.1
    max_grad_norm: float = 10.0
    reward_scale: float = 0.01  # learner-side only; env rewards are untouched

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")


def make_actor(obs_dim: int, cfg: DDPGConfig, seed: int, act_dim: int = CONTROL_DIM) -> DenseNet:
    return DenseNet([obs_dim, *cfg.hidden, act_dim], ["tanh"] * len(cfg.hidden) + ["tanh"], seed=seed,
                    out_scale=0.1)


def make_critic(obs_dim: int, cfg: DDPGConfig, seed: int, act_dim: int = CONTROL_DIM) -> DenseNet:
    return DenseNet([obs_dim + act_dim, *cfg.hidden, 1], ["relu"] * len(cfg.hidden) + ["identity"], seed=seed)


def actor_controls(actor: DenseNet, obs) -> np.ndarray:
    """Actor outputs mapped to (steer, accel, brake) rows."""
    return actor.predict(obs) * _CONTROL_SCALE + _CONTROL_SHIFT


def ddpg_act(actor: DenseNet, obs, noise_scale: float, rng: np.random.Generator) -> ContinuousControl:
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    c = actor_controls(actor, obs)[0]
    if noise_scale > 0:
        c = c + rng.normal(0.0, noise_scale, size=c.shape)
    c = np.clip(c, _LOW, _HIGH)
    return ContinuousControl(*c)


def soft_update(target: DenseNet, online: DenseNet, tau: float) -> None:
    for t, o in zip(target.params(), online.params()):
        t *= 1.0 - tau
        t += tau * o


def ddpg_train_step(actor: DenseNet, critic: DenseNet, actor_target: DenseNet, critic_target: DenseNet,
                    actor_opt: Adam, critic_opt: Adam, buffer: ReplayBuffer, cfg: DDPGConfig):
    """Critic regression to the bootstrapped target, then actor ascent on Q(s, mu(s)).

    Returns (critic loss, actor objective = mean Q under the current actor).
    """
    s, a, r, s2, d = buffer.sample(cfg.batch_size)
    n = len(r)
    q_next = critic_target.predict(np.hstack([s2, actor_controls(actor_target, s2)]))[:, 0]
    y = r + cfg.gamma * (1.0 - d) * q_next

    q, cache = critic.forward(np.hstack([s, a]))
    err = q[:, 0] - y
    grads, _ = critic.backward(cache, (2.0 * err / n)[:, None])
    critic_opt.step(critic, grads)

    raw, a_cache = actor.forward(s)
    ctrl = raw * _CONTROL_SCALE + _CONTROL_SHIFT
    q_pi, c_cache = critic.forward(np.hstack([s, ctrl]))
    _, g_in = critic.backward(c_cache, np.full((n, 1), -1.0 / n))
    g_raw = g_in[:, -CONTROL_DIM:] * _CONTROL_SCALE
    a_grads, _ = actor.backward(a_cache, g_raw)
    actor_opt.step(actor, a_grads)

    soft_update(actor_target, actor, cfg.tau)
    soft_update(critic_target, critic, cfg.tau)
    return float(np.mean(err * err)), float(np.mean(q_pi))


class DDPGAgent(Agent):
    name = "ddpg"
    continuous = True

    def __init__(self, obs_dim: int, cfg: DDPGConfig | None = None, seed: int = 0):
        self.cfg = cfg or DDPGConfig()
        self.obs_dim = obs_dim
        self.seed = seed
        self.actor = make_actor(obs_dim, self.cfg, seed)
        self.critic = make_critic(obs_dim, self.cfg, seed + 1)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor, lr=self.cfg.actor_lr, max_grad_norm=self.cfg.max_grad_norm)
        self.critic_opt = Adam(self.critic, lr=self.cfg.critic_lr, max_grad_norm=self.cfg.max_grad_norm)
        self.buffer = ReplayBuffer(self.cfg.buffer_size, obs_dim, CONTROL_DIM, seed=seed + 2)
        self.rng = np.random.default_rng(seed + 3)
        self.steps = 0
        self.episode = 0

    def begin_episode(self, episode: int, n_episodes: int) -> None:
        self.episode = episode

    def act(self, obs, greedy=False):
        return ddpg_act(self.actor, obs, 0.0 if greedy else self.cfg.noise, self.rng)

    def observe(self, s, a, r, s_next, done):
        self.buffer.add(s, a.as_array(), r * self.cfg.reward_scale, s_next, done)
        self.steps += 1
        if len(self.buffer) >= max(self.cfg.learning_starts, self.cfg.batch_size) \
                and self.steps % self.cfg.train_every == 0:
            c_loss, objective = ddpg_train_step(self.actor, self.critic, self.actor_target, self.critic_target,
                                                self.actor_opt, self.critic_opt, self.buffer, self.cfg)
            return {"loss": c_loss, "actor_objective": objective}
        return None

    def state_dict(self) -> dict:
        return {
            "agent": self.name, "obs_dim": self.obs_dim, "seed": self.seed, "hyper": hyper_dict(self.cfg),
            "nets": {k: getattr(self, k).to_dict() for k in ("actor", "critic", "actor_target", "critic_target")},
            "optim": {"actor": self.actor_opt.to_dict(), "critic": self.critic_opt.to_dict()},
            "rng_state": rng_state(self.rng), "counters": {"steps": self.steps}, "episode": self.episode,
        }

    @classmethod
    def from_state(cls, d: dict) -> "DDPGAgent":
        agent = cls(d["obs_dim"], config_from_dict(DDPGConfig, d["hyper"]), d["seed"])
        for name in ("actor", "critic", "actor_target", "critic_target"):
            net = getattr(agent, name)
            loaded = DenseNet.from_dict(d["nets"][name])
            if loaded.sizes != net.sizes or loaded.activations != net.activations:
                raise ValueError(f"checkpoint architecture mismatch for {name}")
            net.set_flat(loaded.get_flat())
        agent.actor_opt.load_dict(d["optim"]["actor"])
        agent.critic_opt.load_dict(d["optim"]["critic"])
        agent.rng = restore_rng(d["rng_state"])
        agent.steps = d["counters"]["steps"]
        agent.episode = d["episode"]
        return agent
