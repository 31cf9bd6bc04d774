"""Deep Q-network with uniform replay and a hard-synced target network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from riskshape.agents.common import (
    N_ACTIONS,
    Agent,
    ReplayBuffer,
    config_from_dict,
    hyper_dict,
    restore_rng,
    rng_state,
)
from riskshape.env import Action
from riskshape.nn import Adam, DenseNet


@dataclass(frozen=True)
class DQNConfig:
    gamma: float = 0.99
    lr: float = 1e-3
    hidden: tuple[int, ...] = (64, 64)
    buffer_size: int = 50_000
    batch_size: int = 64
    learning_starts: int = 1000
    train_every: int = 1
    target_sync: int = 1000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.3
    max_grad_norm: float = 10.0
    reward_scale: float = 0.01  # learner-side only; env rewards are untouched

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")


def make_qnet(obs_dim: int, cfg: DQNConfig, seed: int, n_actions: int = N_ACTIONS) -> DenseNet:
    sizes = [obs_dim, *cfg.hidden, n_actions]
    return DenseNet(sizes, ["relu"] * len(cfg.hidden) + ["identity"], seed=seed)


def dqn_act(qnet: DenseNet, obs, epsilon: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy; the greedy branch breaks ties toward the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return Action(int(rng.integers(qnet.out_dim)))
    q = qnet.predict(obs)[0]
    return Action(int(np.argmax(q)))


def dqn_td_target(r: float, done: bool, q_next, gamma: float) -> float:
    if done:
        return float(r)
    return float(r + gamma * np.max(q_next))


def dqn_td_targets(r: np.ndarray, done: np.ndarray, q_next: np.ndarray, gamma: float) -> np.ndarray:
    return r + gamma * (1.0 - done) * q_next.max(axis=1)


def dqn_train_step(qnet: DenseNet, target_net: DenseNet, optimizer: Adam, buffer: ReplayBuffer,
                   cfg: DQNConfig, step: int) -> float:
    """One MSE TD step on a replay batch; the target net is copied every `target_sync` steps."""
    s, a, r, s2, d = buffer.sample(cfg.batch_size)
    a = a[:, 0].astype(int)
    y = dqn_td_targets(r, d, target_net.predict(s2), cfg.gamma)
    q, cache = qnet.forward(s)
    rows = np.arange(len(a))
    err = q[rows, a] - y
    grad = np.zeros_like(q)
    grad[rows, a] = 2.0 * err / len(a)
    grads, _ = qnet.backward(cache, grad)
    optimizer.step(qnet, grads)
    if step % cfg.target_sync == 0:
        sync_target(target_net, qnet)
    return float(np.mean(err * err))


def sync_target(target: DenseNet, online: DenseNet) -> None:
    for t, o in zip(target.params(), online.params()):
        t[...] = o


class DQNAgent(Agent):
    name = "dqn"

    def __init__(self, obs_dim: int, cfg: DQNConfig | None = None, seed: int = 0):
        self.cfg = cfg or DQNConfig()
        self.obs_dim = obs_dim
        self.seed = seed
        self.qnet = make_qnet(obs_dim, self.cfg, seed)
        self.target = self.qnet.copy()
        self.optim = Adam(self.qnet, lr=self.cfg.lr, max_grad_norm=self.cfg.max_grad_norm)
        self.buffer = ReplayBuffer(self.cfg.buffer_size, obs_dim, 1, seed=seed + 1)
        self.rng = np.random.default_rng(seed + 2)
        self.epsilon = self.cfg.eps_start
        self.steps = 0
        self.updates = 0
        self.episode = 0

    def begin_episode(self, episode: int, n_episodes: int) -> None:
        self.episode = episode
        frac = min(episode / max(self.cfg.eps_fraction * n_episodes, 1.0), 1.0)
        self.epsilon = self.cfg.eps_start + frac * (self.cfg.eps_end - self.cfg.eps_start)

    def act(self, obs, greedy=False):
        return dqn_act(self.qnet, obs, 0.0 if greedy else self.epsilon, self.rng)

    def observe(self, s, a, r, s_next, done):
        self.buffer.add(s, int(a), r * self.cfg.reward_scale, s_next, done)
        self.steps += 1
        if len(self.buffer) >= max(self.cfg.learning_starts, self.cfg.batch_size) \
                and self.steps % self.cfg.train_every == 0:
            self.updates += 1
            loss = dqn_train_step(self.qnet, self.target, self.optim, self.buffer, self.cfg, self.updates)
            return {"loss": loss}
        return None

    def state_dict(self) -> dict:
        return {
            "agent": self.name, "obs_dim": self.obs_dim, "seed": self.seed, "hyper": hyper_dict(self.cfg),
            "nets": {"qnet": self.qnet.to_dict(), "target": self.target.to_dict()},
            "optim": {"qnet": self.optim.to_dict()},
            "rng_state": rng_state(self.rng), "counters": {"steps": self.steps, "updates": self.updates},
            "episode": self.episode,
        }

    @classmethod
    def from_state(cls, d: dict) -> "DQNAgent":
        agent = cls(d["obs_dim"], config_from_dict(DQNConfig, d["hyper"]), d["seed"])
        for name in ("qnet", "target"):
            net = getattr(agent, name)
            loaded = type(net).from_dict(d["nets"][name])
            if loaded.sizes != net.sizes or loaded.activations != net.activations:
                raise ValueError(f"checkpoint architecture mismatch for {name}")
            net.set_flat(loaded.get_flat())
        agent.optim.load_dict(d["optim"]["qnet"])
        agent.rng = restore_rng(d["rng_state"])
        agent.steps = d["counters"]["steps"]
        agent.updates = d["counters"]["updates"]
        agent.episode = d["episode"]
        return agent
