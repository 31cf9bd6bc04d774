from __future__ import annotations

from dataclasses import asdict, fields

import numpy as np

from riskshape.env import Action, ContinuousControl, discrete_to_control

N_ACTIONS = len(Action)
_CANONICAL = np.array([discrete_to_control(a).as_array() for a in Action])


def bin_control(c: ContinuousControl) -> Action:
    """Nearest canonical discrete control (Euclidean), ties to the lowest index."""
    d = np.sum((_CANONICAL - c.as_array()) ** 2, axis=1)
    return Action(int(np.argmin(d)))


def as_discrete(action) -> Action:
    if isinstance(action, ContinuousControl):
        return bin_control(action)
    return Action(action)


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions stored in preallocated arrays."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int = 1, seed: int = 0):
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.cursor = 0
        self.size = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self.size

    def add(self, s, a, r, s_next, done) -> None:
        i = self.cursor
        self.obs[i] = s
        self.act[i] = a
        self.rew[i] = r
        self.next_obs[i] = s_next
        self.done[i] = float(done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int):
        if batch_size > self.size:
            raise ValueError(f"buffer holds {self.size} transitions, need {batch_size}")
        idx = self.rng.choice(self.size, size=batch_size, replace=False)
        return self.obs[idx], self.act[idx], self.rew[idx], self.next_obs[idx], self.done[idx]

    def ordered(self):
        """Stored transitions from oldest to newest (for inspection and tests)."""
        if self.size < self.capacity:
            order = np.arange(self.size)
        else:
            order = (np.arange(self.capacity) + self.cursor) % self.capacity
        return self.obs[order], self.act[order], self.rew[order], self.next_obs[order], self.done[order]


def config_from_dict(cls, d: dict):
    """Build a hyperparameter dataclass, rejecting unknown keys."""
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
    return cls(**kw)


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def restore_rng(state: dict) -> np.random.Generator:
    bg = getattr(np.random, state["bit_generator"])()
    bg.state = state
    return np.random.Generator(bg)


class Agent:
    """Common surface the harness drives. Subclasses learn inside `observe`."""

    name = "base"
    continuous = False

    def begin_episode(self, episode: int, n_episodes: int) -> None:
        pass

    def act(self, obs: np.ndarray, greedy: bool = False):
        raise NotImplementedError

    def observe(self, s, a, r, s_next, done) -> dict | None:
        return None

    def state_dict(self) -> dict:
        raise NotImplementedError


class RandomAgent(Agent):
    name = "random"

    def __init__(self, obs_dim: int, seed: int = 0):
        self.obs_dim = obs_dim
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def act(self, obs, greedy=False):
        return Action(int(self.rng.integers(N_ACTIONS)))

    def state_dict(self) -> dict:
        return {"agent": self.name, "obs_dim": self.obs_dim, "seed": self.seed,
                "rng_state": rng_state(self.rng)}

    @classmethod
    def from_state(cls, d: dict) -> "RandomAgent":
        agent = cls(d["obs_dim"], d["seed"])
        agent.rng = restore_rng(d["rng_state"])
        return agent


class ConstantAgent(Agent):
    """Always emits the same discrete action; a baseline and a test fixture."""

    name = "constant"

    def __init__(self, obs_dim: int, action: Action | int = Action.NO_ACTION):
        self.obs_dim = obs_dim
        self.action = Action(action)

    def act(self, obs, greedy=False):
        return self.action

    def state_dict(self) -> dict:
        return {"agent": self.name, "obs_dim": self.obs_dim, "action": int(self.action)}

    @classmethod
    def from_state(cls, d: dict) -> "ConstantAgent":
        return cls(d["obs_dim"], d["action"])


def hyper_dict(cfg) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()}
