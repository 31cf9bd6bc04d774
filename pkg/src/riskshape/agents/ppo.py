"""Clipped-surrogate PPO over the five discrete actions, with GAE advantages."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from riskshape.agents.common import (
    N_ACTIONS,
    Agent,
    config_from_dict,
    hyper_dict,
    restore_rng,
    rng_state,
)
from riskshape.env import Action
from riskshape.nn import Adam, DenseNet

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class PPOConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    rollout_len: int = 2048
    minibatch: int = 64
    ent_coef: float = 0.01
    policy_lr: float = 3e-4
    value_lr: float = 3e-4
    hidden: tuple[int, ...] = (64, 64)
    max_grad_norm: float = 0.5
    normalize_adv: bool = True
    reward_scale: float = 0.01  # learner-side only; env rewards are untouched

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 <= self.lam <= 1:
            raise ValueError("lam must lie in [0, 1]")
        if self.clip <= 0:
            raise ValueError("clip must be > 0")


@dataclass
class Rollout:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    logps: np.ndarray
    values: np.ndarray
    next_values: np.ndarray  # V(s_{t+1}); ignored where done
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    last_obs: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.rewards)


def make_policy(obs_dim: int, cfg: PPOConfig, seed: int, n_actions: int = N_ACTIONS) -> DenseNet:
    return DenseNet([obs_dim, *cfg.hidden, n_actions], ["tanh"] * len(cfg.hidden) + ["softmax"], seed=seed,
                    out_scale=0.01)


def make_value(obs_dim: int, cfg: PPOConfig, seed: int) -> DenseNet:
    return DenseNet([obs_dim, *cfg.hidden, 1], ["tanh"] * len(cfg.hidden) + ["identity"], seed=seed)


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(probs) - 1))


def log_prob(policy: DenseNet, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    p = policy.predict(obs)
    return np.log(np.maximum(p[np.arange(len(actions)), actions], PROB_FLOOR))


def ppo_collect(policy: DenseNet, value_net: DenseNet, env, rollout_len: int, rng: np.random.Generator,
                obs: np.ndarray | None = None) -> Rollout:
    """Run the current policy for `rollout_len` steps, resetting `env` whenever an episode ends.

    Pass the previous rollout's `last_obs` as `obs` to continue an unfinished episode.
    """
    if rollout_len < 1:
        raise ValueError("rollout_len must be >= 1")
    if obs is None:
        obs = env.reset(int(rng.integers(2**63)))
    n = rollout_len
    buf = {k: np.zeros(n) for k in ("rewards", "dones", "logps", "values", "next_values")}
    states = np.zeros((n, value_net.in_dim))
    actions = np.zeros(n, dtype=int)
    for t in range(n):
        probs = policy.predict(obs)[0]
        a = sample_action(probs, rng)
        states[t] = obs
        actions[t] = a
        buf["logps"][t] = np.log(max(probs[a], PROB_FLOOR))
        buf["values"][t] = value_net.predict(obs)[0, 0]
        res = env.step(a)
        buf["rewards"][t] = res.reward
        buf["dones"][t] = float(res.done)
        if res.done:
            obs = env.reset(int(rng.integers(2**63)))
        else:
            obs = res.obs
            if t == n - 1:
                buf["next_values"][t] = value_net.predict(obs)[0, 0]
    for t in range(n - 1):
        if not buf["dones"][t]:
            buf["next_values"][t] = buf["values"][t + 1]
    return Rollout(states, actions, last_obs=obs, **buf)


def ppo_gae(rollout: Rollout, gamma: float, lam: float):
    """Generalised advantage estimates and return targets, cut at episode ends."""
    r, d, v, nv = rollout.rewards, rollout.dones, rollout.values, rollout.next_values
    delta = r + gamma * nv * (1.0 - d) - v
    adv = np.zeros_like(r)
    running = 0.0
    for t in reversed(range(len(r))):
        running = delta[t] + gamma * lam * (1.0 - d[t]) * running
        adv[t] = running
    ret = adv + v
    rollout.advantages, rollout.returns = adv, ret
    return adv, ret


def ppo_update(policy: DenseNet, value_net: DenseNet, rollout: Rollout, cfg: PPOConfig,
               policy_opt: Adam, value_opt: Adam, rng: np.random.Generator):
    """K epochs of minibatch clipped-surrogate ascent plus value regression.

    Returns (policy loss, value loss, clip fraction), averaged over minibatches.
    On a non-finite loss every parameter and optimizer moment is restored and NaNs are returned.
    """
    if rollout.advantages is None:
        ppo_gae(rollout, cfg.gamma, cfg.lam)
    adv = rollout.advantages
    if cfg.normalize_adv:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    backup = (policy.get_flat(), value_net.get_flat(), policy_opt.to_dict(), value_opt.to_dict())

    n = len(rollout)
    rows_all = np.arange(n)
    p_losses, v_losses, clipped = [], [], []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = perm[start:start + cfg.minibatch]
            b = len(idx)
            rows = rows_all[:b]
            obs, act, a_hat = rollout.obs[idx], rollout.actions[idx], adv[idx]

            probs, cache = policy.forward(obs)
            p_a = np.maximum(probs[rows, act], PROB_FLOOR)
            ratio = np.exp(np.log(p_a) - rollout.logps[idx])
            surr1 = ratio * a_hat
            surr2 = np.clip(ratio, 1 - cfg.clip, 1 + cfg.clip) * a_hat
            unclipped = surr1 <= surr2
            logp_all = np.log(np.maximum(probs, PROB_FLOOR))
            entropy = -np.sum(probs * logp_all, axis=1)
            p_loss = -np.mean(np.minimum(surr1, surr2)) - cfg.ent_coef * np.mean(entropy)

            g = cfg.ent_coef / b * (logp_all + 1.0)
            g[rows, act] -= unclipped * a_hat * ratio / p_a / b
            p_grads, _ = policy.backward(cache, g)

            v, v_cache = value_net.forward(obs)
            v_err = v[:, 0] - rollout.returns[idx]
            v_loss = np.mean(v_err * v_err)
            v_grads, _ = value_net.backward(v_cache, (2.0 * v_err / b)[:, None])

            if not (np.isfinite(p_loss) and np.isfinite(v_loss)):
                log.error("non-finite PPO loss; rolling back update")
                policy.set_flat(backup[0])
                value_net.set_flat(backup[1])
                policy_opt.load_dict(backup[2])
                value_opt.load_dict(backup[3])
                return float("nan"), float("nan"), float("nan")
            policy_opt.step(policy, p_grads)
            value_opt.step(value_net, v_grads)
            p_losses.append(p_loss)
            v_losses.append(v_loss)
            clipped.append(np.mean(np.abs(ratio - 1.0) > cfg.clip))
    return float(np.mean(p_losses)), float(np.mean(v_losses)), float(np.mean(clipped))


class PPOAgent(Agent):
    name = "ppo"

    def __init__(self, obs_dim: int, cfg: PPOConfig | None = None, seed: int = 0):
        self.cfg = cfg or PPOConfig()
        self.obs_dim = obs_dim
        self.seed = seed
        self.policy = make_policy(obs_dim, self.cfg, seed)
        self.value = make_value(obs_dim, self.cfg, seed + 1)
        self.policy_opt = Adam(self.policy, lr=self.cfg.policy_lr, max_grad_norm=self.cfg.max_grad_norm)
        self.value_opt = Adam(self.value, lr=self.cfg.value_lr, max_grad_norm=self.cfg.max_grad_norm)
        self.rng = np.random.default_rng(seed + 2)
        self.episode = 0
        self.updates = 0
        self._clear()

    def _clear(self):
        n = self.cfg.rollout_len
        self._obs = np.zeros((n, self.obs_dim))
        self._act = np.zeros(n, dtype=int)
        self._rew = np.zeros(n)
        self._done = np.zeros(n)
        self._logp = np.zeros(n)
        self._val = np.zeros(n)
        self._t = 0
        self._pending = None

    def begin_episode(self, episode: int, n_episodes: int) -> None:
        self.episode = episode

    def act(self, obs, greedy=False):
        probs = self.policy.predict(obs)[0]
        if greedy:
            return Action(int(np.argmax(probs)))
        a = sample_action(probs, self.rng)
        self._pending = (np.log(max(probs[a], PROB_FLOOR)), self.value.predict(obs)[0, 0])
        return Action(a)

    def observe(self, s, a, r, s_next, done):
        logp, v = self._pending
        t = self._t
        self._obs[t], self._act[t], self._rew[t] = s, int(a), r * self.cfg.reward_scale
        self._done[t], self._logp[t], self._val[t] = float(done), logp, v
        self._t += 1
        if self._t < self.cfg.rollout_len:
            return None
        next_values = np.r_[self._val[1:], 0.0 if done else self.value.predict(s_next)[0, 0]]
        rollout = Rollout(self._obs, self._act, self._rew, self._done, self._logp, self._val,
                          next_values * (1.0 - self._done))
        ppo_gae(rollout, self.cfg.gamma, self.cfg.lam)
        p_loss, v_loss, clip_frac = ppo_update(self.policy, self.value, rollout, self.cfg,
                                               self.policy_opt, self.value_opt, self.rng)
        self.updates += 1
        self._clear()
        return {"loss": p_loss, "value_loss": v_loss, "clip_fraction": clip_frac}

    def state_dict(self) -> dict:
        return {
            "agent": self.name, "obs_dim": self.obs_dim, "seed": self.seed, "hyper": hyper_dict(self.cfg),
            "nets": {"policy": self.policy.to_dict(), "value": self.value.to_dict()},
            "optim": {"policy": self.policy_opt.to_dict(), "value": self.value_opt.to_dict()},
            "rng_state": rng_state(self.rng), "counters": {"updates": self.updates}, "episode": self.episode,
        }

    @classmethod
    def from_state(cls, d: dict) -> "PPOAgent":
        agent = cls(d["obs_dim"], config_from_dict(PPOConfig, d["hyper"]), d["seed"])
        for name in ("policy", "value"):
            net = getattr(agent, name)
            loaded = DenseNet.from_dict(d["nets"][name])
            if loaded.sizes != net.sizes or loaded.activations != net.activations:
                raise ValueError(f"checkpoint architecture mismatch for {name}")
            net.set_flat(loaded.get_flat())
        agent.policy_opt.load_dict(d["optim"]["policy"])
        agent.value_opt.load_dict(d["optim"]["value"])
        agent.rng = restore_rng(d["rng_state"])
        agent.updates = d["counters"]["updates"]
        agent.episode = d["episode"]
        return agent
