"""Training loops, 100-episode evaluation, action histograms and the default-vs-reshaped comparison."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from riskshape.agents import LEARNERS, Agent, agent_from_state, as_discrete, make_agent
from riskshape.agents.common import N_ACTIONS
from riskshape.config import ExperimentConfig, WorldConfig
from riskshape.env import RacingEnv
from riskshape.nn import load_checkpoint, save_checkpoint
from riskshape.reward import PRESETS, RewardConfig, TerminationCause
from riskshape.world import DT

log = logging.getLogger(__name__)

RASTER_HIDDEN = (128,)  # flattened raster -> one hidden layer


class TrainingAborted(RuntimeError):
    pass


@dataclass
class EpisodeStats:
    episode: int
    t_srv: int
    r_cum: float
    cause: TerminationCause
    action_counts: tuple[int, ...]
    episode_seed: int

    @property
    def seconds(self) -> float:
        return self.t_srv * DT


@dataclass
class TrainingCurve:
    episodes: list[EpisodeStats] = field(default_factory=list)
    smoothing_window: int = 20

    def smoothed(self, window: int | None = None) -> np.ndarray:
        w = window or self.smoothing_window
        r = np.array([e.r_cum for e in self.episodes])
        if len(r) == 0:
            return r
        c = np.cumsum(np.r_[0.0, r])
        lo = np.maximum(np.arange(1, len(r) + 1) - w, 0)
        return (c[1:] - c[lo]) / (np.arange(1, len(r) + 1) - lo)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "r_cum", "t_srv", "cause"])
            for e in self.episodes:
                w.writerow([e.episode, repr(e.r_cum), e.t_srv, e.cause.value])

    @classmethod
    def read_csv(cls, path) -> "TrainingCurve":
        curve = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                curve.episodes.append(EpisodeStats(int(row["episode"]), int(row["t_srv"]), float(row["r_cum"]),
                                                   TerminationCause(row["cause"]), (), -1))
        return curve


def _mean_std(values) -> tuple[float, float]:
    """Two-pass population mean and standard deviation."""
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


@dataclass
class EvalSummary:
    agent: str
    preset: str
    n_episodes: int
    mean_t_srv: float
    mean_r_cum: float
    std_r_cum: float
    episodes: list[EpisodeStats]

    @classmethod
    def from_episodes(cls, agent: str, preset: str, episodes: list[EpisodeStats]) -> "EvalSummary":
        mean_t, _ = _mean_std([float(e.t_srv) for e in episodes])
        mean_r, std_r = _mean_std([e.r_cum for e in episodes])
        return cls(agent, preset, len(episodes), mean_t, mean_r, std_r, episodes)

    @property
    def mean_t_srv_seconds(self) -> float:
        return self.mean_t_srv * DT

    def action_totals(self) -> np.ndarray:
        return action_histogram(self.episodes)

    def to_json(self) -> dict:
        causes = {c.value: sum(e.cause is c for e in self.episodes) for c in TerminationCause}
        return {
            "agent": self.agent, "preset": self.preset, "n_episodes": self.n_episodes,
            "mean_t_srv": self.mean_t_srv, "mean_t_srv_seconds": self.mean_t_srv_seconds,
            "mean_r_cum": self.mean_r_cum, "std_r_cum": self.std_r_cum, "std_kind": "population",
            "action_counts": self.action_totals().tolist(), "causes": causes,
            "episodes": [
                {"episode": e.episode, "seed": e.episode_seed, "t_srv": e.t_srv, "r_cum": e.r_cum,
                 "cause": e.cause.value, "action_counts": list(e.action_counts)}
                for e in self.episodes
            ],
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "eval.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "seed", "t_srv", "r_cum", "cause", *[f"a{i}" for i in range(N_ACTIONS)]])
            for e in self.episodes:
                w.writerow([e.episode, e.episode_seed, e.t_srv, repr(e.r_cum), e.cause.value, *e.action_counts])
        (out / "summary.json").write_text(json.dumps(self.to_json(), indent=1))


def action_histogram(stats) -> np.ndarray:
    total = np.zeros(N_ACTIONS, dtype=int)
    for e in stats:
        total += np.asarray(e.action_counts, dtype=int)
    return total


def episode_seed(run_seed: int, episode: int) -> int:
    return int(np.random.SeedSequence([run_seed, episode]).generate_state(1, np.uint64)[0])


def run_episode(env: RacingEnv, agent: Agent, seed: int, episode: int, learn: bool) -> EpisodeStats:
    obs = env.reset(seed)
    counts = [0] * N_ACTIONS
    while True:
        action = agent.act(obs, greedy=not learn)
        res = env.step(action)
        counts[as_discrete(action)] += 1
        if learn:
            info = agent.observe(obs, action, res.reward, res.obs, res.done)
            if info is not None and not np.isfinite(info["loss"]):
                raise TrainingAborted(f"non-finite training loss at episode {episode}, step {env.acc.step_count}")
        obs = res.obs
        if res.done:
            return EpisodeStats(episode, env.acc.step_count, env.acc.cum_reward, res.cause, tuple(counts), seed)


@dataclass
class TrainResult:
    curve: TrainingCurve
    agent: Agent
    checkpoint: dict


def _payload(agent: Agent, world: WorldConfig, reward: RewardConfig, preset_name: str, obs_mode: str,
             raster_size: int, run_seed: int, episode: int) -> dict:
    return {
        **agent.state_dict(), "episode": episode, "run_seed": run_seed, "preset": preset_name,
        "reward": reward.to_config(), "world": world.to_dict(),
        "observation": {"mode": obs_mode, "raster_size": raster_size},
    }


def train(agent_name: str, reward: RewardConfig | str, world: WorldConfig | None = None, n_episodes: int = 500,
          run_seed: int = 0, hyper: dict | None = None, obs_mode: str = "features", raster_size: int = 24,
          out_dir=None, checkpoint_every: int = 0, trace: bool = False) -> TrainResult:
    """Train one agent on one reward preset; writes curve.csv and checkpoints when `out_dir` is given."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    preset_name = reward if isinstance(reward, str) else _preset_name(reward)
    reward = PRESETS[reward] if isinstance(reward, str) else reward
    world = world or WorldConfig()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    trace_fh = open(out / "trace.jsonl", "w") if (trace and out is not None) else None

    env = RacingEnv(world.build_track(), reward, obs_mode=obs_mode, raster_size=raster_size,
                    vehicle=world.vehicle, trace=trace_fh)
    hyper = dict(hyper or {})
    if obs_mode == "raster" and agent_name in LEARNERS:
        hyper.setdefault("hidden", RASTER_HIDDEN)
    agent = make_agent(agent_name, env.obs_dim, hyper, seed=run_seed)
    curve = TrainingCurve()
    try:
        for ep in range(n_episodes):
            agent.begin_episode(ep, n_episodes)
            try:
                stats = run_episode(env, agent, episode_seed(run_seed, ep), ep, learn=True)
            except TrainingAborted:
                if out is not None:
                    save_checkpoint(out / "diagnostic.json", _payload(agent, world, reward, preset_name, obs_mode,
                                                                      raster_size, run_seed, ep))
                    curve.write_csv(out / "curve.csv")
                raise
            curve.episodes.append(stats)
            if out is not None and checkpoint_every and (ep + 1) % checkpoint_every == 0:
                (out / "checkpoints").mkdir(exist_ok=True)
                save_checkpoint(out / "checkpoints" / f"ep{ep + 1:05d}.json",
                                _payload(agent, world, reward, preset_name, obs_mode, raster_size, run_seed, ep + 1))
    finally:
        if trace_fh is not None:
            trace_fh.close()

    payload = _payload(agent, world, reward, preset_name, obs_mode, raster_size, run_seed, n_episodes)
    if out is not None:
        curve.write_csv(out / "curve.csv")
        save_checkpoint(out / "checkpoint.json", payload)
    return TrainResult(curve, agent, payload)


def _preset_name(reward: RewardConfig) -> str:
    for name, cfg in PRESETS.items():
        if cfg == reward:
            return name
    return "custom"


def evaluate(checkpoint, n_episodes: int = 100, base_seed: int = 0, track_seed: int | None = None,
             out_dir=None, trace: bool = False) -> EvalSummary:
    """Greedy test-mode evaluation: no step limit, starts seeded base_seed + i.

    `checkpoint` is a path or an already-loaded checkpoint dict.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    ck = load_checkpoint(checkpoint) if isinstance(checkpoint, (str, os.PathLike)) else checkpoint
    world = WorldConfig.from_dict(ck["world"])
    reward = RewardConfig.from_config(ck["reward"])
    obs = ck["observation"]
    out = Path(out_dir) if out_dir is not None else None
    trace_fh = None
    if trace and out is not None:
        out.mkdir(parents=True, exist_ok=True)
        trace_fh = open(out / "eval_trace.jsonl", "w")
    env = RacingEnv(world.build_track(track_seed), reward, obs_mode=obs["mode"], raster_size=obs["raster_size"],
                    vehicle=world.vehicle, test_mode=True, trace=trace_fh)
    if ck["obs_dim"] != env.obs_dim:
        raise ValueError(f"checkpoint expects obs_dim={ck['obs_dim']}, env provides {env.obs_dim}")
    agent = agent_from_state(ck)
    try:
        episodes = [run_episode(env, agent, base_seed + i, i, learn=False) for i in range(n_episodes)]
    finally:
        if trace_fh is not None:
            trace_fh.close()
    summary = EvalSummary.from_episodes(ck["agent"], ck.get("preset", "custom"), episodes)
    if out is not None:
        summary.write(out)
    return summary


# ---------------------------------------------------------------------------
# default-vs-reshaped comparison

@dataclass
class CellResult:
    agent: str
    preset: str
    seed: int
    summary: EvalSummary | None = None
    error: str | None = None


@dataclass
class ComparisonReport:
    agents: list[str]
    presets: list[str]
    seeds: list[int]
    cells: list[CellResult]

    def cell(self, agent: str, preset: str, seed: int) -> CellResult:
        for c in self.cells:
            if (c.agent, c.preset, c.seed) == (agent, preset, seed):
                return c
        raise KeyError((agent, preset, seed))

    @property
    def failed(self) -> list[CellResult]:
        return [c for c in self.cells if c.error is not None]

    def scores(self, agent: str, preset: str) -> dict | None:
        """Seed-averaged test scores for one (agent, preset) pair."""
        sums = [self.cell(agent, preset, s).summary for s in self.seeds]
        if any(s is None for s in sums):
            return None
        n = len(sums)
        return {
            "mean_t_srv": math.fsum(s.mean_t_srv for s in sums) / n,
            "mean_r_cum": math.fsum(s.mean_r_cum for s in sums) / n,
            "std_r_cum": math.fsum(s.std_r_cum for s in sums) / n,
        }

    def wins(self, agent: str, metric: str, lower_is_better: bool = False) -> tuple[int, int]:
        """(reshaped wins, seeds compared) for a summary attribute, paired by seed."""
        won = total = 0
        for s in self.seeds:
            d = self.cell(agent, "default", s).summary
            r = self.cell(agent, "reshaped", s).summary
            if d is None or r is None:
                continue
            total += 1
            a, b = getattr(r, metric), getattr(d, metric)
            won += (a < b) if lower_is_better else (a > b)
        return won, total

    def to_markdown(self) -> str:
        lines = ["# Default vs reshaped reward: test scores", ""]
        lines.append("Reward presets (per-step terms, episode step limit N_eps, risk timeout, reward limits):")
        lines.append("")
        lines.append("| preset | r_exp | r_obs | r_out | r_alive | N_eps | T_out [s] | R_up | R_down |")
        lines.append("|---|---|---|---|---|---|---|---|---|")
        for name in self.presets:
            p = PRESETS[name]
            lines.append(f"| {name} | {p.r_exp:+g} | {p.r_obs:+g} | {p.r_out:+g} | {p.r_alive:+g} | {p.n_eps} "
                         f"| {p.t_out:g} | {p.r_up:g} | {p.r_down:g} |")
        lines.append("")
        lines.append(f"Seeds: {self.seeds}. Scores are averaged over seeds; each seed's evaluation is its own "
                     "test run. T_srv in steps (x0.02 s). sigma is the population standard deviation.")
        lines.append("")
        lines.append("| score | reward | " + " | ".join(a.upper() for a in self.agents) + " |")
        lines.append("|---|---|" + "---|" * len(self.agents))
        for key, label in (("mean_t_srv", "mean T_srv"), ("mean_r_cum", "mean R_cum"), ("std_r_cum", "sigma(R_cum)")):
            for name in self.presets:
                vals = []
                for a in self.agents:
                    sc = self.scores(a, name)
                    vals.append("FAILED" if sc is None else repr(sc[key]))
                lines.append(f"| {label} | {name} | " + " | ".join(vals) + " |")
        if set(self.presets) >= {"default", "reshaped"}:
            lines += ["", "## Reshaped vs default, paired by seed", "",
                      "| agent | R_cum higher | sigma lower | T_srv higher-or-equal |", "|---|---|---|---|"]
            for a in self.agents:
                r_w, n = self.wins(a, "mean_r_cum")
                s_w, _ = self.wins(a, "std_r_cum", lower_is_better=True)
                t_w = self.t_srv_not_worse(a)
                lines.append(f"| {a.upper()} | {r_w}/{n} | {s_w}/{n} | {t_w}/{n} |")
        lines += ["", "## Test action counts (0 no action, 1 left, 2 right, 3 accelerate, 4 brake)", "",
                  "| agent | reward | a0 | a1 | a2 | a3 | a4 |", "|---|---|---|---|---|---|---|"]
        for a in self.agents:
            for name in self.presets:
                cells = [self.cell(a, name, s).summary for s in self.seeds]
                if any(c is None for c in cells):
                    continue
                hist = action_histogram([e for c in cells for e in c.episodes])
                lines.append(f"| {a.upper()} | {name} | " + " | ".join(str(int(x)) for x in hist) + " |")
        if self.failed:
            lines += ["", "## Failed cells", ""]
            lines += [f"- {c.agent}/{c.preset}/seed {c.seed}: {c.error}" for c in self.failed]
        return "\n".join(lines) + "\n"

    def t_srv_not_worse(self, agent: str) -> int:
        won = 0
        for s in self.seeds:
            d = self.cell(agent, "default", s).summary
            r = self.cell(agent, "reshaped", s).summary
            if d is not None and r is not None and r.mean_t_srv >= d.mean_t_srv:
                won += 1
        return won


def _run_cell(args) -> CellResult:
    agent, preset_name, seed, cfg, out_dir = args
    cell_dir = Path(out_dir) / f"{agent}_{preset_name}_{seed}" if out_dir is not None else None
    try:
        h = cfg.harness
        res = train(agent, preset_name, cfg.world, h.episodes, seed, cfg.agent_hyper(agent), h.observation,
                    h.raster_size, cell_dir, h.checkpoint_every, h.trace)
        track_seed = cfg.world.track_seed + 1 + seed if h.new_track_eval else None
        summary = evaluate(res.checkpoint, h.eval_episodes, h.eval_base_seed, track_seed, cell_dir)
        return CellResult(agent, preset_name, seed, summary)
    except Exception as exc:  # one failed cell must not sink the grid
        log.exception("cell %s/%s/%s failed", agent, preset_name, seed)
        return CellResult(agent, preset_name, seed, error=f"{type(exc).__name__}: {exc}")


def compare(agents, presets=("default", "reshaped"), seeds=(0,), cfg: ExperimentConfig | None = None,
            out_dir=None, workers: int | None = None) -> ComparisonReport:
    """Full factorial agent x preset x seed of train + evaluate."""
    agents, presets, seeds = list(agents), list(presets), list(seeds)
    if not agents:
        raise ValueError("need at least one agent")
    cfg = cfg or ExperimentConfig()
    if workers is None:
        workers = int(os.environ.get("RISKSHAPE_THREADS", "1"))
    jobs = [(a, p, s, cfg, out_dir) for a in agents for p in presets for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, jobs))
    else:
        cells = [_run_cell(j) for j in jobs]
    report = ComparisonReport(agents, presets, seeds, cells)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "report.md").write_text(report.to_markdown())
    return report


__all__ = [
    "EpisodeStats", "TrainingCurve", "EvalSummary", "TrainResult", "CellResult", "ComparisonReport",
    "TrainingAborted", "train", "evaluate", "action_histogram", "compare", "run_episode", "episode_seed",
]
