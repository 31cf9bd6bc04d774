"""Gym-style racing environment wiring world physics to the shaped reward."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import IO, NamedTuple

import numpy as np

from riskshape.reward import (
    EpisodeAccumulator,
    RewardConfig,
    StepEvents,
    TerminationCause,
    check_termination,
    compute_reward,
)
from riskshape.world import (
    DT,
    CarState,
    Track,
    VehicleParams,
    VisitedSet,
    locate,
    locate_many,
    obstacle_hit,
    step_dynamics,
)

__all__ = [
    "Action", "ContinuousControl", "StepEvents", "Transition", "StepResult", "RacingEnv",
    "discrete_to_control", "FEATURE_DIM", "FEATURE_NAMES", "EpisodeTerminatedError",
]


class Action(IntEnum):
    NO_ACTION = 0
    STEER_LEFT = 1
    STEER_RIGHT = 2
    ACCELERATE = 3
    BRAKE = 4


@dataclass(frozen=True)
class ContinuousControl:
    steer: float = 0.0
    accel: float = 0.0
    brake: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "steer", min(max(float(self.steer), -1.0), 1.0))
        object.__setattr__(self, "accel", min(max(float(self.accel), 0.0), 1.0))
        object.__setattr__(self, "brake", min(max(float(self.brake), 0.0), 1.0))

    def as_array(self) -> np.ndarray:
        return np.array([self.steer, self.accel, self.brake])


_CONTROL_TABLE = {
    Action.NO_ACTION: ContinuousControl(0.0, 0.0, 0.0),
    Action.STEER_LEFT: ContinuousControl(-1.0, 0.0, 0.0),
    Action.STEER_RIGHT: ContinuousControl(1.0, 0.0, 0.0),
    Action.ACCELERATE: ContinuousControl(0.0, 1.0, 0.0),
    Action.BRAKE: ContinuousControl(0.0, 0.0, 0.8),
}


def discrete_to_control(a: Action | int) -> ContinuousControl:
    return _CONTROL_TABLE[Action(a)]


class Transition(NamedTuple):
    s: np.ndarray
    a: object
    r: float
    s_next: np.ndarray
    done: bool


class StepResult(NamedTuple):
    obs: np.ndarray
    reward: float
    done: bool
    events: StepEvents
    cause: TerminationCause | None


class EpisodeTerminatedError(RuntimeError):
    pass


LOOKAHEAD_TILES = (3, 8, 15, 25)
OBSTACLE_RANGE = 50.0
FEATURE_NAMES = (
    ("speed", "lateral", "heading_error")
    + tuple(f"curvature_{k}" for k in LOOKAHEAD_TILES)
    + ("obstacle_distance", "obstacle_bearing", "on_track")
)
FEATURE_DIM = len(FEATURE_NAMES)

GRASS_LEVEL = 0.25
TRACK_LEVEL = 0.5
OBSTACLE_LEVEL = 1.0
RASTER_BASE = 96
VIEW_METERS = 48.0  # side of the square view at any resolution
CAR_ANCHOR = 0.125  # car sits this fraction of the view above the bottom edge


def _wrap(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def _curvatures(track: Track) -> np.ndarray:
    dh = np.diff(np.r_[track.headings, track.headings[0]])
    dh = (dh + np.pi) % (2 * np.pi) - np.pi
    return dh / track.tile_length


class RacingEnv:
    """Top-down racing MDP stepped at 50 Hz.

    `obs_mode` is "features" (fixed-length vector, see FEATURE_NAMES) or "raster"
    (bird's-eye grayscale image with `raster_size` a divisor of 96).
    """

    def __init__(self, track: Track, reward: RewardConfig, obs_mode: str = "features",
                 raster_size: int = 24, vehicle: VehicleParams | None = None, dt: float = DT,
                 test_mode: bool = False, trace: IO[str] | None = None):
        if obs_mode not in ("features", "raster"):
            raise ValueError(f"unknown obs_mode {obs_mode!r}")
        if RASTER_BASE % raster_size:
            raise ValueError("raster_size must divide 96")
        self.track = track
        self.reward_config = reward
        self.obs_mode = obs_mode
        self.raster_size = raster_size
        self.vehicle = vehicle or VehicleParams()
        self.dt = dt
        self.test_mode = test_mode
        self.trace = trace
        self.n_tiles = len(track)
        self._curv = _curvatures(track)
        self.visited = VisitedSet(self.n_tiles)
        self.acc = EpisodeAccumulator()
        self.car: CarState | None = None
        self.location = None
        self.done = True
        self.cause: TerminationCause | None = None
        self.spawn_tile = 0
        self.episode_index = -1
        self._spawn_tiles = self._safe_spawn_tiles()

    def _safe_spawn_tiles(self) -> np.ndarray:
        tiles = np.arange(self.n_tiles)
        if not len(self.track.obstacles):
            return tiles
        d = self.track.centers[:, None, :] - self.track.obstacle_xy[None, :, :]
        reach = self.track.obstacle_radii + self.vehicle.car_radius
        blocked = np.any(np.hypot(d[..., 0], d[..., 1]) < reach, axis=1)
        return tiles[~blocked]

    @property
    def obs_dim(self) -> int:
        return FEATURE_DIM if self.obs_mode == "features" else self.raster_size ** 2

    def reset(self, episode_seed: int) -> np.ndarray:
        rng = np.random.default_rng(episode_seed)
        # uniform over tiles, minus those where the car would spawn inside an obstacle
        tile = int(self._spawn_tiles[rng.integers(len(self._spawn_tiles))])
        self.spawn_tile = tile
        self.episode_index += 1
        self.car = CarState(tuple(self.track.centers[tile]), float(self.track.headings[tile]), 0.0, 0.0)
        self.visited.clear()
        # spawning on a tile does not pay the exploration bonus
        self.visited.mark(tile)
        self.acc.reset()
        self.location = locate(self.track, self.car.position)
        self.done = False
        self.cause = None
        return self.observe()

    def step(self, action: Action | int | ContinuousControl) -> StepResult:
        if self.done:
            raise EpisodeTerminatedError("step() called on a terminated episode; call reset()")
        if isinstance(action, ContinuousControl):
            control = action
        else:
            action = Action(action)
            control = discrete_to_control(action)

        on_grass = self.location is None
        self.car = step_dynamics(self.car, control, self.dt, self.vehicle, on_grass=on_grass)
        self.location = locate(self.track, self.car.position)
        off_track = self.location is None
        new_tile = (not off_track) and self.visited.mark(self.location.tile)
        collided = obstacle_hit(self.track, self.car.position, self.vehicle.car_radius)
        consecutive = self.acc.consecutive_off_track_steps + 1 if off_track else 0
        events = StepEvents(new_tile, collided, off_track, self.acc.step_count, consecutive)

        reward = compute_reward(events, self.reward_config)
        self.acc.update(reward, events)
        cause = check_termination(self.acc, events, self.reward_config, self.dt, self.test_mode)
        self.done = cause is not None
        self.cause = cause
        obs = self.observe()
        if self.trace is not None:
            self._log(action, reward, events, cause)
        return StepResult(obs, reward, self.done, events, cause)

    def _log(self, action, reward, events, cause):
        if isinstance(action, ContinuousControl):
            a = [action.steer, action.accel, action.brake]
        else:
            a = int(action)
        rec = {
            "episode": self.episode_index, "t": events.step_index, "action": a, "reward": reward, "events": events.to_dict(),
            "cum_reward": self.acc.cum_reward, "cause": cause.value if cause else None,
        }
        self.trace.write(json.dumps(rec) + "\n")

    def observe(self, mode: str | None = None) -> np.ndarray:
        mode = mode or self.obs_mode
        if mode == "features":
            return self.features()
        if mode == "raster":
            return self.render(self.raster_size).ravel()
        raise ValueError(f"unknown observation mode {mode!r}")

    def _reference_tile(self) -> int:
        if self.location is not None:
            return self.location.tile
        d = self.track.centers - np.asarray(self.car.position)
        return int(np.argmin(np.einsum("ij,ij->i", d, d)))

    def features(self) -> np.ndarray:
        car, track = self.car, self.track
        tile = self._reference_tile()
        rel = np.asarray(car.position) - track.centers[tile]
        lateral = float(rel @ track.normals[tile]) / track.half_widths[tile]
        herr = _wrap(car.heading - track.headings[tile])
        f = np.empty(FEATURE_DIM)
        f[0] = car.speed / self.vehicle.v_max
        f[1] = max(min(lateral, 3.0), -3.0)
        f[2] = herr / math.pi
        for j, k in enumerate(LOOKAHEAD_TILES):
            f[3 + j] = 10.0 * self._curv[(tile + k) % self.n_tiles]
        base = 3 + len(LOOKAHEAD_TILES)
        if len(track.obstacles):
            d = track.obstacle_xy - np.asarray(car.position)
            dist = np.hypot(d[:, 0], d[:, 1])
            i = int(np.argmin(dist))
            f[base] = min(dist[i], OBSTACLE_RANGE) / OBSTACLE_RANGE
            f[base + 1] = _wrap(math.atan2(d[i, 1], d[i, 0]) - car.heading) / math.pi
        else:
            f[base] = 1.0
            f[base + 1] = 0.0
        f[base + 2] = 0.0 if self.location is None else 1.0
        return f

    def render(self, size: int | None = None) -> np.ndarray:
        """Car-centred grayscale view, heading up, car at bottom-centre.

        Each pixel averages the 96-grid sample points it covers, so a coarse
        raster is the block mean of the 96x96 one.
        """
        size = size or self.raster_size
        if RASTER_BASE % size:
            raise ValueError("size must divide 96")
        n = RASTER_BASE
        res = VIEW_METERS / n
        centers = (np.arange(n) + 0.5) * res
        forward = (VIEW_METERS - centers)[:, None] - CAR_ANCHOR * VIEW_METERS  # rows: top is far ahead
        right = (centers - VIEW_METERS / 2)[None, :]
        fw = np.broadcast_to(forward, (n, n)).ravel()
        rt = np.broadcast_to(right, (n, n)).ravel()
        c, s = math.cos(self.car.heading), math.sin(self.car.heading)
        px = self.car.position[0] + fw * c + rt * s
        py = self.car.position[1] + fw * s - rt * c
        pts = np.stack([px, py], axis=1)

        img = np.full(n * n, GRASS_LEVEL)
        img[locate_many(self.track, pts)] = TRACK_LEVEL
        if len(self.track.obstacles):
            d = pts[:, None, :] - self.track.obstacle_xy[None, :, :]
            hit = np.any(np.hypot(d[..., 0], d[..., 1]) < self.track.obstacle_radii, axis=1)
            img[hit] = OBSTACLE_LEVEL
        img = img.reshape(n, n)
        k = n // size
        return img.reshape(size, k, size, k).mean(axis=(1, 3))
