"""Procedural track, obstacles, visited-tile bookkeeping and car kinematics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline

DT = 0.02  # 50 Hz frame time


class TrackGenerationError(RuntimeError):
    def __init__(self, seed: int, reason: str):
        super().__init__(f"track generation failed for seed={seed}: {reason}")
        self.seed = seed
        self.reason = reason


@dataclass(frozen=True)
class TrackGenParams:
    checkpoints: int = 10
    radius: float = 48.0
    radius_jitter: float = 0.3
    angle_jitter: float = 0.4
    tile_length: float = 1.0
    half_width: float = 6.0
    min_tiles: int = 100
    max_tiles: int = 400
    min_turn_radius: float = 12.0
    max_retries: int = 50

    def validate(self) -> None:
        if not self.min_tiles < self.max_tiles:
            raise ValueError("min_tiles must be < max_tiles")
        if self.half_width <= 0 or self.tile_length <= 0 or self.radius <= 0:
            raise ValueError("half_width, tile_length and radius must be positive")
        if self.checkpoints < 4:
            raise ValueError("need at least 4 checkpoints")
        if not 0 <= self.radius_jitter < 1:
            raise ValueError("radius_jitter must be in [0, 1)")


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.5
    v_max: float = 30.0
    max_steer: float = 0.4
    drag: float = 0.05  # 1/s
    grass_multiplier: float = 0.6  # fraction of speed kept per second on grass
    accel: float = 8.0  # m/s^2 at full throttle
    brake: float = 10.0  # m/s^2 at full brake
    car_radius: float = 1.0


@dataclass(frozen=True)
class TrackTile:
    index: int
    center: tuple[float, float]
    heading: float
    half_width: float


@dataclass(frozen=True)
class Obstacle:
    tile_index: int
    offset: float
    radius: float


@dataclass(frozen=True)
class Track:
    tiles: tuple[TrackTile, ...]
    obstacles: tuple[Obstacle, ...]
    seed: int
    tile_length: float
    # Cached arrays for vectorised queries; derived from `tiles`.
    centers: np.ndarray = field(init=False, repr=False, compare=False)
    headings: np.ndarray = field(init=False, repr=False, compare=False)
    half_widths: np.ndarray = field(init=False, repr=False, compare=False)
    tangents: np.ndarray = field(init=False, repr=False, compare=False)
    normals: np.ndarray = field(init=False, repr=False, compare=False)
    obstacle_xy: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c = np.array([t.center for t in self.tiles], dtype=float).reshape(-1, 2)
        h = np.array([t.heading for t in self.tiles], dtype=float)
        tang = np.stack([np.cos(h), np.sin(h)], axis=1)
        norm = np.stack([-np.sin(h), np.cos(h)], axis=1)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "headings", h)
        object.__setattr__(self, "half_widths", np.array([t.half_width for t in self.tiles], dtype=float))
        object.__setattr__(self, "tangents", tang)
        object.__setattr__(self, "normals", norm)
        obs = np.array(
            [c[o.tile_index] + o.offset * norm[o.tile_index] for o in self.obstacles], dtype=float
        ).reshape(-1, 2)
        object.__setattr__(self, "obstacle_xy", obs)

    def __len__(self) -> int:
        return len(self.tiles)

    @property
    def obstacle_radii(self) -> np.ndarray:
        return np.array([o.radius for o in self.obstacles], dtype=float)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "tile_length": self.tile_length,
            "tiles": [
                {"index": t.index, "cx": t.center[0], "cy": t.center[1], "heading": t.heading,
                 "half_width": t.half_width}
                for t in self.tiles
            ],
            "obstacles": [{"tile": o.tile_index, "offset": o.offset, "radius": o.radius} for o in self.obstacles],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "Track":
        tiles = tuple(
            TrackTile(int(t["index"]), (float(t["cx"]), float(t["cy"])), float(t["heading"]), float(t["half_width"]))
            for t in d["tiles"]
        )
        obstacles = tuple(Obstacle(int(o["tile"]), float(o["offset"]), float(o["radius"])) for o in d["obstacles"])
        return cls(tiles, obstacles, int(d["seed"]), float(d["tile_length"]))

    @classmethod
    def from_json(cls, text: str) -> "Track":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class CarState:
    position: tuple[float, float]
    heading: float
    speed: float = 0.0
    steer_angle: float = 0.0


class Location(NamedTuple):
    tile: int
    offset: float


class VisitedSet:
    """Tiles that already paid the exploration bonus this episode."""

    def __init__(self, n_tiles: int):
        self.n_tiles = n_tiles
        self._seen: set[int] = set()

    def mark(self, tile: int) -> bool:
        if not 0 <= tile < self.n_tiles:
            raise IndexError(f"tile {tile} out of range 0..{self.n_tiles - 1}")
        if tile in self._seen:
            return False
        self._seen.add(tile)
        return True

    def clear(self) -> None:
        self._seen.clear()

    def __contains__(self, tile: int) -> bool:
        return tile in self._seen

    def __len__(self) -> int:
        return len(self._seen)


def mark_visited(visited: VisitedSet, tile: int) -> bool:
    return visited.mark(tile)


def _wrap(angle):
    return (angle + np.pi) % (2 * np.pi) - np.pi


def _try_generate(rng: np.random.Generator, params: TrackGenParams) -> tuple[np.ndarray, np.ndarray, float] | str:
    k = params.checkpoints
    base = 2 * np.pi * np.arange(k) / k
    angles = base + rng.uniform(-params.angle_jitter, params.angle_jitter, k) * (np.pi / k)
    radii = params.radius * (1 + rng.uniform(-params.radius_jitter, params.radius_jitter, k))
    pts = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    pts = np.vstack([pts, pts[:1]])

    # closed spline parameterised by chord length
    chord = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))]
    spline = CubicSpline(chord, pts, bc_type="periodic")
    dense_u = np.linspace(0.0, chord[-1], 4000, endpoint=False)
    dense = spline(dense_u)
    seg = np.linalg.norm(np.diff(np.vstack([dense, dense[:1]]), axis=0), axis=1)
    arc = np.r_[0.0, np.cumsum(seg)]
    perimeter = arc[-1]

    n = int(round(perimeter / params.tile_length))
    if not params.min_tiles <= n <= params.max_tiles:
        return f"tile count {n} outside [{params.min_tiles}, {params.max_tiles}]"
    spacing = perimeter / n
    u = np.interp(np.arange(n) * spacing, arc, np.r_[dense_u, chord[-1]])
    centers = spline(u)
    d1 = spline(u, 1)
    d2 = spline(u, 2)
    headings = np.arctan2(d1[:, 1], d1[:, 0])
    speed = np.linalg.norm(d1, axis=1)
    curvature = np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed**3
    if curvature.max() > 1.0 / params.min_turn_radius:
        return f"turn radius {1 / curvature.max():.2f} m below {params.min_turn_radius}"

    # bands of non-neighbouring tiles must not overlap
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    idx = np.arange(n)
    gap = np.abs(idx[:, None] - idx[None, :])
    gap = np.minimum(gap, n - gap)
    window = int(math.ceil(math.pi * params.half_width * 2 / spacing)) + 2
    far = gap > window
    clearance = 2 * params.half_width + 2 * spacing
    if np.any(dist[far] < clearance):
        return "track bands overlap"
    return centers, headings, spacing


def generate_track(seed: int, params: TrackGenParams | None = None) -> Track:
    """Closed, non-self-intersecting loop of fixed-length tiles, deterministic in (seed, params)."""
    params = params or TrackGenParams()
    params.validate()
    rng = np.random.default_rng(seed)
    reason = "no attempts"
    for _ in range(params.max_retries):
        out = _try_generate(rng, params)
        if isinstance(out, str):
            reason = out
            continue
        centers, headings, spacing = out
        tiles = tuple(
            TrackTile(i, (float(centers[i, 0]), float(centers[i, 1])), float(headings[i]), float(params.half_width))
            for i in range(len(centers))
        )
        return Track(tiles, (), int(seed), float(spacing))
    raise TrackGenerationError(seed, reason)


SPAWN_PROTECTION = 10


def place_obstacles(track: Track, seed: int, count: int, radius: float = 1.5) -> Track:
    """Put `count` disc obstacles on distinct tiles outside the protected window 0..9."""
    n = len(track)
    if count < 0:
        raise ValueError("count must be >= 0")
    if count > n // 10:
        raise ValueError(f"count={count} too large for a {n}-tile track (max {n // 10})")
    if count == 0:
        return track
    rng = np.random.default_rng(seed)
    tiles = np.sort(rng.choice(np.arange(SPAWN_PROTECTION, n), size=count, replace=False))
    obstacles = []
    for t in tiles:
        hw = track.tiles[t].half_width
        span = max(hw - radius, 0.0)
        offset = float(rng.uniform(-span, span))
        obstacles.append(Obstacle(int(t), offset, float(radius)))
    return replace(track, obstacles=tuple(obstacles))


def locate(track: Track, position) -> Location | None:
    """Nearest tile whose band contains `position`, with signed lateral offset (left positive).

    A tile's band is the rectangle |longitudinal| <= tile_length, |lateral| <= half_width
    around its centre; neighbouring bands overlap so curves leave no gaps.
    """
    rel = np.asarray(position, dtype=float) - track.centers
    lon = np.einsum("ij,ij->i", rel, track.tangents)
    lat = np.einsum("ij,ij->i", rel, track.normals)
    inside = (np.abs(lon) <= track.tile_length) & (np.abs(lat) <= track.half_widths)
    if not inside.any():
        return None
    d2 = np.where(inside, np.einsum("ij,ij->i", rel, rel), np.inf)
    i = int(np.argmin(d2))
    return Location(i, float(lat[i]))


def locate_many(track: Track, points: np.ndarray) -> np.ndarray:
    """Vectorised on-track mask for an (N, 2) array of points."""
    pts = np.asarray(points, dtype=float)
    out = np.zeros(len(pts), dtype=bool)
    if len(pts) == 0:
        return out
    # only tiles whose footprint can reach the points' bounding box matter
    reach = track.tile_length + np.max(track.half_widths)
    lo, hi = pts.min(axis=0) - reach, pts.max(axis=0) + reach
    keep = np.all((track.centers >= lo) & (track.centers <= hi), axis=1)
    centers, tangents, normals = track.centers[keep], track.tangents[keep], track.normals[keep]
    half = np.broadcast_to(track.half_widths, (len(track.centers),))[keep]
    for start in range(0, len(pts), 2048):
        rel = pts[start:start + 2048, None, :] - centers[None, :, :]
        lon = rel[..., 0] * tangents[:, 0] + rel[..., 1] * tangents[:, 1]
        lat = rel[..., 0] * normals[:, 0] + rel[..., 1] * normals[:, 1]
        out[start:start + 2048] = np.any((np.abs(lon) <= track.tile_length) & (np.abs(lat) <= half), axis=1)
    return out


def step_dynamics(car: CarState, control, dt: float = DT, params: VehicleParams | None = None,
                  on_grass: bool = False) -> CarState:
    """One explicit-Euler kinematic-bicycle tick.

    Negative `control.steer` is a left turn; the stored steer angle is positive to the left.
    """
    p = params or VehicleParams()
    steer = min(max(float(control.steer), -1.0), 1.0)
    accel = min(max(float(control.accel), 0.0), 1.0)
    brake = min(max(float(control.brake), 0.0), 1.0)

    steer_angle = -steer * p.max_steer
    v = car.speed
    x = car.position[0] + v * math.cos(car.heading) * dt
    y = car.position[1] + v * math.sin(car.heading) * dt
    heading = car.heading + v / p.wheelbase * math.tan(steer_angle) * dt
    if heading > math.pi or heading < -math.pi:
        heading = (heading + math.pi) % (2 * math.pi) - math.pi

    v = v + (p.accel * accel - p.brake * brake) * dt
    v *= math.exp(-p.drag * dt)
    if on_grass:
        v *= p.grass_multiplier ** dt
    v = min(max(v, 0.0), p.v_max)
    return CarState((x, y), heading, v, steer_angle)


def obstacle_hit(track: Track, position, car_radius: float) -> bool:
    if not track.obstacles:
        return False
    d = np.linalg.norm(track.obstacle_xy - np.asarray(position, dtype=float), axis=1)
    return bool(np.any(d < track.obstacle_radii + car_radius))


def heading_error(track: Track, tile: int, heading: float) -> float:
    return float(_wrap(heading - track.headings[tile]))
