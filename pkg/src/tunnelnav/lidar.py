"""Two tilted 2D LiDARs: beam geometry, scanning and fusion into a body cloud."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Attitude, rotation_matrix
from .tunnel import _tunnel

UPPER = "upper"
LOWER = "lower"

DEFAULT_MOUNTS = {UPPER: (0.0, 0.0, 0.05), LOWER: (0.0, 0.0, -0.05)}


@dataclass(frozen=True)
class LidarConfig:
    tilt: float = math.radians(45.0)
    fov: float = 2 * math.pi
    resolution: float = math.radians(1.0)
    rate: float = 60.0
    max_range: float = 10.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.resolution <= 0 or self.rate <= 0:
            raise ValueError("resolution and rate must be positive")
        if not 0.0 < abs(self.tilt) < math.pi / 2:
            raise ValueError("|tilt| must lie in (0, 90) degrees")
        if self.max_range <= 0 or self.noise_sigma < 0:
            raise ValueError("invalid range or noise settings")

    @property
    def bearings(self) -> np.ndarray:
        n = int(round(self.fov / self.resolution))
        return -self.fov / 2 + self.resolution * np.arange(n + 1)


@dataclass
class Scan:
    bearings: np.ndarray
    ranges: np.ndarray  # nan marks a miss
    timestamp: float
    unit: str
    tilt: float
    max_range: float = 10.0

    @property
    def hits(self) -> np.ndarray:
        return ~np.isnan(self.ranges)


@dataclass
class BodyCloud:
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    units: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype="<U5"))

    def __len__(self) -> int:
        return len(self.points)


def unit_tilt(cfg: LidarConfig, unit: str) -> float:
    return abs(cfg.tilt) if unit == UPPER else -abs(cfg.tilt)


def beam_directions(bearings: np.ndarray, tilt: float) -> np.ndarray:
    """Body-frame unit beams ``Ry(-tilt) @ (cos b, sin b, 0)``; positive tilt raises the front."""
    b = np.asarray(bearings, dtype=float)
    ct, st = math.cos(tilt), math.sin(tilt)
    return np.column_stack([ct * np.cos(b), np.sin(b), st * np.cos(b)])


def scan(world, position, attitude: Attitude, cfg: LidarConfig, unit: str, rng=None,
         timestamp: float = 0.0, mount=None, s_hint: float | None = None) -> Scan:
    """Simulate one LiDAR unit at a world pose.

    ``rng`` is a numpy Generator used for range noise; it is only consulted
    when ``cfg.noise_sigma > 0``.
    """
    tunnel = _tunnel(world)
    tilt = unit_tilt(cfg, unit)
    bearings = cfg.bearings
    mount = np.asarray(DEFAULT_MOUNTS[unit] if mount is None else mount, dtype=float)
    R = rotation_matrix(attitude)
    origin = np.asarray(position, dtype=float) + R @ mount
    dirs = beam_directions(bearings, tilt) @ R.T
    ranges = tunnel.raycast_many(origin, dirs, cfg.max_range, s_origin=s_hint)
    if cfg.noise_sigma > 0:
        if rng is None:
            raise ValueError("a seeded rng is required when noise_sigma > 0")
        ranges = ranges + rng.normal(0.0, cfg.noise_sigma, size=ranges.shape)
        ranges = np.where(ranges > 0, ranges, np.nan)
    ranges = np.where(ranges <= cfg.max_range, ranges, np.nan)
    return Scan(bearings, ranges, timestamp, unit, tilt, cfg.max_range)


def scan_pair(world, position, attitude: Attitude, cfg: LidarConfig, rng=None, timestamp: float = 0.0,
              mounts=None, s_hint: float | None = None) -> tuple[Scan, Scan]:
    mounts = mounts or DEFAULT_MOUNTS
    up = scan(world, position, attitude, cfg, UPPER, rng, timestamp, mounts[UPPER], s_hint)
    lo = scan(world, position, attitude, cfg, LOWER, rng, timestamp, mounts[LOWER], s_hint)
    return up, lo


def fuse(upper: Scan, lower: Scan, mounts=None) -> BodyCloud:
    """Convert both scans to one body-frame cloud, dropping misses."""
    mounts = mounts or DEFAULT_MOUNTS
    pts, units = [], []
    for sc in (upper, lower):
        ok = sc.hits
        d = beam_directions(sc.bearings[ok], sc.tilt)
        pts.append(np.asarray(mounts[sc.unit], dtype=float) + sc.ranges[ok, None] * d)
        units.append(np.full(int(ok.sum()), sc.unit))
    return BodyCloud(np.vstack(pts), np.concatenate(units))
