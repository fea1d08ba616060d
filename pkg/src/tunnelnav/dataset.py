"""Synthetic training sets for the learned yaw estimator.

Each sample teleports the vehicle to a random pose inside a random tunnel,
fuses both LiDAR scans, stabilises with the true roll and pitch, rasterises
the cloud and labels it with the ground-truth relative yaw.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import lidar, yaw
from .geometry import Attitude
from .tunnel import TunnelSpec, build

TUNNEL_KINDS = ("straight", "arc", "s_curve", "double_s", "triple_s")
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class DatasetConfig:
    n: int = 10000
    seed: int = 0
    per_tunnel: int = 400
    psi_range_deg: float = 40.0
    rp_range_deg: float = 20.0
    max_offset: float = 2.0
    radius_range: tuple = (1.5, 4.0)
    roughness_max: float = 0.15
    length_m: float = 120.0

    def __post_init__(self):
        if self.n < 1 or self.per_tunnel < 1:
            raise ValueError("n and per_tunnel must be positive")
        if not 0 < self.psi_range_deg <= 40 or not 0 <= self.rp_range_deg <= 20:
            raise ValueError("yaw range must lie in (0, 40] and roll/pitch in [0, 20] degrees")


@dataclass
class Dataset:
    images: np.ndarray  # (N, 3, 80, 60) float32
    labels: np.ndarray  # (N,) radians
    poses: np.ndarray  # (N, 7): x, y, z, roll, pitch, yaw, tunnel index
    tunnels: list[TunnelSpec]

    def __len__(self) -> int:
        return len(self.labels)


def random_tunnel(rng: np.random.Generator, cfg: DatasetConfig) -> TunnelSpec:
    kind = str(rng.choice(TUNNEL_KINDS))
    return TunnelSpec(
        kind=kind,
        radius_m=float(rng.uniform(*cfg.radius_range)),
        profile=str(rng.choice(["circle", "horseshoe"])),
        roughness=float(rng.uniform(0.0, cfg.roughness_max)),
        seed=int(rng.integers(0, 2**31 - 1)),
        length_m=cfg.length_m,
    )


def _offset(rng, spec: TunnelSpec, max_offset: float) -> tuple[float, float]:
    # uniform in a disc that keeps the vehicle well inside the nominal section
    lim = min(max_offset, 0.5 * spec.radius_m)
    rho = lim * math.sqrt(rng.uniform())
    th = rng.uniform(-math.pi, math.pi)
    y, z = rho * math.cos(th), rho * math.sin(th)
    if spec.profile == "horseshoe":
        z = max(z, -spec.flat_floor_fraction * spec.radius_m * 0.5)
    return y, z


def generate(cfg: DatasetConfig, lidar_cfg: lidar.LidarConfig | None = None, progress=None,
             specs: list[TunnelSpec] | None = None) -> Dataset:
    """Sample ``cfg.n`` labelled rasters.

    Tunnels are drawn at random every ``cfg.per_tunnel`` samples unless
    ``specs`` is given, in which case those are cycled through instead.
    """
    lidar_cfg = lidar_cfg or lidar.LidarConfig()
    rng = np.random.default_rng(cfg.seed)
    psi_r = math.radians(cfg.psi_range_deg)
    rp_r = math.radians(cfg.rp_range_deg)
    images = np.zeros((cfg.n, *yaw.IMG_SHAPE), dtype=np.float32)
    labels = np.zeros(cfg.n)
    poses = np.zeros((cfg.n, 7))
    tunnels: list[TunnelSpec] = []
    tun = None
    for i in range(cfg.n):
        if i % cfg.per_tunnel == 0:
            k = i // cfg.per_tunnel
            spec = specs[k % len(specs)] if specs else random_tunnel(rng, cfg)
            tunnels.append(spec)
            tun = build(spec)
        s = float(rng.uniform(5.0, tun.length - 5.0))
        y, z = _offset(rng, spec, cfg.max_offset)
        psi = float(rng.uniform(-psi_r, psi_r))
        roll, pitch = (float(v) for v in rng.uniform(-rp_r, rp_r, size=2))
        pos, heading = tun.pose_at(s, y, z, psi)
        att = Attitude(roll, pitch, heading)
        cloud = lidar.fuse(*lidar.scan_pair(tun, pos, att, lidar_cfg, rng, s_hint=s))
        stab = yaw.stabilize(cloud, (roll, pitch))
        images[i] = yaw.rasterize(stab, (roll, pitch))
        labels[i] = tun.dynamic_ref(pos, att).psi_d
        poses[i] = (*pos, roll, pitch, heading, len(tunnels) - 1)
        if progress is not None:
            progress(i + 1)
    return Dataset(images, labels, poses, tunnels)


def save(ds: Dataset, path, cfg: DatasetConfig | None = None) -> Path:
    """Write ``<path>`` (npz arrays) and ``<path>.manifest.json`` (seeds and tunnels)."""
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, images=ds.images, labels=ds.labels, poses=ds.poses)
    manifest = {
        "version": MANIFEST_VERSION,
        "n": len(ds),
        "config": asdict(cfg) if cfg is not None else None,
        "tunnels": [t.to_dict() for t in ds.tunnels],
    }
    mpath = path.with_name(path.name + ".manifest.json")
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return mpath


def load(path) -> Dataset:
    path = Path(path)
    with np.load(path) as z:
        images, labels, poses = z["images"], z["labels"], z["poses"]
    mpath = path.with_name(path.name + ".manifest.json")
    tunnels = []
    if mpath.exists():
        tunnels = [TunnelSpec.from_dict(t) for t in json.loads(mpath.read_text())["tunnels"]]
    return Dataset(images, labels, poses, tunnels)
