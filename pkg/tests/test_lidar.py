import math

import numpy as np
import pytest

from tunnelnav import lidar
from tunnelnav.geometry import Attitude
from tunnelnav.lidar import LOWER, UPPER, LidarConfig, Scan

CFG = LidarConfig()
ZERO_MOUNTS = {UPPER: (0.0, 0.0, 0.0), LOWER: (0.0, 0.0, 0.0)}


def beam(sc, deg):
    return float(sc.ranges[np.argmin(np.abs(sc.bearings - math.radians(deg)))])


def test_config_validation():
    for bad in (dict(resolution=0), dict(rate=0), dict(tilt=0.0), dict(tilt=math.pi / 2)):
        with pytest.raises(ValueError):
            LidarConfig(**bad)


def test_beam_count_and_ordering():
    b = CFG.bearings
    assert len(b) == 361
    assert np.all(np.diff(b) > 0)


def test_lateral_beam_ignores_tilt(straight):
    sc = lidar.scan(straight, (20, 0, 0), Attitude(), CFG, UPPER, mount=(0, 0, 0))
    assert abs(beam(sc, 90) - 2.0) <= 1e-3


def test_forward_beam_climbs_to_roof(straight):
    sc = lidar.scan(straight, (20, 0, 0), Attitude(), CFG, UPPER, mount=(0, 0, 0))
    assert abs(beam(sc, 0) - 2 * math.sqrt(2)) <= 1e-3


def test_noise_free_scans_repeat(straight):
    a = lidar.scan(straight, (20, 0.3, 0.1), Attitude(0.1, 0.05, 0.2), CFG, LOWER)
    b = lidar.scan(straight, (20, 0.3, 0.1), Attitude(0.1, 0.05, 0.2), CFG, LOWER)
    assert np.array_equal(a.ranges, b.ranges, equal_nan=True)


def test_noisy_scans_seeded(straight):
    cfg = LidarConfig(noise_sigma=0.01)
    a = lidar.scan(straight, (20, 0, 0), Attitude(), cfg, UPPER, np.random.default_rng(4))
    b = lidar.scan(straight, (20, 0, 0), Attitude(), cfg, UPPER, np.random.default_rng(4))
    c = lidar.scan(straight, (20, 0, 0), Attitude(), cfg, UPPER, np.random.default_rng(5))
    assert np.array_equal(a.ranges, b.ranges, equal_nan=True)
    assert not np.array_equal(a.ranges, c.ranges, equal_nan=True)


def test_ranges_within_limits(straight):
    sc = lidar.scan(straight, (20, 0, 0), Attitude(), LidarConfig(max_range=2.5), UPPER)
    r = sc.ranges[sc.hits]
    assert np.all(r > 0) and np.all(r <= 2.5)
    assert (~sc.hits).any()


def test_fuse_all_miss_is_empty():
    b = CFG.bearings
    up = Scan(b, np.full(len(b), np.nan), 0.0, UPPER, CFG.tilt)
    lo = Scan(b, np.full(len(b), np.nan), 0.0, LOWER, -CFG.tilt)
    assert len(lidar.fuse(up, lo)) == 0


def test_fuse_single_lateral_return():
    b = np.array([math.pi / 2])
    up = Scan(b, np.array([2.0]), 0.0, UPPER, CFG.tilt)
    lo = Scan(b, np.array([np.nan]), 0.0, LOWER, -CFG.tilt)
    cloud = lidar.fuse(up, lo, ZERO_MOUNTS)
    assert np.allclose(cloud.points, [(0, 2, 0)], atol=1e-15)
    assert cloud.units.tolist() == [UPPER]


def test_fused_points_lie_on_section_circle(straight):
    cloud = lidar.fuse(*lidar.scan_pair(straight, (20, 0, 0), Attitude(), CFG))
    assert len(cloud) == 2 * 361
    rho = np.hypot(cloud.points[:, 1], cloud.points[:, 2])
    assert np.all(np.abs(rho - 2.0) <= 2e-3)


def test_point_norms_bounded(straight):
    cloud = lidar.fuse(*lidar.scan_pair(straight, (20, 1.0, -0.5), Attitude(0.2, -0.1, 0.3), CFG))
    assert np.all(np.linalg.norm(cloud.points, axis=1) <= CFG.max_range + 0.05 + 1e-12)


def _projected(world, psi, tilt=CFG.tilt):
    cfg = LidarConfig(tilt=tilt)
    pos, h = world.pose_at(20, 0, 0, psi)
    return lidar.fuse(*lidar.scan_pair(world, pos, Attitude(yaw=h), cfg, mounts=ZERO_MOUNTS)).points


def _set_distance(a, b):
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def test_yaw_sign_is_observable_in_projection(straight):
    a = _projected(straight, math.radians(20))[:, 1:]
    b = _projected(straight, math.radians(-20))[:, 1:]
    assert _set_distance(a, b) > 0.05


def test_clouds_at_opposite_yaw_are_mirror_images(straight):
    # the sensor pair is symmetric about the body x-z plane
    a = _projected(straight, math.radians(20))
    b = _projected(straight, math.radians(-20)) * np.array([1, -1, 1])
    assert _set_distance(a, b) < 1e-3

