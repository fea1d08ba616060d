import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tunnelnav import tunnel
from tunnelnav.errors import ConfigError, NotInTunnel, OriginOutside, OutOfRange
from tunnelnav.geometry import Attitude
from tunnelnav.tunnel import TunnelSpec, build

CURVED = [
    TunnelSpec(kind="arc", radius_m=2.0, length_m=100.0),
    TunnelSpec(kind="double_s", radius_m=2.0, length_m=120.0),
    TunnelSpec(kind="triple_s", radius_m=1.5, length_m=90.0),
    TunnelSpec(kind="figure8", radius_m=1.0, length_m=120.0),
    TunnelSpec(kind="waypoint-spline", radius_m=2.0, waypoints=((0, 0, 0), (30, 10, 2), (60, 0, 0), (90, -5, 1))),
]


# spec


def test_spec_validation():
    with pytest.raises(ConfigError):
        TunnelSpec(roughness=0.6)
    with pytest.raises(ConfigError):
        TunnelSpec(radius_m=0.5)
    with pytest.raises(ConfigError):
        TunnelSpec(kind="helix")
    with pytest.raises(ConfigError):
        TunnelSpec(kind="waypoint-spline", waypoints=((0, 0, 0),))


def test_spec_file_round_trip(tmp_path):
    spec = TunnelSpec(kind="figure8", radius_m=1.0, roughness=0.1, seed=4, length_m=120.0)
    p = tmp_path / "t.json"
    tunnel.save_spec(spec, p)
    assert tunnel.load_spec(p) == spec


def test_spec_unknown_key_rejected():
    with pytest.raises(ConfigError):
        TunnelSpec.from_dict({"kind": "straight", "radius": 2})


# surface


def test_smooth_circle_radius_everywhere(straight):
    for s in np.linspace(0, 60, 7):
        for a in np.linspace(-math.pi, math.pi, 9):
            assert straight.surface_radius(s, a) == 2.0


def test_rough_radius_bounds():
    t = build(TunnelSpec(radius_m=4.0, roughness=0.1, seed=11, length_m=80.0))
    rng = np.random.default_rng(0)
    r = t.wall_radius(rng.uniform(0, 80, 20000), rng.uniform(-math.pi, math.pi, 20000))
    assert r.min() >= 3.6 and r.max() <= 4.4


def test_surface_radius_deterministic():
    spec = TunnelSpec(roughness=0.2, seed=3)
    a = tunnel.surface_radius(spec, 12.3, 0.7)
    tunnel.build.cache_clear()
    assert tunnel.surface_radius(spec, 12.3, 0.7) == a


def test_surface_radius_out_of_range(straight):
    with pytest.raises(OutOfRange):
        straight.surface_radius(-1.0, 0.0)
    with pytest.raises(OutOfRange):
        straight.surface_radius(60.5, 0.0)


def test_horseshoe_floor(horseshoe):
    assert math.isclose(horseshoe.surface_radius(10, -math.pi / 2), 1.2)
    assert horseshoe.surface_radius(10, math.pi / 2) == 2.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_noise_mean_and_range(seed):
    t = build(TunnelSpec(roughness=0.1, seed=seed, length_m=200.0))
    rng = np.random.default_rng(seed)
    n = t.noise(rng.uniform(0, 200, 100_000), rng.uniform(-math.pi, math.pi, 100_000))
    assert abs(n.mean()) < 0.02
    assert n.min() >= -1 and n.max() <= 1


# rays


def test_perpendicular_ray(straight):
    assert abs(tunnel.raycast(straight, (10, 0, 0), (0, 1, 0), 10) - 2.0) <= 1e-3


def test_diagonal_ray(straight):
    c = math.cos(math.pi / 4)
    assert abs(straight.raycast((10, 0, 0), (c, 0, c), 10) - 2 * math.sqrt(2)) <= 1e-3


def test_offset_ray(straight):
    assert abs(straight.raycast((10, 1, 0), (0, 1, 0), 10) - 1.0) <= 1e-3


def test_ray_miss(straight):
    assert straight.raycast((10, 0, 0), (1, 0, 0), 10) is None


def test_origin_outside(straight):
    with pytest.raises(OriginOutside):
        straight.raycast((10, 2.5, 0), (0, 1, 0), 10)


@pytest.mark.parametrize("spec", CURVED, ids=lambda s: s.kind)
def test_perpendicular_rays_on_curved_axes(spec):
    t = build(spec)
    rng = np.random.default_rng(1)
    for s in rng.uniform(1, t.length - 1, 15):
        p, _, left, up = t.frame(np.array(s))
        a = rng.uniform(-math.pi, math.pi)
        d = math.cos(a) * left + math.sin(a) * up
        assert abs(t.raycast(p, d, 10) - spec.radius_m) <= 1e-3


# ground truth


def test_dynamic_ref_straight():
    ref = tunnel.dynamic_ref(TunnelSpec(length_m=60.0), (10, 0.5, 0), Attitude())
    assert math.isclose(ref.s, 10, abs_tol=1e-4)
    assert math.isclose(ref.y_off, 0.5, abs_tol=1e-9) and ref.psi_d == 0.0


def test_arc_endpoint():
    t = build(TunnelSpec(kind="arc", length_m=100.0))
    assert np.allclose(t.position(100.0), (200 / math.pi, 200 / math.pi, 0), atol=1e-6)


def test_not_in_tunnel(straight):
    with pytest.raises(NotInTunnel):
        straight.dynamic_ref((10, 4.5, 0), Attitude())


@pytest.mark.parametrize("spec", CURVED, ids=lambda s: s.kind)
def test_relative_yaw_definition(spec):
    t = build(spec)
    for s in np.linspace(3, t.length - 3, 9):
        pos, _ = t.pose_at(s)
        ref = t.dynamic_ref(pos, Attitude(yaw=float(t.gamma(s)) + 0.2))
        assert abs(ref.psi_d - 0.2) <= 1e-6


@pytest.mark.parametrize("spec", CURVED, ids=lambda s: s.kind)
def test_axis_round_trip(spec):
    t = build(spec)
    for s in np.linspace(1, t.length - 1, 11):
        pos = t.position(s)
        ref = t.dynamic_ref(pos, Attitude(yaw=float(t.gamma(s))))
        assert abs(ref.y_off) < 1e-6 and abs(ref.z_off) < 1e-6 and abs(ref.psi_d) < 1e-6
        assert abs(ref.s - s) < 1e-3 or (t.closed and abs(abs(ref.s - s) - t.length) < 1e-3)


@given(st.floats(2, 58), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-0.7, 0.7))
def test_pose_at_inverts_dynamic_ref(s, y, z, psi):
    t = build(TunnelSpec(kind="double_s", length_m=60.0))
    pos, heading = t.pose_at(s, y, z, psi)
    ref = t.dynamic_ref(pos, Attitude(yaw=heading))
    assert abs(ref.s - s) < 1e-3 and abs(ref.y_off - y) < 1e-3 and abs(ref.z_off - z) < 1e-3
    assert abs(ref.psi_d - psi) < 1e-9


def test_axis_sample_invariants():
    t = build(CURVED[1])
    a = t.axis_sample(37.0)
    assert math.isclose(np.linalg.norm(a.tangent), 1.0, abs_tol=1e-12)
    assert math.isclose(a.gamma, math.atan2(a.tangent[1], a.tangent[0]))


def test_figure8_closed():
    t = build(TunnelSpec(kind="figure8", radius_m=1.0, length_m=120.0))
    assert t.closed
    assert np.linalg.norm(t.position(0.0) - t.position(t.length)) < 1e-6
    assert abs(t.length - 120.0) < 0.5


def test_figure8_crossing_leaves_a_gap():
    t = build(TunnelSpec(kind="figure8", radius_m=1.0, length_m=120.0))
    s = np.linspace(0, t.length, 6000, endpoint=False)
    p = t.position(s)
    # points far apart along the axis but close horizontally must be separated vertically
    d_s = np.abs(s[:, None] - s[None, :])
    d_s = np.minimum(d_s, t.length - d_s)
    d_h = np.hypot(p[:, None, 0] - p[None, :, 0], p[:, None, 1] - p[None, :, 1])
    close = (d_h < 0.5) & (d_s > 10)
    assert close.any()
    dz = np.abs(p[:, None, 2] - p[None, :, 2])[close]
    assert dz.min() >= 2 * 1.0 + 0.9


def test_clearance_on_axis(straight):
    assert abs(straight.clearance((20, 0, 0)) - 2.0) < 0.01
    assert abs(straight.clearance((20, 1.2, 0)) - 0.8) < 0.01
    assert straight.clearance((20, 2.3, 0)) < 0
