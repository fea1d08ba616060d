"""Procedural analytic tunnel worlds.

A tunnel is a centreline curve parametrised by arclength plus a cross-section
profile whose radius is modulated by a seeded, band-limited value-noise field.
The wall is the implicit surface ``rho == R(s, angle)`` where ``s`` is the
closest axis point, ``rho`` the distance to it and ``angle`` the polar angle in
the local (left, up) plane. Rays are cast against that surface by sphere
marching plus bisection.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import _kernels
from .errors import ConfigError, NotInTunnel, OriginOutside, OutOfRange
from .geometry import Attitude, wrap_angle

KINDS = ("straight", "arc", "s_curve", "double_s", "triple_s", "figure8", "waypoint-spline")
PROFILES = ("circle", "horseshoe")
SPEC_KEYS = ("kind", "radius_m", "profile", "flat_floor_fraction", "roughness", "seed", "length_m", "waypoints")

# heading amplitude of the S-shaped families and their number of half-waves
BEND_RAD = 0.6
_S_HALF_WAVES = {"s_curve": 1, "double_s": 2, "triple_s": 3}

AXIS_STEP = 0.02
EXTENSION = 20.0
NOISE_PERIOD = 2.0
NOISE_OCTAVES = 4
NOISE_ANGLE_CELLS = 8
COARSE_STEP = 0.5
MARCH_FACTOR = 0.25
MIN_STEP = 0.04
# vertical wall-to-wall gap where the figure-8 passes over itself
FIGURE8_GAP = 1.0
FIGURE8_CROSSING = math.pi / 2


@dataclass(frozen=True)
class TunnelSpec:
    kind: str = "straight"
    radius_m: float = 2.0
    profile: str = "circle"
    flat_floor_fraction: float = 0.6
    roughness: float = 0.0
    seed: int = 0
    length_m: float = 100.0
    waypoints: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown tunnel kind {self.kind!r}")
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}")
        if not self.radius_m > 0.5:
            raise ConfigError("radius_m must be > 0.5")
        if not 0.0 <= self.roughness <= 0.3:
            raise ConfigError("roughness must lie in [0, 0.3]")
        if not 0.0 < self.flat_floor_fraction < 1.0:
            raise ConfigError("flat_floor_fraction must lie in (0, 1)")
        if self.kind == "waypoint-spline":
            if len(self.waypoints) < 2:
                raise ConfigError("waypoint-spline needs at least 2 waypoints")
            object.__setattr__(self, "waypoints", tuple(tuple(float(c) for c in w) for w in self.waypoints))
            if any(len(w) != 3 for w in self.waypoints):
                raise ConfigError("waypoints must be (x, y, z) triples")
        elif not self.length_m > 0:
            raise ConfigError("length_m must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["waypoints"] = [list(w) for w in self.waypoints]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TunnelSpec":
        unknown = set(d) - set(SPEC_KEYS)
        if unknown:
            raise ConfigError(f"unknown tunnel spec keys: {sorted(unknown)}")
        d = dict(d)
        d["waypoints"] = tuple(tuple(w) for w in d.get("waypoints") or ())
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def save_spec(spec: TunnelSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")


def load_spec(path) -> TunnelSpec:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return TunnelSpec.from_dict(d)


@dataclass(frozen=True)
class AxisSample:
    s: float
    position: np.ndarray
    tangent: np.ndarray
    gamma: float


@dataclass(frozen=True)
class DynamicRefState:
    s: float
    y_off: float
    z_off: float
    psi_d: float


# -- centreline construction ------------------------------------------------


def _heading_curve(kind: str, length: float):
    """Heading function for planar curves defined by their heading profile."""
    if kind == "straight":
        return lambda s: np.zeros_like(s)
    if kind == "arc":
        k = (math.pi / 2) / length
        return lambda s: k * np.clip(s, 0.0, length)
    n = _S_HALF_WAVES[kind]
    w = math.pi * n / length
    return lambda s: BEND_RAD * np.sin(w * np.clip(s, 0.0, length))


def _resample_parametric(f, df, t0: float, t1: float, step: float):
    """Arclength-resample a parametric curve ``f(t) -> (n, 3)``."""
    t = np.linspace(t0, t1, 400_001)
    speed = np.linalg.norm(df(t), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(t))])
    length = float(cum[-1])
    n = max(2, int(round(length / step)))
    s = np.linspace(0.0, length, n + 1)
    ts = np.interp(s, cum, t)
    d = df(ts)
    return s, f(ts), d / np.linalg.norm(d, axis=1, keepdims=True), length


def _figure8_fns(R: float, h: float, alpha: float = FIGURE8_CROSSING / 2):
    """Planar figure-8 of two circular lobes joined by straights crossing at the origin.

    The curve is parametrised by planar arclength ``u`` on ``[0, P)``; the
    height ``h * cos(2 pi u / P)`` lifts one crossing pass above the other.
    Returns ``(f, df, P)``.
    """
    ell = R / math.tan(alpha)
    theta = math.pi + 2 * alpha
    b = np.cumsum([0.0, ell, R * theta, 2 * ell, R * theta, ell])
    P = float(b[-1])
    c1 = np.array([R / math.sin(alpha), 0.0])
    g3 = alpha - theta

    def heading(u):
        return np.select(
            [u < b[1], u < b[2], u < b[3], u < b[4]],
            [np.full_like(u, alpha), alpha - (u - b[1]) / R, np.full_like(u, g3), g3 + (u - b[3]) / R],
            np.full_like(u, alpha),
        )

    def f(u):
        u = np.asarray(u, dtype=float)
        g = heading(u)
        sg, cg = np.sin(g), np.cos(g)
        t2 = c1 + R * np.array([-math.sin(g3), math.cos(g3)])
        t4 = -ell * np.array([math.cos(alpha), math.sin(alpha)])
        x = np.select(
            [u < b[1], u < b[2], u < b[3], u < b[4]],
            [u * math.cos(alpha), c1[0] - R * sg, t2[0] + (u - b[2]) * cg, -c1[0] + R * sg],
            t4[0] + (u - b[4]) * math.cos(alpha),
        )
        y = np.select(
            [u < b[1], u < b[2], u < b[3], u < b[4]],
            [u * math.sin(alpha), c1[1] + R * cg, t2[1] + (u - b[2]) * sg, -c1[1] - R * cg],
            t4[1] + (u - b[4]) * math.sin(alpha),
        )
        return np.column_stack([x, y, h * np.cos(2 * math.pi * u / P)])

    def df(u):
        u = np.asarray(u, dtype=float)
        g = heading(u)
        return np.column_stack([np.cos(g), np.sin(g), -h * (2 * math.pi / P) * np.sin(2 * math.pi * u / P)])

    return f, df, P


def _figure8_length(R: float, h: float) -> float:
    _, df, P = _figure8_fns(R, h)
    u = np.linspace(0.0, P, 20001)
    sp = np.linalg.norm(df(u), axis=1)
    return float(np.sum(0.5 * (sp[1:] + sp[:-1]) * np.diff(u)))


class Tunnel:
    """Immutable tunnel world built from a :class:`TunnelSpec`."""

    def __init__(self, spec: TunnelSpec):
        self.spec = spec
        self.radius = spec.radius_m
        self.closed = spec.kind == "figure8"
        self._build_axis()
        self._build_noise()

    # axis ------------------------------------------------------------------

    def _build_axis(self) -> None:
        spec = self.spec
        kind = spec.kind
        if kind in ("straight", "arc", "s_curve", "double_s", "triple_s"):
            L = float(spec.length_m)
            n = int(math.ceil((L + 2 * EXTENSION) / AXIS_STEP))
            s = -EXTENSION + AXIS_STEP * np.arange(n + 1)
            if kind == "arc":
                R = L / (math.pi / 2)
                sc = np.clip(s, 0.0, L)
                pos = np.column_stack([R * np.sin(sc / R), R * (1 - np.cos(sc / R)), np.zeros_like(s)])
                g = sc / R
                # straight continuation beyond both ends
                before, after = s < 0, s > L
                pos[before] += np.column_stack([s[before], np.zeros(before.sum()), np.zeros(before.sum())])
                pos[after] += (s[after] - L)[:, None] * np.array([math.cos(g[-1]), math.sin(g[-1]), 0.0])
            else:
                g = _heading_curve(kind, L)(s)
                cx, cy = np.cos(g), np.sin(g)
                # trapezoidal integration of the unit heading vector
                x = np.concatenate([[0.0], np.cumsum(0.5 * (cx[1:] + cx[:-1]) * AXIS_STEP)])
                y = np.concatenate([[0.0], np.cumsum(0.5 * (cy[1:] + cy[:-1]) * AXIS_STEP)])
                i0 = int(round(EXTENSION / AXIS_STEP))
                pos = np.column_stack([x - x[i0], y - y[i0], np.zeros_like(s)])
            tan = np.column_stack([np.cos(g), np.sin(g), np.zeros_like(s)])
            self.length = L
        elif kind == "figure8":
            h = spec.radius_m + FIGURE8_GAP / 2
            a = brentq(lambda a: _figure8_length(a, h) - spec.length_m, 1e-3, spec.length_m)
            f, df, P = _figure8_fns(a, h)
            s, pos, tan, L = _resample_parametric(f, df, 0.0, P, AXIS_STEP)
            # drop the duplicated closing sample; indices wrap instead
            s, pos, tan = s[:-1], pos[:-1], tan[:-1]
            self.length = L
            self.figure8_lobe_radius = a
        else:
            wp = np.asarray(spec.waypoints, dtype=float)
            chord = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(wp, axis=0), axis=1))])
            cs = CubicSpline(chord, wp, bc_type="natural")
            s_in, pin, tin, L = _resample_parametric(cs, cs.derivative(), 0.0, float(chord[-1]), AXIS_STEP)
            ext = np.arange(1, int(round(EXTENSION / AXIS_STEP)) + 1) * AXIS_STEP
            pre = pin[0] - ext[::-1, None] * tin[0]
            post = pin[-1] + ext[:, None] * tin[-1]
            pos = np.vstack([pre, pin, post])
            tan = np.vstack([np.repeat(tin[:1], len(ext), 0), tin, np.repeat(tin[-1:], len(ext), 0)])
            s = np.concatenate([-ext[::-1], s_in, s_in[-1] + ext])
            self.length = L
        self._s0 = float(s[0])
        self._ds = float(s[1] - s[0])
        self._n = len(s)
        self._pos = np.ascontiguousarray(pos)
        self._tan = np.ascontiguousarray(tan)
        if self.closed:
            self._s_lo, self._s_hi = 0.0, self.length
        else:
            self._s_lo, self._s_hi = float(s[0]), float(s[-1])

    def _hermite(self, s, order: int = 0):
        """Position (and derivatives up to ``order``) on the axis at arclength ``s``."""
        s = np.asarray(s, dtype=float)
        ds = self._ds
        if self.closed:
            u = np.mod(s, self.length) / ds
            i = np.floor(u).astype(int)
            t = u - i
            i0 = np.mod(i, self._n)
            i1 = np.mod(i + 1, self._n)
        else:
            u = (np.clip(s, self._s_lo, self._s_hi) - self._s0) / ds
            i0 = np.clip(np.floor(u).astype(int), 0, self._n - 2)
            t = u - i0
            i1 = i0 + 1
        t = t[..., None]
        P0, P1 = self._pos[i0], self._pos[i1]
        T0, T1 = self._tan[i0] * ds, self._tan[i1] * ds
        t2, t3 = t * t, t * t * t
        out = [(2 * t3 - 3 * t2 + 1) * P0 + (t3 - 2 * t2 + t) * T0 + (-2 * t3 + 3 * t2) * P1 + (t3 - t2) * T1]
        if order >= 1:
            out.append(((6 * t2 - 6 * t) * P0 + (3 * t2 - 4 * t + 1) * T0 + (-6 * t2 + 6 * t) * P1 + (3 * t2 - 2 * t) * T1) / ds)
        if order >= 2:
            out.append(((12 * t - 6) * P0 + (6 * t - 4) * T0 + (-12 * t + 6) * P1 + (6 * t - 2) * T1) / ds**2)
        return out if order else out[0]

    def position(self, s):
        return self._hermite(s)

    def frame(self, s):
        """Axis position, unit tangent, horizontal-left and up vectors at ``s``."""
        p, d = self._hermite(s, 1)
        t = d / np.linalg.norm(d, axis=-1, keepdims=True)
        left = np.stack([-t[..., 1], t[..., 0], np.zeros_like(t[..., 0])], axis=-1)
        left /= np.linalg.norm(left, axis=-1, keepdims=True)
        up = np.cross(t, left)
        return p, t, left, up

    def axis_sample(self, s: float) -> AxisSample:
        p, t, _, _ = self.frame(np.array(s))
        return AxisSample(float(s), p, t, math.atan2(t[1], t[0]))

    def gamma(self, s):
        _, t, _, _ = self.frame(s)
        return np.arctan2(t[..., 1], t[..., 0])

    def wrap_s(self, s):
        return np.mod(s, self.length) if self.closed else s

    def coarse_s(self, points: np.ndarray) -> np.ndarray:
        """Nearest axis sample on a 0.5 m grid for each point."""
        stride = max(1, int(round(COARSE_STEP / self._ds)))
        idx = np.arange(0, self._n, stride)
        q = self._pos[idx]
        pts = np.atleast_2d(points)
        d2 = np.sum((pts[:, None, :] - q[None, :, :]) ** 2, axis=2)
        return self._s0 + idx[np.argmin(d2, axis=1)] * self._ds

    def closest_s(self, point, tol: float = 1e-4) -> float:
        """Arclength of the closest axis point: coarse grid then golden section."""
        p = np.asarray(point, dtype=float)
        sc = float(self.coarse_s(p[None])[0])
        a, b = sc - COARSE_STEP, sc + COARSE_STEP
        if not self.closed:
            a, b = max(a, self._s_lo), min(b, self._s_hi)

        s = _kernels.closest_s(p, a, b, tol, self._pos, self._tan, self._k_axis)
        # Newton polish; golden section alone leaves ~tol/2 of slack in s
        sn = float(self._newton_s(p[None], np.array([s]), iters=2)[0])
        if abs(sn - s) <= tol:
            s = sn
        return float(self.wrap_s(s))

    def _newton_s(self, points: np.ndarray, s: np.ndarray, iters: int = 2) -> np.ndarray:
        for _ in range(iters):
            c, d1, d2 = self._hermite(s, 2)
            r = points - c
            f = np.sum(r * d1, axis=-1)
            fp = -np.sum(d1 * d1, axis=-1) + np.sum(r * d2, axis=-1)
            fp = np.minimum(fp, -0.2)
            s = s - np.clip(f / fp, -2.0, 2.0)
            if not self.closed:
                s = np.clip(s, self._s_lo, self._s_hi)
        return s

    # noise -----------------------------------------------------------------

    def _build_noise(self) -> None:
        rng = np.random.default_rng(self.spec.seed)
        self._octaves = []
        span_lo = 0.0 if self.closed else self._s_lo
        span = self.length if self.closed else self._s_hi - self._s_lo
        for o in range(NOISE_OCTAVES):
            cell = NOISE_PERIOD / 2**o
            n_a = NOISE_ANGLE_CELLS * 2**o
            if self.closed:
                n_s = max(1, int(round(span / cell)))
                cell = span / n_s
                values = rng.uniform(-1.0, 1.0, size=(n_s, n_a))
            else:
                n_s = int(math.ceil(span / cell)) + 2
                values = rng.uniform(-1.0, 1.0, size=(n_s, n_a))
            values -= values.mean()
            values /= np.abs(values).max()
            self._octaves.append((span_lo, cell, n_s, n_a, values, 0.5**o))
        self._noise_norm = sum(o[-1] for o in self._octaves)
        offs = np.cumsum([0] + [o[2] * o[3] for o in self._octaves])
        self._k_noise = (
            np.array([o[0] for o in self._octaves], dtype=float),
            np.array([o[1] for o in self._octaves], dtype=float),
            np.array([o[2] for o in self._octaves], dtype=np.int64),
            np.array([o[3] for o in self._octaves], dtype=np.int64),
            np.array([o[5] for o in self._octaves], dtype=float),
            offs[:-1].astype(np.int64),
            np.concatenate([o[4].ravel() for o in self._octaves]),
        )
        self._k_axis = np.array(
            [self._s0, self._ds, self._n, float(self.closed), self.length, self._s_lo, self._s_hi], dtype=float
        )
        self._k_surf = np.array(
            [
                self.radius,
                float(self.spec.profile == "horseshoe"),
                self.spec.flat_floor_fraction,
                self.spec.roughness,
                self._noise_norm,
            ],
            dtype=float,
        )

    def _kargs(self):
        return (self._pos, self._tan, self._k_axis, self._k_surf) + self._k_noise

    def noise(self, s, angle) -> np.ndarray:
        """Smooth noise field in [-1, 1] over (arclength, polar angle)."""
        s = np.asarray(s, dtype=float)
        angle = np.asarray(angle, dtype=float)
        total = np.zeros(np.broadcast(s, angle).shape)
        for lo, cell, n_s, n_a, values, amp in self._octaves:
            us = (s - lo) / cell
            ua = np.mod(angle, 2 * math.pi) / (2 * math.pi) * n_a
            i = np.floor(us).astype(int)
            j = np.floor(ua).astype(int)
            fs, fa = us - i, ua - j
            fs = fs * fs * (3 - 2 * fs)
            fa = fa * fa * (3 - 2 * fa)
            if self.closed:
                i0, i1 = np.mod(i, n_s), np.mod(i + 1, n_s)
            else:
                i0 = np.clip(i, 0, n_s - 1)
                i1 = np.clip(i + 1, 0, n_s - 1)
            j0, j1 = np.mod(j, n_a), np.mod(j + 1, n_a)
            v0 = values[i0, j0] + fa * (values[i0, j1] - values[i0, j0])
            v1 = values[i1, j0] + fa * (values[i1, j1] - values[i1, j0])
            total = total + amp * (v0 + fs * (v1 - v0))
        return total / self._noise_norm

    # surface ---------------------------------------------------------------

    def profile_radius(self, angle) -> np.ndarray:
        angle = np.asarray(angle, dtype=float)
        r = np.full(angle.shape, self.radius)
        if self.spec.profile == "horseshoe":
            sn = np.sin(angle)
            floor = self.spec.flat_floor_fraction * self.radius
            with np.errstate(divide="ignore"):
                r_floor = np.where(sn < 0, -floor / np.where(sn < 0, sn, -1.0), np.inf)
            r = np.minimum(r, r_floor)
        return r

    def wall_radius(self, s, angle) -> np.ndarray:
        r = self.profile_radius(angle)
        if self.spec.roughness > 0:
            r = r * (1.0 + self.spec.roughness * self.noise(s, angle))
        return r

    def surface_radius(self, s: float, angle: float) -> float:
        if not 0.0 <= s <= self.length:
            raise OutOfRange(f"s={s} outside [0, {self.length}]")
        return float(self.wall_radius(np.array(s), np.array(angle)))

    def _implicit(self, points: np.ndarray, s: np.ndarray):
        """Signed radial clearance (positive inside) at points whose axis arclength is ``s``."""
        c, t, left, up = self.frame(s)
        r = points - c
        dl = np.sum(r * left, axis=-1)
        du = np.sum(r * up, axis=-1)
        ang = np.arctan2(du, dl)
        return self.wall_radius(s, ang) - np.hypot(dl, du)

    def _probe(self, points: np.ndarray, s: np.ndarray):
        """Clearance at ``points`` using axis arclength ``s``, plus one Newton update of ``s``.

        The distance to the axis is stationary at the closest point, so a
        slightly stale ``s`` only perturbs the clearance to second order.
        """
        c, d1, d2 = self._hermite(s, 2)
        r = points - c
        nrm = np.sqrt(np.sum(d1 * d1, axis=-1))
        tx, ty, tz = d1[:, 0] / nrm, d1[:, 1] / nrm, d1[:, 2] / nrm
        lh = np.sqrt(tx * tx + ty * ty)
        lx, ly = -ty / lh, tx / lh
        # up = t x left
        ux, uy, uz = -tz * ly, tz * lx, tx * ly - ty * lx
        dl = r[:, 0] * lx + r[:, 1] * ly
        du = r[:, 0] * ux + r[:, 1] * uy + r[:, 2] * uz
        g = self.wall_radius(s, np.arctan2(du, dl)) - np.hypot(dl, du)
        f = np.sum(r * d1, axis=-1)
        fp = np.minimum(-nrm * nrm + np.sum(r * d2, axis=-1), -0.2)
        s_next = s - np.clip(f / fp, -2.0, 2.0)
        if not self.closed:
            s_next = np.clip(s_next, self._s_lo, self._s_hi)
        return g, s_next

    def wall_point(self, s, angle) -> np.ndarray:
        c, _, left, up = self.frame(s)
        r = self.wall_radius(s, angle)[..., None]
        a = np.asarray(angle)[..., None]
        return c + r * (np.cos(a) * left + np.sin(a) * up)

    # rays ------------------------------------------------------------------

    def raycast_many(self, origin, dirs, max_range: float, s_origin: float | None = None) -> np.ndarray:
        """Distances along each unit direction to the wall; ``nan`` marks a miss."""
        o = np.asarray(origin, dtype=float)
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        if s_origin is None:
            s_origin = self.closest_s(o)
        s0 = self._newton_s(o[None], np.array([s_origin]), iters=3)
        if self._implicit(o[None], s0)[0] <= 0:
            raise OriginOutside("ray origin is not inside the tunnel")
        return _kernels.march(
            o, np.ascontiguousarray(dirs), float(s0[0]), float(max_range), MARCH_FACTOR, MIN_STEP, 1e-4, *self._kargs()
        )

    def raycast(self, origin, direction, max_range: float):
        """Distance to the wall along a unit direction, or ``None`` on a miss."""
        d = self.raycast_many(origin, np.asarray(direction, dtype=float)[None], max_range)[0]
        return None if np.isnan(d) else float(d)

    # ground truth ----------------------------------------------------------

    def dynamic_ref(self, position, attitude: Attitude) -> DynamicRefState:
        p = np.asarray(position, dtype=float)
        s = self.closest_s(p)
        c, t, left, up = self.frame(np.array(s))
        r = p - c
        if float(np.linalg.norm(r)) > 2 * self.radius:
            raise NotInTunnel("position is farther than two radii from the axis")
        gamma = math.atan2(t[1], t[0])
        return DynamicRefState(s, float(r @ left), float(r @ up), wrap_angle(attitude.yaw - gamma))

    def pose_at(self, s: float, y_off: float = 0.0, z_off: float = 0.0, psi_d: float = 0.0):
        """World position and yaw for a tunnel-relative pose."""
        c, t, left, up = self.frame(np.array(s))
        gamma = math.atan2(t[1], t[0])
        return c + y_off * left + z_off * up, wrap_angle(gamma + psi_d)

    def clearance(self, position, s: float | None = None) -> float:
        """Distance from ``position`` to the nearest wall sample (negative if outside).

        A coarse (s, angle) grid locates the nearest wall region, a finer
        local grid refines it.
        """
        p = np.asarray(position, dtype=float)
        if s is None:
            s = self.closest_s(p)
        kargs = self._kargs()
        span = 1.5 * self.radius
        d, sb, ab = _kernels.nearest_wall(p, float(s), span, 0.2, math.pi, math.pi, math.radians(6), *kargs)
        d, _, _ = _kernels.nearest_wall(p, sb, 0.2, 0.01, ab, math.radians(6), math.radians(0.25), *kargs)
        sn = self._newton_s(p[None], np.array([s]), 3)
        if self._implicit(p[None], sn)[0] <= 0:
            return -float(d)
        return float(d)


@lru_cache(maxsize=64)
def build(spec: TunnelSpec) -> Tunnel:
    return Tunnel(spec)


def _tunnel(world) -> Tunnel:
    return world if isinstance(world, Tunnel) else build(world)


def surface_radius(world, s: float, angle: float) -> float:
    return _tunnel(world).surface_radius(s, angle)


def raycast(world, origin, direction, max_range: float):
    return _tunnel(world).raycast(origin, direction, max_range)


def dynamic_ref(world, position, attitude: Attitude) -> DynamicRefState:
    return _tunnel(world).dynamic_ref(position, attitude)
