"""Closed-loop runner: scan, estimate, command, integrate at the LiDAR rate."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import control, lidar, uav
from .errors import ConfigError, EmptyTrace, NotInTunnel, StartPoseInvalid
from .geometry import wrap_angle
from .tunnel import Tunnel, TunnelSpec, _tunnel

DT = 1.0 / 60.0
SETTLE_TIME = 3.0
END_MARGIN = 2.0

TRACE_COLUMNS = (
    "t", "x", "y", "z", "roll", "pitch", "yaw", "s", "y_off", "psi_d_true", "psi_d_est",
    "r_c", "yc", "zc", "vx_cmd", "vy_cmd", "vz_cmd", "clearance",
)


@dataclass(frozen=True)
class SimConfig:
    tunnel: TunnelSpec
    estimator: str = control.GEOMETRIC
    model_path: str | None = None
    gains: control.ControlGains = field(default_factory=control.ControlGains)
    lidar: lidar.LidarConfig = field(default_factory=lidar.LidarConfig)
    duration: float | None = None
    laps: int | None = None
    dt: float = DT
    lidar_seed: int = 0
    inclinometer_seed: int = 1
    inclinometer_sigma: float = math.radians(0.3)
    tau: float = uav.TAU
    body_radius: float = 0.4
    start_s: float = 2.0
    start_y: float = 0.0
    start_z: float = 0.0
    start_psi: float = 0.0

    def __post_init__(self):
        if abs(self.dt * self.lidar.rate - 1.0) > 1e-9:
            raise ConfigError("dt must equal the LiDAR scan period")
        if self.estimator not in (control.GEOMETRIC, control.LEARNED):
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.estimator == control.LEARNED and not self.model_path:
            raise ConfigError("the learned estimator needs a model path")
        if self.duration is not None and self.duration <= 0:
            raise ConfigError("duration must be positive")
        if self.laps is not None and self.laps < 1:
            raise ConfigError("laps must be at least 1")
        if self.body_radius <= 0:
            raise ConfigError("body radius must be positive")


@dataclass(frozen=True)
class TraceRecord:
    t: float
    x: float
    y: float
    z: float
    roll: float
    pitch: float
    yaw: float
    s: float
    y_off: float
    psi_d_true: float
    psi_d_est: float
    r_c: float
    yc: float
    zc: float
    vx_cmd: float
    vy_cmd: float
    vz_cmd: float
    clearance: float
    z_off: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    lap: int = 0
    hold: bool = False


@dataclass(frozen=True)
class RunMetrics:
    max_psi_error: float
    p95_psi_error: float
    min_clearance: float
    distance: float
    average_speed: float
    collision: bool
    completed: bool = False
    ticks: int = 0
    duration: float = 0.0
    laps: int = 0
    lap_spread: float | None = None
    holds: int = 0

    def to_dict(self) -> dict:
        # NaN (no settled estimates) becomes None so the JSON stays standard
        return {k: None if isinstance(v, float) and math.isnan(v) else v for k, v in asdict(self).items()}


def _swept_clearance(tun: Tunnel, p0, p1, c0: float, c1: float, s: float, radius: float) -> float:
    """Minimum clearance along the segment p0 -> p1 (endpoints already known)."""
    seg = float(np.linalg.norm(p1 - p0))
    lo = min(c0, c1)
    if lo - 0.5 * seg >= radius or seg < 1e-9:
        return lo
    n = int(math.ceil(seg / 0.02))
    inner = [tun.clearance(p0 + (p1 - p0) * (k / n), s) for k in range(1, n)]
    return min([lo] + inner)


def run(cfg: SimConfig, model=None, max_ticks: int | None = None) -> tuple[list[TraceRecord], RunMetrics]:
    """Fly one closed-loop run; fully determined by the config and its seeds."""
    tun = _tunnel(cfg.tunnel)
    if cfg.laps is not None and not tun.closed:
        raise ConfigError("lap counting needs a closed centreline")
    if cfg.estimator == control.LEARNED and model is None:
        from . import nnet

        model = nnet.load_model(cfg.model_path)
    pos, yaw = tun.pose_at(cfg.start_s, cfg.start_y, cfg.start_z, cfg.start_psi)
    state = uav.UavState.hover(pos, yaw, cfg.body_radius)
    c = tun.clearance(state.position, cfg.start_s)
    if c < cfg.body_radius:
        raise StartPoseInvalid(f"start pose clearance {c:.3f} m below the body radius")
    incl = uav.Inclinometer(cfg.inclinometer_sigma, cfg.inclinometer_seed)
    rng = np.random.default_rng(cfg.lidar_seed)

    if cfg.duration is not None:
        limit = int(round(cfg.duration / cfg.dt))
    elif cfg.laps is not None:
        limit = int(math.ceil(cfg.laps * tun.length / cfg.gains.v_min / cfg.dt)) + 1
    else:
        limit = int(math.ceil((tun.length - cfg.start_s) / cfg.gains.v_min / cfg.dt)) + 1
    if max_ticks is not None:
        limit = min(limit, max_ticks)

    trace: list[TraceRecord] = []
    s_prev = cfg.start_s
    progress = 0.0
    completed = False
    collision = False
    t = 0.0
    c_next = c
    for _tick in range(limit):
        try:
            ref = tun.dynamic_ref(state.position, state.attitude)
        except NotInTunnel:
            collision = True
            break
        if tun.closed:
            progress += (ref.s - s_prev + 0.5 * tun.length) % tun.length - 0.5 * tun.length
        else:
            progress = ref.s - cfg.start_s
        s_prev = ref.s
        lap = int(progress // tun.length) if tun.closed else 0

        up, lo = lidar.scan_pair(tun, state.position, state.attitude, cfg.lidar, rng, t, s_hint=ref.s)
        cloud = lidar.fuse(up, lo)
        reading = incl.read(state)
        res = control.step(cloud, reading, cfg.gains, cfg.estimator, model)
        cmd = res.command
        spot = res.spot
        clearance = c_next if c_next is not None else tun.clearance(state.position, ref.s)
        trace.append(TraceRecord(
            t, *map(float, state.position), state.attitude.roll, state.attitude.pitch, state.attitude.yaw,
            ref.s, ref.y_off, ref.psi_d,
            res.estimate.psi if res.estimate else math.nan,
            spot.radius if spot else math.nan,
            spot.center[0] if spot else math.nan,
            spot.center[1] if spot else math.nan,
            cmd.v_x, cmd.v_y, cmd.v_z, clearance,
            ref.z_off, *map(float, state.velocity), lap, res.diagnostic is not None,
        ))
        if clearance < cfg.body_radius:
            collision = True
            break
        if cfg.laps is not None and progress >= cfg.laps * tun.length:
            completed = True
            break
        if not tun.closed and ref.s >= tun.length - END_MARGIN:
            completed = True
            break

        new = uav.integrate(state, cmd, cfg.dt, cfg.tau)
        s_new = float(tun.coarse_s(new.position[None])[0])
        c_new = tun.clearance(new.position, s_new)
        swept = _swept_clearance(tun, state.position, new.position, clearance, c_new, s_new, cfg.body_radius)
        state = new
        c_next = c_new
        t += cfg.dt
        if swept < cfg.body_radius:
            collision = True
            break
    else:
        completed = cfg.duration is not None and cfg.laps is None
    return trace, compute_metrics(trace, collision=collision, completed=completed and not collision,
                                  body_radius=cfg.body_radius,
                                  lap_length=tun.length if tun.closed else None)


def compute_metrics(trace, collision: bool | None = None, completed: bool = False, body_radius: float = 0.4,
                    settle: float = SETTLE_TIME, lap_length: float | None = None) -> RunMetrics:
    """Heading-error statistics after the settle window plus distance, speed and clearance."""
    if not trace:
        raise EmptyTrace("trace has no records")
    t = np.array([r.t for r in trace])
    err = np.array([abs(wrap_angle(r.psi_d_est - r.psi_d_true)) if not math.isnan(r.psi_d_est) else math.nan
                    for r in trace])
    settled = t >= settle - 1e-9
    e = err[settled]
    e = e[~np.isnan(e)]
    max_e = float(e.max()) if len(e) else math.nan
    p95 = float(np.percentile(e, 95)) if len(e) else math.nan
    clear = np.array([r.clearance for r in trace])
    xyz = np.array([[r.x, r.y, r.z] for r in trace])
    dist = float(np.sum(np.linalg.norm(np.diff(xyz, axis=0), axis=1))) if len(xyz) > 1 else 0.0
    dur = float(t[-1] - t[0])
    min_c = float(clear.min())
    if collision is None:
        collision = min_c < body_radius
    spread = lap_spread(trace, lap_length) if lap_length else None
    return RunMetrics(
        max_psi_error=max_e, p95_psi_error=p95, min_clearance=min_c, distance=dist,
        average_speed=dist / dur if dur > 0 else 0.0, collision=bool(collision), completed=bool(completed),
        ticks=len(trace), duration=dur, laps=int(max(r.lap for r in trace)),
        lap_spread=spread, holds=int(sum(r.hold for r in trace)),
    )


def lap_spread(trace, lap_length: float, step: float = 0.1) -> float | None:
    """Largest distance between any two complete laps' tunnel-relative paths at the same s."""
    laps: dict[int, list] = {}
    for r in trace:
        laps.setdefault(r.lap, []).append((r.s, r.y_off, r.z_off))
    grid = np.arange(0.0, lap_length, step)
    paths = []
    for rows in laps.values():
        a = np.array(rows)
        if len(a) < 10 or np.ptp(a[:, 0]) < 0.9 * lap_length:
            continue
        order = np.argsort(a[:, 0])
        s = a[order, 0]
        y = np.interp(grid, s, a[order, 1], period=lap_length)
        z = np.interp(grid, s, a[order, 2], period=lap_length)
        paths.append(np.column_stack([y, z]))
    if len(paths) < 2:
        return None
    p = np.stack(paths)  # (laps, grid, 2)
    d = np.linalg.norm(p[:, None] - p[None, :], axis=-1)
    return float(d.max())


def run_laps(cfg: SimConfig, laps: int = 10, model=None) -> tuple[list[TraceRecord], RunMetrics]:
    return run(replace(cfg, laps=laps, duration=None), model)


# -- files ------------------------------------------------------------------


def write_trace(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in trace:
            w.writerow([repr(float(getattr(r, c))) for c in TRACE_COLUMNS])


def read_trace(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: float(v) for k, v in row.items()} for row in rows]


def write_metrics(metrics: RunMetrics, path, extra: dict | None = None) -> None:
    data = metrics.to_dict()
    if extra:
        data.update(extra)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")

