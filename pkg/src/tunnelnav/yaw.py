"""Roll/pitch stabilisation, CNN rasterisation and yaw-to-axis estimation.

Yaw here is always the heading relative to the tunnel axis. Rotating a
stabilised cloud by ``Rz(psi)`` with ``psi`` equal to that heading lines the
tunnel axis up with x, at which point the y-z projection of a cylindrical
tunnel collapses onto its circular section.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AttitudeOutOfRange, DegenerateInput, EmptyCloud, UntrainedModel
from . import _kernels
from .geometry import COLLINEAR_TOL, rot_x, rot_y, rot_z

MAX_TILT = math.radians(30.0)
YAW_RANGE = math.radians(40.0)
RP_RANGE = math.radians(20.0)

IMG_W, IMG_H = 60, 80
IMG_SHAPE = (3, IMG_H, IMG_W)
WINDOW_Y = (-6.0, 6.0)
WINDOW_Z = (-8.0, 8.0)
DEPTH_SCALE = 10.0

GRID_STEP = math.radians(1.0)
REFINE_TOL = math.radians(0.1)
MIN_POINTS = 40
# returns this close to the lowest one (fraction of the vertical extent) are
# left out of the circle fit: a flat floor is a chord, not part of any circle
FLOOR_BAND = 0.1


@dataclass
class StabilizedCloud:
    points: np.ndarray
    roll: float
    pitch: float


@dataclass(frozen=True)
class YawEstimate:
    psi: float
    residual: float | None
    method: str


def _level_matrix(roll: float, pitch: float) -> np.ndarray:
    # body -> gravity-aligned frame that keeps the body heading
    return rot_y(pitch) @ rot_x(roll)


def stabilize(cloud, inclinometer: tuple[float, float]) -> StabilizedCloud:
    """Undo roll and pitch so the cloud's z axis points against gravity."""
    roll, pitch = inclinometer
    if abs(roll) > MAX_TILT or abs(pitch) > MAX_TILT:
        raise AttitudeOutOfRange("roll/pitch beyond 30 degrees")
    pts = np.asarray(getattr(cloud, "points", cloud), dtype=float).reshape(-1, 3)
    return StabilizedCloud(pts @ _level_matrix(roll, pitch).T, float(roll), float(pitch))


def unstabilize(cloud: StabilizedCloud) -> np.ndarray:
    return cloud.points @ _level_matrix(cloud.roll, cloud.pitch)


def _scale_angle(a: float) -> float:
    return min(max((a + RP_RANGE) / (2 * RP_RANGE), 0.0), 1.0)


def rasterize(cloud: StabilizedCloud, inclinometer: tuple[float, float] | None = None) -> np.ndarray:
    """Render a stabilised cloud into the ``(3, 80, 60)`` network input.

    Channel 0 holds ``clamp(1 - mean_x / 10, 0, 1)`` per occupied pixel over a
    fixed 12 m x 16 m window (row 0 is the top, z = +8 m); channels 1 and 2
    are constant planes with roll and pitch mapped from [-20, 20] deg to [0, 1].
    """
    pts = cloud.points
    if len(pts) == 0:
        raise EmptyCloud("cannot rasterize an empty cloud")
    roll, pitch = inclinometer if inclinometer is not None else (cloud.roll, cloud.pitch)
    img = np.zeros((3, IMG_H, IMG_W), dtype=np.float32)
    px = IMG_W / (WINDOW_Y[1] - WINDOW_Y[0])
    pz = IMG_H / (WINDOW_Z[1] - WINDOW_Z[0])
    col = np.floor((pts[:, 1] - WINDOW_Y[0]) * px).astype(int)
    row = np.floor((WINDOW_Z[1] - pts[:, 2]) * pz).astype(int)
    ok = (col >= 0) & (col < IMG_W) & (row >= 0) & (row < IMG_H)
    flat = row[ok] * IMG_W + col[ok]
    sums = np.bincount(flat, weights=pts[ok, 0], minlength=IMG_W * IMG_H)
    counts = np.bincount(flat, minlength=IMG_W * IMG_H)
    occupied = counts > 0
    depth = np.zeros(IMG_W * IMG_H)
    depth[occupied] = np.clip(1.0 - sums[occupied] / counts[occupied] / DEPTH_SCALE, 0.0, 1.0)
    img[0] = depth.reshape(IMG_H, IMG_W)
    img[1] = _scale_angle(roll)
    img[2] = _scale_angle(pitch)
    return img


def yaw_residuals(points: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Circle-fit RMS residual of the y-z projection after rotating by each candidate."""
    p = np.asarray(points, dtype=float)
    c = np.atleast_1d(np.asarray(candidates, dtype=float))
    return _kernels.yaw_sweep(np.ascontiguousarray(p[:, 0]), np.ascontiguousarray(p[:, 1]),
                              np.ascontiguousarray(p[:, 2]), c, COLLINEAR_TOL)


def estimate_yaw_geometric(cloud: StabilizedCloud) -> YawEstimate:
    """Sweep a vertical plane in 1 degree steps, keep the most circular projection.

    The grid minimum is refined by golden-section search to 0.1 degree.
    Heights are unchanged by the sweep, so the floor band is cut once.
    """
    pts = cloud.points
    if len(pts) < MIN_POINTS:
        raise DegenerateInput(f"need at least {MIN_POINTS} points, got {len(pts)}")
    z = pts[:, 2]
    above = pts[z > z.min() + FLOOR_BAND * (z.max() - z.min())]
    if len(above) >= MIN_POINTS:
        pts = above
    grid = np.linspace(-YAW_RANGE, YAW_RANGE, int(round(2 * YAW_RANGE / GRID_STEP)) + 1)
    res = yaw_residuals(pts, grid)
    if not np.isfinite(res).any():
        raise DegenerateInput("projection is degenerate for every candidate")
    k = int(np.argmin(res))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, len(grid) - 1)]

    def f(psi):
        return float(yaw_residuals(pts, np.array([psi]))[0])

    invphi = (math.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > REFINE_TOL:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    psi, r = (c, fc) if fc <= fd else (d, fd)
    if res[k] < r:
        psi, r = float(grid[k]), float(res[k])
    return YawEstimate(float(psi), float(r), "geometric")


def estimate_yaw_learned(img: np.ndarray, model) -> YawEstimate:
    from . import nnet

    if not model.trained:
        raise UntrainedModel("model has not been trained")
    psi = float(nnet.predict(model, img))
    return YawEstimate(float(np.clip(psi, -YAW_RANGE, YAW_RANGE)), None, "learned")


def align(points: np.ndarray, psi: float) -> np.ndarray:
    """Rotate a stabilised cloud so the estimated tunnel axis lies along x."""
    return points @ rot_z(psi).T
