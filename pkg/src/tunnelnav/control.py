"""Safe-spot guidance: cross-section extraction, speed law, lateral and yaw commands.

Velocity commands live in the *section frame*: the stabilised body frame
turned by the estimated relative yaw so that x runs along the tunnel axis.
:meth:`ControlCommand.body_velocity` maps them back to the stabilised body
frame for whoever flies the vehicle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import yaw as yawmod
from .errors import DegenerateInput, TunnelNavError
from .geometry import rdp_simplify, rot_z
from .polylabel import DEFAULT_PRECISION, SafeSpot, pole_of_inaccessibility

RDP_EPSILON = 0.02
# angular bins for the section envelope (3 degrees each)
SECTION_BINS = 120
YAW_RATE_LIMIT = 1.5
GEOMETRIC = "geometric"
LEARNED = "learned"


@dataclass(frozen=True)
class ControlGains:
    k_y: float = 0.8
    k_z: float = 0.8
    k_psi: float = 2.0
    v_max: float = 3.0
    v_min: float = 1.0
    r_sc: float = 0.7
    th: float | None = None  # defaults to (v_min / v_max) ** 0.25

    def __post_init__(self):
        if not 0 < self.v_min <= self.v_max:
            raise ValueError("need 0 < v_min <= v_max")
        if self.r_sc <= 0:
            raise ValueError("r_sc must be positive")
        if min(self.k_y, self.k_z, self.k_psi) < 0:
            raise ValueError("gains must be non-negative")
        if not 0 < self.threshold < 1:
            raise ValueError("th must lie in (0, 1)")

    @property
    def threshold(self) -> float:
        return (self.v_min / self.v_max) ** 0.25 if self.th is None else self.th


@dataclass(frozen=True)
class ControlCommand:
    v_x: float
    v_y: float
    v_z: float
    yaw_rate: float
    psi_hat: float = 0.0  # rotation from stabilised body to section frame

    @property
    def is_hold(self) -> bool:
        return self.v_x == 0.0 and self.v_y == 0.0 and self.v_z == 0.0 and self.yaw_rate == 0.0

    def body_velocity(self) -> np.ndarray:
        """Velocity in the stabilised body frame (heading = vehicle yaw)."""
        return rot_z(-self.psi_hat) @ np.array([self.v_x, self.v_y, self.v_z])


HOLD = ControlCommand(0.0, 0.0, 0.0, 0.0)


@dataclass
class StepResult:
    command: ControlCommand
    spot: SafeSpot | None = None
    estimate: yawmod.YawEstimate | None = None
    diagnostic: str | None = None
    section: np.ndarray | None = field(default=None, repr=False)


def cross_section(cloud, psi_hat: float) -> np.ndarray:
    """Yaw-compensated y-z section of a stabilised cloud as a simplified ring."""
    if abs(psi_hat) > yawmod.YAW_RANGE + 1e-9:
        raise DegenerateInput("relative yaw outside [-40, 40] degrees")
    pts = np.asarray(getattr(cloud, "points", cloud), dtype=float).reshape(-1, 3)
    yz = yawmod.align(pts, psi_hat)[:, 1:]
    yz = np.unique(yz, axis=0)
    if len(yz) < 3:
        raise DegenerateInput("fewer than 3 distinct points")
    return rdp_simplify(section_envelope(yz), RDP_EPSILON)


def section_envelope(yz: np.ndarray, bins: int = SECTION_BINS) -> np.ndarray:
    """Nearest point per angular bin around the centroid, in angle order.

    In a bend the tilted scans hit the wall ahead of and behind the vehicle,
    so their projections form interleaved arcs at slightly different radii;
    sorting all points by angle would zig-zag between them. Keeping the
    innermost return per bin gives a clean ring that never overstates the
    free space.
    """
    d = yz - yz.mean(axis=0)
    ang = np.arctan2(d[:, 1], d[:, 0])
    r = np.hypot(d[:, 0], d[:, 1])
    b = np.floor((ang + math.pi) * (bins / (2 * math.pi))).astype(np.int64) % bins
    order = np.lexsort((r, b))
    bo = b[order]
    first = np.r_[True, bo[1:] != bo[:-1]]
    ring = yz[order[first]]
    if len(ring) < 3:
        raise DegenerateInput("section spans fewer than 3 angular bins")
    return ring


def speed_law(r_c: float, gains: ControlGains) -> float:
    """Forward speed from the safe-spot radius: full, quartic, or minimum."""
    if r_c <= 0:
        raise ValueError("r_c must be positive")
    R = r_c / gains.r_sc
    if R >= 1.0:
        return gains.v_max
    if R > gains.threshold:
        return max(gains.v_max * R**4, gains.v_min)
    return gains.v_min


def lateral_command(spot: SafeSpot, gains: ControlGains) -> tuple[float, float]:
    yc, zc = spot.center
    if math.hypot(yc, zc) + gains.r_sc <= spot.radius:
        return 0.0, 0.0
    return gains.k_y * yc, gains.k_z * zc


def yaw_command(psi_hat: float, gains: ControlGains) -> float:
    return float(np.clip(-gains.k_psi * psi_hat, -YAW_RATE_LIMIT, YAW_RATE_LIMIT))


def step(cloud, inclinometer, gains: ControlGains, estimator: str = GEOMETRIC, model=None,
         precision: float = DEFAULT_PRECISION) -> StepResult:
    """One perception-guidance cycle; any failure yields a hold command."""
    try:
        stab = yawmod.stabilize(cloud, inclinometer)
        if len(stab.points) == 0:
            raise yawmod.EmptyCloud("no LiDAR returns")
        if estimator == GEOMETRIC:
            est = yawmod.estimate_yaw_geometric(stab)
        elif estimator == LEARNED:
            est = yawmod.estimate_yaw_learned(yawmod.rasterize(stab, inclinometer), model)
        else:
            raise ValueError(f"unknown estimator {estimator!r}")
        section = cross_section(stab, est.psi)
        spot = pole_of_inaccessibility(section, precision)
        if spot.radius <= 0:
            raise DegenerateInput("vehicle is not inside the measured section")
        vy, vz = lateral_command(spot, gains)
        cmd = ControlCommand(speed_law(spot.radius, gains), vy, vz, yaw_command(est.psi, gains), est.psi)
        return StepResult(cmd, spot, est, None, section)
    except (TunnelNavError, ValueError, np.linalg.LinAlgError) as exc:
        return StepResult(HOLD, diagnostic=f"{type(exc).__name__}: {exc}")
