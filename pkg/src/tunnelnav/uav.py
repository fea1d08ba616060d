"""Kinematic multirotor with first-order velocity response and an inclinometer."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Attitude, rot_z, wrap_angle

GRAVITY = 9.81
TAU = 0.3
BANK_LIMIT = math.radians(15.0)
MAX_DT = 0.1


@dataclass(frozen=True)
class UavState:
    position: np.ndarray
    attitude: Attitude
    velocity: np.ndarray  # world frame
    yaw_rate: float = 0.0
    body_radius: float = 0.4

    def __post_init__(self):
        if self.body_radius <= 0:
            raise ValueError("body radius must be positive")

    @classmethod
    def hover(cls, position, yaw: float, body_radius: float = 0.4) -> "UavState":
        return cls(np.asarray(position, dtype=float), Attitude(0.0, 0.0, yaw), np.zeros(3), 0.0, body_radius)


@dataclass
class Inclinometer:
    sigma: float = math.radians(0.3)
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        self.rng = np.random.default_rng(self.seed)

    def read(self, state: UavState) -> tuple[float, float]:
        """True roll and pitch plus independent zero-mean Gaussian noise."""
        if self.sigma == 0:
            return state.attitude.roll, state.attitude.pitch
        n = self.rng.normal(0.0, self.sigma, size=2)
        return state.attitude.roll + float(n[0]), state.attitude.pitch + float(n[1])


def read_inclinometer(state: UavState, model: Inclinometer) -> tuple[float, float]:
    return model.read(state)


def integrate(state: UavState, cmd, dt: float, tau: float = TAU) -> UavState:
    """Advance the vehicle by ``dt`` under a velocity command.

    ``cmd`` needs ``body_velocity()`` (stabilised body frame) and
    ``yaw_rate``. Velocity and yaw rate relax toward their commands with
    time constant ``tau``; roll and pitch track the tilt needed to produce
    the resulting horizontal acceleration, bounded to 15 degrees.
    """
    if not 0 < dt <= MAX_DT:
        raise ValueError("dt must lie in (0, 0.1]")
    if tau <= 0:
        raise ValueError("tau must be positive")
    k = -math.expm1(-dt / tau)  # exact decay over the step, stable for any dt
    yaw = state.attitude.yaw
    v_cmd = rot_z(yaw) @ np.asarray(cmd.body_velocity(), dtype=float)
    v = state.velocity + k * (v_cmd - state.velocity)
    position = state.position + v * dt
    yaw_rate = state.yaw_rate + k * (cmd.yaw_rate - state.yaw_rate)
    new_yaw = yaw + yaw_rate * dt
    if not -math.pi < new_yaw <= math.pi:
        new_yaw = wrap_angle(new_yaw)

    acc = rot_z(-new_yaw) @ ((v - state.velocity) / dt)
    pitch_t = float(np.clip(math.atan2(acc[0], GRAVITY), -BANK_LIMIT, BANK_LIMIT))
    roll_t = float(np.clip(-math.atan2(acc[1], GRAVITY), -BANK_LIMIT, BANK_LIMIT))
    roll = state.attitude.roll + k * (roll_t - state.attitude.roll)
    pitch = state.attitude.pitch + k * (pitch_t - state.attitude.pitch)
    return replace(state, position=position, attitude=Attitude(roll, pitch, new_yaw), velocity=v, yaw_rate=yaw_rate)
