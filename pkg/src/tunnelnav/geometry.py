"""Frames, rotations, projections, circle fitting and polygon helpers.

Conventions used throughout the package:

* body frame: x forward, y left, z up;
* attitude is applied as intrinsic Z-Y-X, ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``,
  mapping body coordinates to world coordinates;
* point clouds are ``(N, 3)`` float arrays, planar point sets and polygons
  are ``(N, 2)`` arrays of ``(y, z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateInput

COLLINEAR_TOL = 1e-9
COINCIDENT_TOL = 1e-9


@dataclass(frozen=True)
class Attitude:
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0


@dataclass(frozen=True)
class Circle2:
    center: tuple[float, float]
    radius: float


def wrap_angle(a):
    """Wrap an angle (scalar or array) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_matrix(att: Attitude) -> np.ndarray:
    return rot_z(att.yaw) @ rot_y(att.pitch) @ rot_x(att.roll)


def rotate_cloud(points, attitude: Attitude, negate: bool = False) -> np.ndarray:
    """Rotate every point by the attitude matrix, or by its inverse if ``negate``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    R = rotation_matrix(attitude)
    if negate:
        R = R.T
    return pts @ R.T


def project_yz(points) -> tuple[np.ndarray, np.ndarray]:
    """Drop the x coordinate. Returns ``(yz, x)`` with order preserved."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return pts[:, 1:3].copy(), pts[:, 0].copy()


# -- circle fitting ---------------------------------------------------------


def fit_circle(points) -> tuple[Circle2, float]:
    """Algebraic (Kasa) least-squares circle fit.

    Minimises ``sum((y^2 + z^2 + D*y + E*z + F)^2)`` through the 3x3 normal
    equations. Coordinates are centred and scaled before solving so the
    collinearity test is independent of where the points sit.

    Returns the circle and the RMS of the geometric residuals
    ``|dist(p, center) - radius|``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise DegenerateInput("circle fit needs at least 3 points")
    mean = pts.mean(axis=0)
    q = pts - mean
    scale = math.sqrt(float(np.mean(np.sum(q * q, axis=1))))
    if scale == 0.0:
        raise DegenerateInput("all points coincide")
    u = q / scale
    A = np.column_stack([u[:, 0], u[:, 1], np.ones(len(u))])
    b = -(u[:, 0] ** 2 + u[:, 1] ** 2)
    M = A.T @ A / len(u)
    if abs(np.linalg.det(M)) < COLLINEAR_TOL:
        raise DegenerateInput("points are collinear")
    D, E, F = np.linalg.solve(M, A.T @ b / len(u))
    cy, cz = -D / 2.0, -E / 2.0
    r2 = cy * cy + cz * cz - F
    r = math.sqrt(max(r2, 0.0))
    center = np.array([cy, cz]) * scale + mean
    radius = r * scale
    resid = np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1]) - radius
    rms = math.sqrt(float(np.mean(resid * resid)))
    return Circle2((float(center[0]), float(center[1])), float(radius)), rms


def circle_fit_residuals(y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Batched Kasa fit: RMS geometric residual for each row of ``y``.

    ``y`` has shape ``(K, N)`` (one candidate projection per row) and ``z``
    shape ``(N,)`` or ``(K, N)``. Rows whose points are collinear get ``inf``.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    z = np.broadcast_to(np.asarray(z, dtype=float), y.shape)
    n = y.shape[1]
    my = y.mean(axis=1, keepdims=True)
    mz = z.mean(axis=1, keepdims=True)
    qy, qz = y - my, z - mz
    scale = np.sqrt(np.mean(qy * qy + qz * qz, axis=1, keepdims=True))
    scale = np.where(scale == 0.0, 1.0, scale)
    uy, uz = qy / scale, qz / scale
    w = -(uy * uy + uz * uz)
    syy = np.mean(uy * uy, axis=1)
    szz = np.mean(uz * uz, axis=1)
    syz = np.mean(uy * uz, axis=1)
    sy = np.mean(uy, axis=1)
    sz = np.mean(uz, axis=1)
    M = np.empty((len(y), 3, 3))
    M[:, 0, 0], M[:, 0, 1], M[:, 0, 2] = syy, syz, sy
    M[:, 1, 0], M[:, 1, 1], M[:, 1, 2] = syz, szz, sz
    M[:, 2, 0], M[:, 2, 1], M[:, 2, 2] = sy, sz, 1.0
    rhs = np.stack([np.mean(uy * w, axis=1), np.mean(uz * w, axis=1), np.mean(w, axis=1)], axis=1)
    det = np.linalg.det(M)
    bad = np.abs(det) < COLLINEAR_TOL
    M[bad] = np.eye(3)
    sol = np.linalg.solve(M, rhs[..., None])[..., 0]
    cy, cz = -sol[:, 0] / 2.0, -sol[:, 1] / 2.0
    r = np.sqrt(np.maximum(cy * cy + cz * cz - sol[:, 2], 0.0))
    d = np.hypot(uy - cy[:, None], uz - cz[:, None]) - r[:, None]
    rms = np.sqrt(np.mean(d * d, axis=1)) * scale[:, 0]
    rms[bad] = np.inf
    return rms if n else np.full(len(y), np.inf)


# -- polygons ---------------------------------------------------------------


def as_polygon(poly) -> np.ndarray:
    p = np.asarray(poly, dtype=float).reshape(-1, 2)
    if len(p) < 3:
        raise DegenerateInput("polygon needs at least 3 vertices")
    return p


def signed_distances(points, poly) -> np.ndarray:
    """Vectorised signed distance of many points to a polygon ring.

    Positive inside, negative outside (even-odd rule); magnitude is the
    distance to the nearest edge segment.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
    ring = np.ascontiguousarray(as_polygon(poly))
    return _kernels.signed_distances(pts, ring)


def point_polygon_distance(p, poly) -> float:
    return float(signed_distances(np.asarray(p, dtype=float).reshape(1, 2), poly)[0])


def polygon_area(poly) -> float:
    p = as_polygon(poly)
    y, z = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(y, np.roll(z, -1)) - np.dot(np.roll(y, -1), z))


def polygon_centroid(poly) -> tuple[float, float]:
    p = as_polygon(poly)
    y, z = p[:, 0], p[:, 1]
    yn, zn = np.roll(y, -1), np.roll(z, -1)
    f = y * zn - yn * z
    area3 = 3.0 * float(f.sum())
    if area3 == 0.0:
        return float(y[0]), float(z[0])
    return float(np.sum((y + yn) * f) / area3), float(np.sum((z + zn) * f) / area3)


def rdp_simplify(poly, epsilon: float) -> np.ndarray:
    """Ramer-Douglas-Peucker simplification of a closed ring.

    The ring is split at its two mutually farthest vertices and each open
    chain is simplified independently, so the result does not depend on
    which vertex the ring starts at. Kept vertices are returned in their
    original order.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    p = as_polygon(poly)
    kept = rdp_simplify_indices(p, epsilon)
    if len(kept) < 3:
        raise DegenerateInput("simplified ring has fewer than 3 vertices")
    return p[kept]


def rdp_simplify_indices(p: np.ndarray, epsilon: float) -> np.ndarray:
    n = len(p)
    p = np.ascontiguousarray(p, dtype=float)
    i, j = _kernels.farthest_pair(p)
    keep = np.zeros(n, dtype=np.bool_)
    _kernels.rdp_chain(p, np.arange(i, j + 1), epsilon, keep)
    _kernels.rdp_chain(p, np.concatenate([np.arange(j, n), np.arange(0, i + 1)]), epsilon, keep)
    return np.flatnonzero(keep)
