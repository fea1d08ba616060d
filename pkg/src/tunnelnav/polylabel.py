"""Pole of inaccessibility by best-first quadtree search.

Cells are ranked by their potential (distance of the centre to the ring plus
the half-diagonal), which bounds the best distance reachable inside the cell.
A cell is only split when that bound beats the current best by more than the
requested precision.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput
from .geometry import as_polygon, polygon_area, polygon_centroid, signed_distances

DEFAULT_PRECISION = 0.01
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class SafeSpot:
    center: tuple[float, float]
    radius: float
    precision_used: float


@dataclass(frozen=True)
class Cell:
    center: tuple[float, float]
    h: float
    dist: float

    @property
    def potential(self) -> float:
        return self.dist + self.h * SQRT2


def pole_of_inaccessibility(poly, precision: float = DEFAULT_PRECISION, trace: list | None = None) -> SafeSpot:
    """Centre and radius of the largest circle inscribed in ``poly``.

    If ``trace`` is a list, the potential of every popped cell is appended
    to it in pop order.
    """
    if precision <= 0:
        raise ValueError("precision must be positive")
    ring = as_polygon(poly)
    if abs(polygon_area(ring)) <= 1e-12:
        raise DegenerateInput("polygon has zero area")

    lo = ring.min(axis=0)
    hi = ring.max(axis=0)
    width, height = hi - lo
    cell_size = min(width, height)
    if cell_size <= 0:
        raise DegenerateInput("polygon has zero area")
    h = cell_size / 2.0

    counter = itertools.count()
    heap: list = []

    def push_many(centers: np.ndarray, half: float) -> None:
        d = signed_distances(centers, ring)
        for (cy, cz), di in zip(centers, d):
            pot = di + half * SQRT2
            heapq.heappush(heap, (-pot, next(counter), float(cy), float(cz), half, float(di)))

    ys = np.arange(lo[0], hi[0], cell_size)
    zs = np.arange(lo[1], hi[1], cell_size)
    grid = np.array([(y + h, z + h) for y in ys for z in zs])
    push_many(grid, h)

    centroid = polygon_centroid(ring)
    best = (centroid, float(signed_distances(np.array([centroid]), ring)[0]))
    bbox_c = (lo[0] + width / 2.0, lo[1] + height / 2.0)
    bbox_d = float(signed_distances(np.array([bbox_c]), ring)[0])
    if bbox_d > best[1]:
        best = ((float(bbox_c[0]), float(bbox_c[1])), bbox_d)

    while heap:
        neg_pot, _, cy, cz, half, d = heapq.heappop(heap)
        if trace is not None:
            trace.append(-neg_pot)
        if d > best[1]:
            best = ((cy, cz), d)
        if -neg_pot - best[1] <= precision:
            # every remaining cell has a lower potential
            break
        q = half / 2.0
        children = np.array([(cy - q, cz - q), (cy + q, cz - q), (cy - q, cz + q), (cy + q, cz + q)])
        push_many(children, q)

    (cy, cz), d = best
    return SafeSpot((float(cy), float(cz)), max(float(d), 0.0), precision)
