"""Pure 2-D geometry: points, triangles, grids, and the opening-area fan.

The opening of the bag is marked by a loose set of 2-D points.  Its area is
estimated by a centroid-anchored triangle fan: repeatedly take the remaining
point closest to the centroid, form two triangles with its two nearest
neighbours, and drop it.  The fan is an estimator, not an exact polygon
triangulation; for a unit square traversed in corner order it yields 0.75
rather than 1.0.  `polygon_area` (plain shoelace) is provided so tests can
put the fan value in context.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import InvalidInputError


@dataclass(frozen=True, slots=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidInputError(f"point coordinates must be finite, got ({self.x!r}, {self.y!r})")


@dataclass(frozen=True, slots=True)
class Triangle:
    a: Point2
    b: Point2
    c: Point2


@dataclass(frozen=True, slots=True)
class Box:
    """Axis-aligned bounding box (x0, y0) .. (x1, y1)."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        for v in (self.x0, self.y0, self.x1, self.y1):
            if not math.isfinite(v):
                raise InvalidInputError("box coordinates must be finite")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def center(self) -> Point2:
        return Point2((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


def triangle_area(t: Triangle) -> float:
    """Unsigned area of a triangle, 0.0 when the vertices are collinear."""
    cross = (t.b.x - t.a.x) * (t.c.y - t.a.y) - (t.b.y - t.a.y) * (t.c.x - t.a.x)
    return abs(cross) / 2.0


def centroid(points: Sequence[Point2]) -> Point2:
    """Arithmetic mean of the coordinates."""
    if not points:
        raise InvalidInputError("centroid of an empty point list")
    sx = 0.0
    sy = 0.0
    for p in points:
        sx += p.x
        sy += p.y
    return Point2(sx / len(points), sy / len(points))


def find_closest_node(
    target: Point2,
    points: Sequence[Point2],
    excluded: Iterable[int] = (),
) -> tuple[int, Point2]:
    """Index and value of the non-excluded point nearest `target`.

    Distances compare as squared euclidean norms; ties resolve to the lowest
    index.  Exclusion is by index, not by coordinate equality, so a query
    point that is itself a member of `points` can be skipped without also
    skipping coincident duplicates.
    """
    skip = frozenset(excluded)
    best_i = -1
    best_d = math.inf
    for i, p in enumerate(points):
        if i in skip:
            continue
        d = (p.x - target.x) ** 2 + (p.y - target.y) ** 2
        if d < best_d:
            best_d = d
            best_i = i
    if best_i < 0:
        raise InvalidInputError("all candidate points are excluded")
    return best_i, points[best_i]


def opening_triangles(points: Sequence[Point2]) -> list[Triangle]:
    """Triangle fan over the opening markers; empty for fewer than 3 points.

    Each pass over the surviving points anchors two triangles at the fixed
    centroid of the original set: one to the nearest neighbour of the point
    `n` closest to the centroid, one to its next nearest after that
    neighbour is removed from the scratch copy.  `n` itself is then removed
    from the master list and the pass repeats while at least three points
    survive.  All nearest-node queries exclude the query point by its index
    in the current scratch copy, so duplicates still pair up.
    """
    work = list(points)
    if len(work) < 3:
        return []
    center = centroid(work)
    triangles: list[Triangle] = []
    while True:
        pts = list(work)
        i, n = find_closest_node(center, pts)
        j, m = find_closest_node(n, pts, excluded=(i,))
        triangles.append(Triangle(center, n, m))
        pts.pop(j)
        n_idx = i - 1 if j < i else i
        _, o = find_closest_node(n, pts, excluded=(n_idx,))
        triangles.append(Triangle(center, n, o))
        work.pop(i)
        if len(work) < 3:
            break
    return triangles


def opening_area(points: Sequence[Point2]) -> float:
    """Estimated opening area: sum of the fan triangles' unsigned areas."""
    total = 0.0
    for t in opening_triangles(points):
        total += triangle_area(t)
    return total


def polygon_area(points: Sequence[Point2]) -> float:
    """Unsigned shoelace area of the polygon through `points` in order.

    Test oracle for bounding the fan estimate; needs at least 3 vertices.
    """
    if len(points) < 3:
        raise InvalidInputError("polygon area needs at least 3 points")
    acc = 0.0
    n = len(points)
    for i in range(n):
        p = points[i]
        q = points[(i + 1) % n]
        acc += p.x * q.y - q.x * p.y
    return abs(acc) / 2.0


def grid_points(region: Box, zeta: int) -> list[Point2]:
    """Cell centers of a uniform zeta x zeta subdivision of `region`.

    Row-major order: y varies slowest.  Every point is strictly inside the
    box, which keeps generated pose points on the bag.
    """
    if zeta < 1:
        raise InvalidInputError(f"zeta must be at least 1, got {zeta}")
    if region.width <= 0 or region.height <= 0:
        raise InvalidInputError("grid region must have positive width and height")
    dx = region.width / zeta
    dy = region.height / zeta
    out = []
    for row in range(zeta):
        y = region.y0 + (row + 0.5) * dy
        for col in range(zeta):
            out.append(Point2(region.x0 + (col + 0.5) * dx, y))
    return out
