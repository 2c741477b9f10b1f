"""Planar geometry primitives: boxes, quads, and page rotations."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Point:
    """A 2D point in pixel coordinates (x right, y down)."""

    x: float
    y: float

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class AABB:
    """Axis-aligned box with x1 <= x2 and y1 <= y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"degenerate box: ({self.x1}, {self.y1}, {self.x2}, {self.y2})")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Point:
        return Point((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


def intersect(a: AABB, b: AABB) -> AABB | None:
    """Intersection of two boxes, or None when the overlap has zero area."""
    x1 = max(a.x1, b.x1)
    y1 = max(a.y1, b.y1)
    x2 = min(a.x2, b.x2)
    y2 = min(a.y2, b.y2)
    if x2 <= x1 or y2 <= y1:
        return None
    return AABB(x1, y1, x2, y2)


@dataclass(frozen=True)
class OrientedQuad:
    """Four corners in consistent order (clockwise for y-down axis-aligned boxes)."""

    corners: tuple[Point, Point, Point, Point]

    def __post_init__(self) -> None:
        if len(self.corners) != 4:
            raise ValueError("quad needs exactly four corners")

    @property
    def area(self) -> float:
        """Unsigned shoelace area."""
        s = 0.0
        for i in range(4):
            a = self.corners[i]
            b = self.corners[(i + 1) % 4]
            s += a.x * b.y - b.x * a.y
        return abs(s) / 2.0

    @property
    def degenerate(self) -> bool:
        return self.area <= 0.0

    def bounds(self) -> AABB:
        xs = [p.x for p in self.corners]
        ys = [p.y for p in self.corners]
        return AABB(min(xs), min(ys), max(xs), max(ys))


def aabb_to_quad(box: AABB) -> OrientedQuad:
    """Corners in order top-left, top-right, bottom-right, bottom-left."""
    return OrientedQuad((
        Point(box.x1, box.y1),
        Point(box.x2, box.y1),
        Point(box.x2, box.y2),
        Point(box.x1, box.y2),
    ))


# Guards the canvas ceil against float dust in cos/sin at exact quarter turns
# (cos(90 deg) ~ 6e-17 would otherwise bump a 200px extent to 201).
_CEIL_EPS = 1e-7


@dataclass(frozen=True)
class RotationTransform:
    """Affine map that rotates a W x H canvas onto an expanded canvas.

    The rotation is about the source center; the translation recenters the
    result on a destination canvas just large enough to hold every source
    corner, so nothing is clipped.
    """

    angle_deg: float
    matrix: tuple[tuple[float, float, float], tuple[float, float, float]]
    src_size: tuple[float, float]
    dst_size: tuple[int, int]

    def apply(self, p: Point) -> Point:
        (a, b, tx), (c, d, ty) = self.matrix
        return Point(a * p.x + b * p.y + tx, c * p.x + d * p.y + ty)

    def inverse(self) -> RotationTransform:
        """Exact inverse map (destination canvas back onto the source canvas)."""
        (a, b, tx), (c, d, ty) = self.matrix
        det = a * d - b * c
        ia, ib, ic, id_ = d / det, -b / det, -c / det, a / det
        itx = -(ia * tx + ib * ty)
        ity = -(ic * tx + id_ * ty)
        return RotationTransform(
            angle_deg=-self.angle_deg,
            matrix=((ia, ib, itx), (ic, id_, ity)),
            src_size=(float(self.dst_size[0]), float(self.dst_size[1])),
            dst_size=(int(math.ceil(self.src_size[0] - _CEIL_EPS)),
                      int(math.ceil(self.src_size[1] - _CEIL_EPS))),
        )


def make_rotation(angle_deg: float, src_size: tuple[float, float]) -> RotationTransform:
    """Rotation by ``angle_deg`` about the source center onto an expanded canvas.

    The destination canvas is ceil(W|cos| + H|sin|) x ceil(W|sin| + H|cos|);
    angle 0 yields the exact identity matrix.
    """
    if abs(angle_deg) > 180.0:
        raise ValueError(f"angle must lie in [-180, 180], got {angle_deg}")
    w, h = float(src_size[0]), float(src_size[1])
    phi = math.radians(angle_deg)
    cos, sin = math.cos(phi), math.sin(phi)
    dst_w = int(math.ceil(w * abs(cos) + h * abs(sin) - _CEIL_EPS))
    dst_h = int(math.ceil(w * abs(sin) + h * abs(cos) - _CEIL_EPS))
    cx, cy = w / 2.0, h / 2.0
    tx = dst_w / 2.0 - (cos * cx - sin * cy)
    ty = dst_h / 2.0 - (sin * cx + cos * cy)
    return RotationTransform(
        angle_deg=angle_deg,
        matrix=((cos, -sin, tx), (sin, cos, ty)),
        src_size=(w, h),
        dst_size=(dst_w, dst_h),
    )


def transform_quad(t: RotationTransform, quad: OrientedQuad) -> OrientedQuad:
    """Apply the transform to each corner, preserving corner order."""
    a, b, c, d = quad.corners
    return OrientedQuad((t.apply(a), t.apply(b), t.apply(c), t.apply(d)))
