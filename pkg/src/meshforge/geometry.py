"""Detection-box geometry for the image path: lasso, crop, confidence filter.

The client draws a freehand lasso over its camera image and submits the
polygon; everything downstream is plain 2D geometry on the detector's
boxes, in image pixel coordinates (origin top-left, x right, y down).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "DetectionBox",
    "LassoPolygon",
    "GeometryError",
    "point_in_polygon",
    "filter_detections",
    "crop_rect",
]


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionBox:
    label: str
    confidence: float
    box: tuple[float, float, float, float]  # x0, y0, x1, y1

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise GeometryError(f"confidence {self.confidence} outside [0, 1]")
        x0, y0, x1, y1 = self.box
        if not (x1 > x0 and y1 > y0):
            raise GeometryError(f"degenerate box {self.box}")

    @property
    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.box
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)

    def as_dict(self) -> dict:
        return {"label": self.label, "confidence": self.confidence, "box": list(self.box)}


@dataclass(frozen=True)
class LassoPolygon:
    points: tuple[tuple[float, float], ...]  # closed implicitly

    def __post_init__(self):
        if len(self.points) < 3:
            raise GeometryError("a lasso needs at least 3 points")
        pts = tuple((float(x), float(y)) for x, y in self.points)
        for x, y in pts:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise GeometryError("lasso points must be finite")
        object.__setattr__(self, "points", pts)


def point_in_polygon(x: float, y: float, polygon: LassoPolygon) -> bool:
    """Even-odd rule: count edge crossings of a ray toward +x."""
    pts = polygon.points
    inside = False
    n = len(pts)
    j = n - 1
    for i in range(n):
        xi, yi = pts[i]
        xj, yj = pts[j]
        if (yi > y) != (yj > y):
            x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi
            if x < x_cross:
                inside = not inside
        j = i
    return inside


def filter_detections(
    detections: list[DetectionBox],
    lasso: LassoPolygon | None = None,
    min_confidence: float = 0.5,
) -> list[DetectionBox]:
    """Keep confident boxes whose center lies inside the lasso.

    No lasso means the capture-everything button was used: only the
    confidence filter applies. Output is a subset of the input in the
    original order.
    """
    if not 0.0 <= min_confidence <= 1.0:
        raise GeometryError(f"min_confidence {min_confidence} outside [0, 1]")
    kept = []
    for det in detections:
        if det.confidence < min_confidence:
            continue
        if lasso is not None:
            cx, cy = det.center
            if not point_in_polygon(cx, cy, lasso):
                continue
        kept.append(det)
    return kept


def crop_rect(
    lasso: LassoPolygon, image_size: tuple[int, int]
) -> tuple[float, float, float, float]:
    """Axis-aligned bounding rectangle of the lasso, clamped to the image."""
    w, h = image_size
    if w <= 0 or h <= 0:
        raise GeometryError(f"bad image size {image_size}")
    xs = [p[0] for p in lasso.points]
    ys = [p[1] for p in lasso.points]
    x0 = max(0.0, min(xs))
    y0 = max(0.0, min(ys))
    x1 = min(float(w), max(xs))
    y1 = min(float(h), max(ys))
    if x1 <= x0 or y1 <= y0:
        raise GeometryError("lasso has zero area after clamping to the image")
    return (x0, y0, x1, y1)
