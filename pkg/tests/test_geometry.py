import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshforge.geometry import (
    DetectionBox,
    GeometryError,
    LassoPolygon,
    crop_rect,
    filter_detections,
    point_in_polygon,
)


def winding_number_inside(x, y, polygon):
    """Independent point-in-polygon oracle via the winding number."""
    wn = 0
    pts = polygon.points
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        is_left = (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)
        if y0 <= y:
            if y1 > y and is_left > 0:
                wn += 1
        else:
            if y1 <= y and is_left < 0:
                wn -= 1
    return wn != 0


SQUARE = LassoPolygon(((0, 0), (10, 0), (10, 10), (0, 10)))
CONVEX = LassoPolygon(((5, 0), (10, 5), (5, 10), (0, 5)))


class TestPointInPolygon:
    def test_center_inside_square(self):
        assert point_in_polygon(5, 5, SQUARE)

    def test_outside_square(self):
        assert not point_in_polygon(15, 5, SQUARE)
        assert not point_in_polygon(-1, 5, SQUARE)

    def test_concave_polygon(self):
        # C-shape: the notch is outside
        c_shape = LassoPolygon(
            ((0, 0), (10, 0), (10, 3), (3, 3), (3, 7), (10, 7), (10, 10), (0, 10))
        )
        assert point_in_polygon(1.5, 5, c_shape)
        assert not point_in_polygon(7, 5, c_shape)

    def test_matches_winding_number_oracle_on_random_points(self):
        rng = np.random.default_rng(99)
        polygons = [SQUARE, CONVEX]
        # a random simple polygon (star-shaped around the centroid)
        angles = np.sort(rng.uniform(0, 2 * math.pi, size=9))
        radii = rng.uniform(2, 6, size=9)
        star = LassoPolygon(
            tuple((5 + r * math.cos(a), 5 + r * math.sin(a)) for r, a in zip(radii, angles))
        )
        polygons.append(star)
        checked = 0
        for poly in polygons:
            for _ in range(1000):
                x, y = rng.uniform(-2, 12, size=2)
                # skip points razor-close to an edge where the two rules may
                # legitimately differ in floating point
                if _near_edge(x, y, poly):
                    continue
                assert point_in_polygon(x, y, poly) == winding_number_inside(x, y, poly)
                checked += 1
        assert checked > 2500

    def test_lasso_needs_three_points(self):
        with pytest.raises(GeometryError):
            LassoPolygon(((0, 0), (1, 1)))

    def test_lasso_rejects_non_finite(self):
        with pytest.raises(GeometryError):
            LassoPolygon(((0, 0), (1, float("nan")), (2, 2)))


def _near_edge(x, y, poly, eps=1e-6):
    pts = poly.points
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        dx, dy = x1 - x0, y1 - y0
        length2 = dx * dx + dy * dy
        if length2 == 0:
            continue
        t = max(0.0, min(1.0, ((x - x0) * dx + (y - y0) * dy) / length2))
        px, py = x0 + t * dx, y0 + t * dy
        if (x - px) ** 2 + (y - py) ** 2 < eps:
            return True
    return False


class TestFilterDetections:
    def box(self, label, conf, cx, cy):
        return DetectionBox(label, conf, (cx - 1, cy - 1, cx + 1, cy + 1))

    def test_confident_box_inside_lasso_kept(self):
        kept = filter_detections([self.box("apple", 0.9, 5, 5)], SQUARE, 0.5)
        assert len(kept) == 1

    def test_low_confidence_dropped_at_default_threshold(self):
        kept = filter_detections([self.box("apple", 0.4, 5, 5)], SQUARE, 0.5)
        assert kept == []

    def test_center_outside_lasso_dropped(self):
        kept = filter_detections([self.box("apple", 0.9, 20, 20)], SQUARE, 0.5)
        assert kept == []

    def test_no_lasso_means_confidence_only(self):
        boxes = [self.box("a", 0.9, 100, 100), self.box("b", 0.3, 5, 5)]
        kept = filter_detections(boxes, None, 0.5)
        assert [b.label for b in kept] == ["a"]

    def test_subset_and_order_preserved(self):
        boxes = [self.box(f"x{i}", 0.6, 2 + i, 2) for i in range(5)]
        kept = filter_detections(boxes, SQUARE, 0.5)
        assert kept == boxes

    def test_bad_threshold_rejected(self):
        with pytest.raises(GeometryError):
            filter_detections([], None, 1.5)

    def test_degenerate_box_rejected(self):
        with pytest.raises(GeometryError):
            DetectionBox("x", 0.9, (5, 5, 5, 10))

    def test_confidence_range_enforced(self):
        with pytest.raises(GeometryError):
            DetectionBox("x", 1.2, (0, 0, 1, 1))


class TestCropRect:
    def test_triangle_bounding_box(self):
        tri = LassoPolygon(((10, 10), (50, 10), (30, 40)))
        assert crop_rect(tri, (100, 100)) == (10, 10, 50, 40)

    def test_clamped_to_image(self):
        poly = LassoPolygon(((-5, -5), (120, -5), (120, 90), (-5, 90)))
        assert crop_rect(poly, (100, 80)) == (0, 0, 100, 80)

    def test_zero_area_after_clamp_rejected(self):
        off_image = LassoPolygon(((200, 200), (210, 200), (205, 220)))
        with pytest.raises(GeometryError, match="zero area"):
            crop_rect(off_image, (100, 100))

    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=-50, max_value=150, allow_nan=False),
                st.floats(min_value=-50, max_value=150, allow_nan=False),
            ),
            min_size=3,
            max_size=12,
        )
    )
    @settings(max_examples=150, deadline=None)
    def test_every_vertex_inside_preclamp_rect(self, pts):
        poly = LassoPolygon(tuple(pts))
        xs = [p[0] for p in poly.points]
        ys = [p[1] for p in poly.points]
        x0, y0, x1, y1 = min(xs), min(ys), max(xs), max(ys)
        for x, y in poly.points:
            assert x0 <= x <= x1 and y0 <= y <= y1
