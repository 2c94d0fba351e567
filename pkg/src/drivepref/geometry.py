"""Planar geometry primitives: oriented rectangles, distances, penetration depths.

Everything is 2D Cartesian in meters. Regions (drivable area, lane polygons,
zones) are shapely geometries; footprints are oriented rectangles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry import Polygon
from shapely.geometry.base import BaseGeometry

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


def interp_heading(h0: float, h1: float, frac: float) -> float:
    """Interpolate headings along the shortest angular arc."""
    return wrap_angle(h0 + wrap_angle(h1 - h0) * frac)


@dataclass(frozen=True)
class OrientedRect:
    """Rectangle centered at (cx, cy), rotated by heading, length along heading."""

    cx: float
    cy: float
    heading: float
    length: float
    width: float

    def corners(self) -> np.ndarray:
        """Corner coordinates, shape (4, 2), counterclockwise."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        hl, hw = self.length / 2.0, self.width / 2.0
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])

    def polygon(self) -> Polygon:
        return Polygon(self.corners())

    def boundary_points(self, spacing: float = 0.1) -> np.ndarray:
        """Points along the perimeter at roughly `spacing`, corners included."""
        corners = self.corners()
        pts = []
        for i in range(4):
            a, b = corners[i], corners[(i + 1) % 4]
            n = max(1, int(math.ceil(float(np.hypot(*(b - a))) / spacing)))
            for k in range(n):
                pts.append(a + (b - a) * (k / n))
        return np.array(pts)


def min_distance(a: OrientedRect, b: OrientedRect) -> float:
    """Minimum distance between two oriented rectangles; 0 iff they touch or overlap."""
    return float(a.polygon().distance(b.polygon()))


def rects_overlap(a: OrientedRect, b: OrientedRect) -> bool:
    return bool(a.polygon().intersects(b.polygon()))


def depth_outside(rect: OrientedRect, region: BaseGeometry,
                  spacing: float = 0.1) -> float:
    """How far the rectangle sticks out of `region`.

    Max over perimeter samples of the distance to the region; 0 when the
    rectangle is covered. Exact at corners, so axis-aligned setups whose
    extreme point is a corner evaluate exactly.
    """
    poly = rect.polygon()
    if region.covers(poly):
        return 0.0
    pts = shapely.points(rect.boundary_points(spacing))
    return float(np.max(shapely.distance(pts, region)))


def depth_inside(rect: OrientedRect, region: BaseGeometry,
                 spacing: float = 0.1) -> float:
    """How deep the rectangle reaches into `region`.

    Max over perimeter samples lying inside the region of the distance to the
    region's boundary; 0 when the rectangle stays clear of the region.
    """
    poly = rect.polygon()
    if not poly.intersects(region):
        return 0.0
    pts = shapely.points(rect.boundary_points(spacing))
    inside = shapely.covers(region, pts)
    if not inside.any():
        return 0.0
    d = shapely.distance(pts[inside], region.boundary)
    return float(np.max(d))


def mirror_x(geom: BaseGeometry) -> BaseGeometry:
    """Reflect a geometry about the vertical (x = 0) axis."""
    return shapely.transform(geom, lambda c: c * np.array([-1.0, 1.0]))


def bearing_in_frame(cx: float, cy: float, heading: float,
                     px: float, py: float) -> float:
    """Bearing of world point (px, py) seen from a pose, in (-pi, pi]; 0 = dead ahead."""
    dx, dy = px - cx, py - cy
    return wrap_angle(math.atan2(dy, dx) - heading)
