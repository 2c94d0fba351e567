"""Shared builders: a minimal straight-road map and trajectory helpers.

The map has two eastbound lanes (e1 at y=-5.25, e2 at y=-1.75) and one
westbound lane (w1 at y=+1.75); the road spans y in [-7, 3.5] and x in
[-200, 200] with a 10 m/s limit everywhere. Exact lane geometry keeps the
hand-computed test expectations exact.
"""
from __future__ import annotations

import numpy as np
import pytest
from shapely.geometry import Polygon

from drivepref.world import (Agent, ConflictZone, Lane, Map, Realization,
                             Scenario, Trajectory, time_grid)

ROAD_Y = (-7.0, 3.5)
LIMIT = 10.0


def rect(x0, y0, x1, y1) -> Polygon:
    return Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def straight_lane(lid, y, x0=-200.0, x1=200.0, reverse=False) -> Lane:
    p0, p1 = ((x1, y), (x0, y)) if reverse else ((x0, y), (x1, y))
    n = np.array([0.0, 1.0]) if not reverse else np.array([0.0, -1.0])
    pts = np.array([p0, p1])
    return Lane(lid, pts, pts + n * 1.75, pts - n * 1.75)


@pytest.fixture
def road_map() -> Map:
    return Map(
        id="test_road",
        drivable_area=[rect(-200, ROAD_Y[0], 200, ROAD_Y[1])],
        lanes=[straight_lane("e1", -5.25), straight_lane("e2", -1.75),
               straight_lane("w1", 1.75, reverse=True)],
        speed_limit_zones=[(rect(-200, ROAD_Y[0], 200, ROAD_Y[1]), LIMIT)],
    )


def const_traj(x0, y, speed, duration, heading=0.0) -> Trajectory:
    t = time_grid(duration, 0.1)
    x = x0 + speed * np.cos(heading) * t
    yy = y + speed * np.sin(heading) * t
    return Trajectory(np.column_stack([t, x, yy, np.full_like(t, heading),
                                       np.full_like(t, speed)]))


def still_traj(x, y, duration, heading=0.0) -> Trajectory:
    return Trajectory(np.array([[0.0, x, y, heading, 0.0],
                                [duration, x, y, heading, 0.0]]))


def vehicle(aid, traj, length=4.5, width=2.0, kind="vehicle", zones=()) -> Agent:
    return Agent(aid, kind, length, width, traj, frozenset(zones))


def pedestrian(aid, traj, size=0.5) -> Agent:
    return Agent(aid, "pedestrian", size, size, traj)


def make_scene(ego_traj: Trajectory, agents=(), duration=None, zones=(),
               scenario_id="s", realization_id="r"):
    duration = duration if duration is not None else ego_traj.t_end
    scen = Scenario(scenario_id, "test_road", duration, list(agents), list(zones))
    real = Realization(realization_id, scenario_id,
                       Agent("ego", "vehicle", 4.5, 2.0, ego_traj))
    return real, scen


def aligned_rect_distance(c1, half1, c2, half2) -> float:
    """Axis-aligned rectangle gap: the hand 'spreadsheet' distance formula."""
    dx = max(0.0, abs(c1[0] - c2[0]) - (half1[0] + half2[0]))
    dy = max(0.0, abs(c1[1] - c2[1]) - (half1[1] + half2[1]))
    return float(np.hypot(dx, dy))


def conflict_zone(zid, x0, y0, x1, y1) -> ConflictZone:
    return ConflictZone(zid, rect(x0, y0, x1, y1))
