"""Domain model: maps, lanes, trajectories, agents, scenarios, realizations.

All types are immutable after construction (by convention; arrays are made
read-only) so every downstream operation is a pure function and scoring
different realizations concurrently needs no synchronization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Point, Polygon
from shapely.strtree import STRtree

from .errors import TrajectoryRangeError, ValidationError
from .geometry import OrientedRect, interp_heading, wrap_angle

AGENT_KINDS = ("vehicle", "pedestrian", "parked_vehicle")


class Trajectory:
    """Timed 2D poses: columns (t [s], x [m], y [m], heading [rad], speed [m/s]).

    Timestamps are strictly increasing, all values finite, speeds nonnegative.
    Position and speed interpolate linearly between samples; heading follows
    the shortest angular arc.
    """

    __slots__ = ("t", "x", "y", "heading", "speed")

    def __init__(self, samples: Sequence[Sequence[float]] | np.ndarray):
        arr = np.asarray(samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 5 or arr.shape[0] < 1:
            raise ValidationError("trajectory needs an (N, 5) sample array with N >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("trajectory contains non-finite values")
        if arr.shape[0] > 1 and not np.all(np.diff(arr[:, 0]) > 0):
            raise ValidationError("trajectory timestamps must be strictly increasing")
        if np.any(arr[:, 4] < 0):
            raise ValidationError("trajectory speeds must be >= 0")
        for name, col in zip(self.__slots__, arr.T):
            col = np.ascontiguousarray(col)
            col.setflags(write=False)
            object.__setattr__(self, name, col)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def covers(self, t0: float, t1: float, tol: float = 1e-9) -> bool:
        return self.t_start <= t0 + tol and self.t_end >= t1 - tol

    def samples(self) -> np.ndarray:
        return np.column_stack([self.t, self.x, self.y, self.heading, self.speed])


def sample_pose(traj: Trajectory, t: float) -> tuple[float, float, float, float]:
    """Pose (x, y, heading, speed) at time t, linearly interpolated.

    Raises TrajectoryRangeError when t falls outside [first, last] timestamp.
    """
    ts = traj.t
    if t < ts[0] or t > ts[-1]:
        raise TrajectoryRangeError(
            f"t={t:g} outside trajectory range [{ts[0]:g}, {ts[-1]:g}]")
    i = int(np.searchsorted(ts, t, side="left"))
    if i < len(ts) and ts[i] == t:
        return (float(traj.x[i]), float(traj.y[i]),
                float(traj.heading[i]), float(traj.speed[i]))
    lo, hi = i - 1, i
    frac = (t - ts[lo]) / (ts[hi] - ts[lo])
    x = float(traj.x[lo] + (traj.x[hi] - traj.x[lo]) * frac)
    y = float(traj.y[lo] + (traj.y[hi] - traj.y[lo]) * frac)
    speed = float(traj.speed[lo] + (traj.speed[hi] - traj.speed[lo]) * frac)
    heading = interp_heading(float(traj.heading[lo]), float(traj.heading[hi]), frac)
    return (x, y, heading, speed)


def velocity_vector(traj: Trajectory, t: float) -> np.ndarray:
    """Velocity as speed along heading, shape (2,)."""
    _, _, heading, speed = sample_pose(traj, t)
    return np.array([speed * math.cos(heading), speed * math.sin(heading)])


@dataclass(eq=False)
class Agent:
    """A traffic participant with a rectangular footprint and a fixed trajectory."""

    id: str
    kind: str
    length: float
    width: float
    trajectory: Trajectory
    right_of_way_zone_ids: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValidationError(f"agent {self.id!r}: unknown kind {self.kind!r}")
        if self.length <= 0 or self.width <= 0:
            raise ValidationError(f"agent {self.id!r}: footprint dimensions must be > 0")
        if self.kind == "parked_vehicle":
            tr = self.trajectory
            if (np.ptp(tr.x) > 1e-9 or np.ptp(tr.y) > 1e-9 or np.any(tr.speed > 1e-9)):
                raise ValidationError(
                    f"agent {self.id!r}: parked vehicles must be stationary")
        self.right_of_way_zone_ids = frozenset(self.right_of_way_zone_ids)

    def present_at(self, t: float) -> bool:
        return self.trajectory.t_start <= t <= self.trajectory.t_end


def footprint_at(agent: Agent, t: float) -> OrientedRect:
    """The agent's oriented rectangle at time t."""
    x, y, heading, _ = sample_pose(agent.trajectory, t)
    return OrientedRect(x, y, heading, agent.length, agent.width)


@dataclass(eq=False)
class Lane:
    """A lane given by centerline and boundary polylines (points in meters).

    `direction` is the travel convention: "forward" follows centerline point
    order, "reverse" opposes it.
    """

    id: str
    centerline: np.ndarray
    left_boundary: np.ndarray
    right_boundary: np.ndarray
    direction: str = "forward"
    successor_ids: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("centerline", "left_boundary", "right_boundary"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
                raise ValidationError(f"lane {self.id!r}: {name} needs >= 2 points")
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            setattr(self, name, arr)
        if self.direction not in ("forward", "reverse"):
            raise ValidationError(f"lane {self.id!r}: direction must be forward|reverse")
        self.successor_ids = tuple(self.successor_ids)

    @cached_property
    def centerline_ls(self) -> LineString:
        return LineString(self.centerline)

    @cached_property
    def polygon(self) -> Polygon:
        ring = np.vstack([self.left_boundary, self.right_boundary[::-1]])
        poly = Polygon(ring)
        if not poly.is_valid:
            poly = poly.buffer(0)
        return poly

    def travel_heading_at(self, x: float, y: float) -> float:
        """Heading of legal travel at the centerline point nearest (x, y)."""
        ls = self.centerline_ls
        s = ls.project(Point(x, y))
        eps = min(1e-3, ls.length / 2)
        p0 = ls.interpolate(max(0.0, s - eps))
        p1 = ls.interpolate(min(ls.length, s + eps))
        h = math.atan2(p1.y - p0.y, p1.x - p0.x)
        if self.direction == "reverse":
            h = wrap_angle(h + math.pi)
        return h


@dataclass(eq=False)
class ConflictZone:
    """Region where right-of-way is adjudicated (intersection box, merge area)."""

    id: str
    polygon: Polygon


@dataclass(eq=False)
class Map:
    id: str
    drivable_area: list[Polygon]
    lanes: list[Lane] = field(default_factory=list)
    crosswalks: list[Polygon] = field(default_factory=list)
    speed_limit_zones: list[tuple[Polygon, float]] = field(default_factory=list)

    @cached_property
    def drivable_union(self) -> shapely.Geometry:
        return shapely.union_all([shapely.make_valid(p) for p in self.drivable_area])

    @cached_property
    def lane_by_id(self) -> dict[str, Lane]:
        return {lane.id: lane for lane in self.lanes}

    @cached_property
    def _lane_tree(self) -> STRtree | None:
        if not self.lanes:
            return None
        return STRtree([lane.centerline_ls for lane in self.lanes])

    def nearest_lane(self, x: float, y: float) -> Lane | None:
        """Lane whose centerline is nearest the point; None when the map has no lanes."""
        tree = self._lane_tree
        if tree is None:
            return None
        idx = tree.nearest(Point(x, y))
        # STRtree.nearest ties are arbitrary; resolve deterministically by id.
        p = Point(x, y)
        best = self.lanes[int(idx)]
        best_d = best.centerline_ls.distance(p)
        for lane in self.lanes:
            d = lane.centerline_ls.distance(p)
            if d < best_d - 1e-12 or (abs(d - best_d) <= 1e-12 and lane.id < best.id):
                best, best_d = lane, d
        return best

    def speed_limit_at(self, x: float, y: float) -> float | None:
        """Most restrictive limit among zones containing the point; None if uncovered."""
        p = Point(x, y)
        limits = [lim for poly, lim in self.speed_limit_zones if poly.covers(p)]
        return min(limits) if limits else None

    def on_drivable(self, x: float, y: float) -> bool:
        return bool(self.drivable_union.covers(Point(x, y)))


@dataclass(eq=False)
class Scenario:
    id: str
    map_id: str
    duration: float
    agents: list[Agent] = field(default_factory=list)
    conflict_zones: list[ConflictZone] = field(default_factory=list)

    @cached_property
    def agent_by_id(self) -> dict[str, Agent]:
        return {a.id: a for a in self.agents}

    @cached_property
    def zone_by_id(self) -> dict[str, ConflictZone]:
        return {z.id: z for z in self.conflict_zones}


@dataclass(eq=False)
class Realization:
    id: str
    scenario_id: str
    ego: Agent

    def __post_init__(self):
        if self.ego.kind != "vehicle":
            raise ValidationError(f"realization {self.id!r}: ego must be a vehicle")


# -- validation -----------------------------------------------------------

def validate_map(m: Map) -> None:
    for poly in m.drivable_area + m.crosswalks + [p for p, _ in m.speed_limit_zones]:
        if not poly.is_valid or not poly.is_simple:
            raise ValidationError(f"map {m.id!r}: non-simple polygon")
    for _, limit in m.speed_limit_zones:
        if limit <= 0:
            raise ValidationError(f"map {m.id!r}: speed limits must be > 0")
    drivable = m.drivable_union.buffer(1e-6)
    for lane in m.lanes:
        if not drivable.covers(lane.centerline_ls):
            raise ValidationError(
                f"map {m.id!r}: lane {lane.id!r} centerline leaves the drivable area")
        _check_boundary_sides(m, lane)


def _check_boundary_sides(m: Map, lane: Lane) -> None:
    """Left/right boundaries must lie on opposite sides of the centerline."""
    a, b = lane.centerline[0], lane.centerline[-1]
    d = b - a
    if np.hypot(*d) < 1e-9:
        return
    left_mid = lane.left_boundary[len(lane.left_boundary) // 2]
    right_mid = lane.right_boundary[len(lane.right_boundary) // 2]
    side = lambda p: np.sign(d[0] * (p[1] - a[1]) - d[1] * (p[0] - a[0]))
    if side(left_mid) * side(right_mid) >= 0:
        raise ValidationError(
            f"map {m.id!r}: lane {lane.id!r} boundaries on the same side of centerline")


def validate_scenario(s: Scenario, m: Map) -> None:
    if s.duration <= 0:
        raise ValidationError(f"scenario {s.id!r}: duration must be > 0")
    for agent in s.agents:
        tr = agent.trajectory
        if tr.t_start < -1e-9 or tr.t_end > s.duration + 1e-9:
            raise ValidationError(
                f"scenario {s.id!r}: agent {agent.id!r} trajectory outside [0, duration]")
        for zid in agent.right_of_way_zone_ids:
            if zid not in s.zone_by_id:
                raise ValidationError(
                    f"scenario {s.id!r}: agent {agent.id!r} references unknown zone {zid!r}")


def validate_realization(r: Realization, s: Scenario) -> None:
    if not r.ego.trajectory.covers(0.0, s.duration):
        raise ValidationError(
            f"realization {r.id!r}: ego trajectory must cover [0, {s.duration:g}]")


# -- mirroring (used by symmetry tests and the scenario generator) --------

def _mirror_poly(p: Polygon) -> Polygon:
    return shapely.transform(p, lambda c: c * np.array([-1.0, 1.0]))


def mirror_trajectory(tr: Trajectory) -> Trajectory:
    s = tr.samples().copy()
    s[:, 1] = -s[:, 1]
    s[:, 3] = [wrap_angle(math.pi - h) for h in s[:, 3]]
    return Trajectory(s)


def mirror_agent(a: Agent) -> Agent:
    return Agent(a.id, a.kind, a.length, a.width, mirror_trajectory(a.trajectory),
                 a.right_of_way_zone_ids)


def mirror_lane(lane: Lane) -> Lane:
    flip = lambda arr: np.asarray(arr) * np.array([-1.0, 1.0])
    # Reflection swaps handedness: the old left boundary is on the right.
    return Lane(lane.id, flip(lane.centerline), flip(lane.right_boundary),
                flip(lane.left_boundary), lane.direction, lane.successor_ids)


def mirror_map(m: Map) -> Map:
    return Map(
        id=m.id,
        drivable_area=[_mirror_poly(p) for p in m.drivable_area],
        lanes=[mirror_lane(l) for l in m.lanes],
        crosswalks=[_mirror_poly(p) for p in m.crosswalks],
        speed_limit_zones=[(_mirror_poly(p), lim) for p, lim in m.speed_limit_zones],
    )


def mirror_scenario(s: Scenario) -> Scenario:
    return Scenario(
        id=s.id, map_id=s.map_id, duration=s.duration,
        agents=[mirror_agent(a) for a in s.agents],
        conflict_zones=[ConflictZone(z.id, _mirror_poly(z.polygon))
                        for z in s.conflict_zones],
    )


def mirror_realization(r: Realization) -> Realization:
    return Realization(r.id, r.scenario_id, mirror_agent(r.ego))


def time_grid(duration: float, dt: float) -> np.ndarray:
    """Evaluation instants 0, dt, ..., duration (endpoint included)."""
    n = int(round(duration / dt))
    return np.linspace(0.0, n * dt, n + 1)


def iter_pairs(items: Iterable) -> list[tuple]:
    xs = list(items)
    return [(xs[i], xs[j]) for i in range(len(xs)) for j in range(i + 1, len(xs))]
