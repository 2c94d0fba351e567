"""The 14 trajectory rule-violation metrics.

Each rule maps a realization to a nonnegative score. Instantaneous rules
define a per-instant magnitude g(t) >= 0 on a fixed time grid and aggregate
as ``sqrt(sum_t g(t)^2 * dt)`` (time-discretized L2), so a score is zero
exactly when the rule is never violated and grows with both the magnitude
and the duration of the violation. Event rules (collisions, yielding) sum
per-event severities instead.

Rule index:
  r1  collision with a pedestrian (VRU)          event, severity = relative speed
  r2  collision with a vehicle                   event, severity = relative speed
  r3  leaving the drivable area                  depth off road
  r4  clearance to pedestrians off the road      speed-dependent threshold deficit
  r5  clearance to pedestrians on the road       speed-dependent threshold deficit
  r6  braking to acknowledge a VRU ahead         required minus actual deceleration
  r7  yielding to right-of-way traffic           time-gap deficit per conflict zone
  r8  driving against the travel direction       depth into opposite-direction lanes
  r9  clearance to parked vehicles               lateral threshold deficit
  r10 clearance to vehicles on the right         lateral threshold deficit
  r11 clearance to vehicles on the left          lateral threshold deficit
  r12 clearance to the vehicle in front          frontal threshold deficit
  r13 speed limit                                overspeed
  r14 staying in the current lane                depth beyond own-lane boundaries
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
import shapely

from .errors import ParseError, ValidationError
from .geometry import OrientedRect, wrap_angle
from .world import Map, Realization, Scenario, time_grid

RULE_IDS = tuple(f"r{i}" for i in range(1, 15))
N_RULES = len(RULE_IDS)
RULE_INDEX = {rid: i for i, rid in enumerate(RULE_IDS)}

RULE_NAMES = {
    "r1": "Avoid collisions with VRUs",
    "r2": "Avoid collisions with vehicles",
    "r3": "Stay in the drivable area",
    "r4": "Maintain clearance with pedestrians off the road",
    "r5": "Maintain clearance with pedestrians on the road",
    "r6": "Signal intent to maintain clearance with VRU on direct path",
    "r7": "Yield to vehicles",
    "r8": "Drive on the correct side of the road",
    "r9": "Maintain clearance with parked car",
    "r10": "Maintain clearance with vehicles on the right",
    "r11": "Maintain clearance with vehicles on the left",
    "r12": "Maintain clearance with vehicles on the front",
    "r13": "Drive under the speed limit",
    "r14": "Stay in lane",
}


@dataclass(frozen=True)
class RuleParams:
    """Thresholds and gains for all rules. Every value is a first-class tunable."""

    dt: float = 0.1                   # s, evaluation step everywhere downstream
    ped_offroad_c0: float = 0.5       # m,   r4 clearance = c0 + c1 * ego speed
    ped_offroad_c1: float = 0.1       # s,   r4 speed gain
    ped_onroad_c0: float = 1.0        # m,   r5 clearance = c0 + c1 * ego speed
    ped_onroad_c1: float = 0.2        # s,   r5 speed gain
    veh_clearance_lateral: float = 0.3  # m, r9/r10/r11
    veh_clearance_front: float = 1.0    # m, r12
    corridor_horizon: float = 3.0       # s, r6 forward sweep
    required_decel: float = 1.0         # m/s^2, r6
    yield_gap: float = 2.0              # s, r7 tau
    collision_debounce: float = 0.3     # s, overlap gaps shorter than this merge
    sample_spacing: float = 0.1         # m, footprint perimeter sampling

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if not (val > 0 and math.isfinite(val)):
                raise ValidationError(f"rule parameter {f.name} must be > 0")


def load_rule_params(path: str | Path) -> RuleParams:
    """Read parameters from a ``key = value`` file; missing keys keep defaults."""
    known = {f.name for f in fields(RuleParams)}
    overrides = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", path=path, line=lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in known:
            raise ParseError(f"unknown rule parameter {key!r}", path=path, line=lineno)
        try:
            overrides[key] = float(val.strip())
        except ValueError:
            raise ParseError(f"bad number for {key!r}", path=path, line=lineno) from None
    return replace(RuleParams(), **overrides)


class ViolationVector:
    """The 14 nonnegative violation scores of one realization, indexed r1..r14."""

    __slots__ = ("v",)

    def __init__(self, values):
        arr = np.asarray(values, dtype=float)
        if arr.shape != (N_RULES,):
            raise ValidationError(f"violation vector must have {N_RULES} entries")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValidationError("violation scores must be finite and >= 0")
        arr = arr.copy()
        arr.setflags(write=False)
        self.v = arr

    def __getitem__(self, rule: str | int) -> float:
        if isinstance(rule, str):
            rule = RULE_INDEX[rule]
        return float(self.v[rule])

    def violated(self) -> tuple[str, ...]:
        return tuple(rid for rid in RULE_IDS if self[rid] > 0)

    def as_array(self) -> np.ndarray:
        return self.v

    def __eq__(self, other):
        return isinstance(other, ViolationVector) and np.array_equal(self.v, other.v)

    def __repr__(self):
        nz = {rid: round(self[rid], 4) for rid in RULE_IDS if self[rid] > 0}
        return f"ViolationVector({nz or 'clean'})"


def l2_aggregate(g: np.ndarray, dt: float) -> float:
    return float(np.sqrt(np.sum(np.square(g)) * dt))


# -- per-realization evaluation context ------------------------------------

class _AgentTrack:
    """An agent's grid-sampled footprints and kinematics."""

    def __init__(self, agent, grid: np.ndarray):
        self.agent = agent
        tr = agent.trajectory
        eps = 1e-9
        self.present = (grid >= tr.t_start - eps) & (grid <= tr.t_end + eps)
        t = np.clip(grid, tr.t_start, tr.t_end)
        self.x = np.interp(t, tr.t, tr.x)
        self.y = np.interp(t, tr.t, tr.y)
        self.heading = np.interp(t, tr.t, np.unwrap(tr.heading))
        self.speed = np.interp(t, tr.t, tr.speed)
        self.polys = _footprint_polygons(self.x, self.y, self.heading,
                                         agent.length, agent.width)

    def velocity(self) -> np.ndarray:
        return np.column_stack([self.speed * np.cos(self.heading),
                                self.speed * np.sin(self.heading)])


def _footprint_polygons(x, y, heading, length, width) -> np.ndarray:
    """Vectorized oriented-rectangle polygons for every grid instant."""
    c, s = np.cos(heading), np.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw], [hl, hw]])
    # (N, 5, 2): rotate local corners then translate
    px = local[:, 0][None, :] * c[:, None] - local[:, 1][None, :] * s[:, None]
    py = local[:, 0][None, :] * s[:, None] + local[:, 1][None, :] * c[:, None]
    coords = np.stack([px + x[:, None], py + y[:, None]], axis=-1)
    return shapely.polygons(coords)


class Timeline:
    """Grid-sampled state of one realization, shared by all rule evaluators."""

    def __init__(self, realization: Realization, scenario: Scenario,
                 map_: Map, params: RuleParams):
        self.params = params
        self.map = map_
        self.scenario = scenario
        self.grid = time_grid(scenario.duration, params.dt)
        self.ego = _AgentTrack(realization.ego, self.grid)
        self.agents = [_AgentTrack(a, self.grid) for a in scenario.agents]
        self.peds = [a for a in self.agents if a.agent.kind == "pedestrian"]
        self.vehicles = [a for a in self.agents if a.agent.kind == "vehicle"]
        self.parked = [a for a in self.agents if a.agent.kind == "parked_vehicle"]
        self._ego_rects: list[OrientedRect] | None = None

    @property
    def n(self) -> int:
        return len(self.grid)

    def ego_rect(self, i: int) -> OrientedRect:
        ego = self.ego
        return OrientedRect(float(ego.x[i]), float(ego.y[i]), float(ego.heading[i]),
                            ego.agent.length, ego.agent.width)

    def distances_to(self, track: _AgentTrack) -> np.ndarray:
        """Footprint-to-footprint distance per instant; inf where absent."""
        d = np.full(self.n, np.inf)
        mask = track.present
        if mask.any():
            d[mask] = shapely.distance(self.ego.polys[mask], track.polys[mask])
        return d

    def overlaps_with(self, track: _AgentTrack) -> np.ndarray:
        o = np.zeros(self.n, dtype=bool)
        mask = track.present
        if mask.any():
            o[mask] = shapely.intersects(self.ego.polys[mask], track.polys[mask])
        return o

    def ego_decel(self) -> np.ndarray:
        """Deceleration (positive when slowing) from the sampled speed profile."""
        return -np.gradient(self.ego.speed, self.grid)


# -- event rules ------------------------------------------------------------

def _collision_events(tl: Timeline, tracks) -> list[float]:
    """Severities (relative speed at first overlap) of debounced collision events.

    A gap in overlap strictly shorter than the debounce window is
    interpolation flicker, not a separate impact.
    """
    severities = []
    dt = tl.params.dt
    debounce = tl.params.collision_debounce
    ego_vel = tl.ego.velocity()
    for track in tracks:
        overlap = tl.overlaps_with(track)
        if not overlap.any():
            continue
        idx = np.flatnonzero(overlap)
        starts = [int(idx[0])]
        prev = int(idx[0])
        for i in idx[1:]:
            gap = (int(i) - prev - 1) * dt
            if gap > 0 and gap >= debounce - 1e-9:
                starts.append(int(i))
            prev = int(i)
        rel = ego_vel - track.velocity()
        for i0 in starts:
            severities.append(float(np.hypot(*rel[i0])))
    return severities


def _score_r1(tl: Timeline) -> float:
    return float(sum(_collision_events(tl, tl.peds)))


def _score_r2(tl: Timeline) -> float:
    return float(sum(_collision_events(tl, tl.vehicles + tl.parked)))


def _score_r7(tl: Timeline) -> float:
    tau = tl.params.yield_gap
    total = 0.0
    for zone in tl.scenario.conflict_zones:
        ego_in = shapely.intersects(tl.ego.polys, zone.polygon)
        if not ego_in.any():
            continue
        occupancy = tl.grid[ego_in]
        for track in tl.agents:
            if zone.id not in track.agent.right_of_way_zone_ids:
                continue
            agent_in = shapely.intersects(track.polys, zone.polygon) & track.present
            if not agent_in.any():
                continue
            arrival = float(tl.grid[np.flatnonzero(agent_in)[0]])
            before = occupancy[occupancy <= arrival + 1e-9]
            if len(before) == 0:
                continue
            gap = arrival - float(before[-1])
            total += max(0.0, tau - gap)
    return total


# -- instantaneous rules -----------------------------------------------------

def _score_r3(tl: Timeline) -> float:
    drivable = tl.map.drivable_union
    g = np.zeros(tl.n)
    covered = shapely.covered_by(tl.ego.polys, drivable)
    for i in np.flatnonzero(~covered):
        pts = shapely.points(tl.ego_rect(i).boundary_points(tl.params.sample_spacing))
        g[i] = float(np.max(shapely.distance(pts, drivable)))
    return l2_aggregate(g, tl.params.dt)


def _ped_deficits(tl: Timeline, on_road: bool, c0: float, c1: float) -> np.ndarray:
    drivable = tl.map.drivable_union
    dmin = c0 + c1 * tl.ego.speed
    g = np.zeros(tl.n)
    for track in tl.peds:
        centers = shapely.points(np.column_stack([track.x, track.y]))
        ped_on = shapely.covers(drivable, centers)
        relevant = track.present & (ped_on if on_road else ~ped_on)
        if not relevant.any():
            continue
        d = np.full(tl.n, np.inf)
        d[relevant] = shapely.distance(tl.ego.polys[relevant], track.polys[relevant])
        g = np.maximum(g, np.clip(dmin - d, 0.0, None))
    return g


def _score_r4(tl: Timeline) -> float:
    p = tl.params
    g = _ped_deficits(tl, on_road=False, c0=p.ped_offroad_c0, c1=p.ped_offroad_c1)
    return l2_aggregate(g, p.dt)


def _score_r5(tl: Timeline) -> float:
    p = tl.params
    g = _ped_deficits(tl, on_road=True, c0=p.ped_onroad_c0, c1=p.ped_onroad_c1)
    return l2_aggregate(g, p.dt)


def _score_r6(tl: Timeline) -> float:
    """Failing to shed speed while closing on a VRU in the forward corridor."""
    p = tl.params
    ego = tl.ego
    # corridor = ego footprint swept along current heading for the horizon
    sweep = ego.speed * p.corridor_horizon
    lengths = ego.agent.length + sweep
    c, s = np.cos(ego.heading), np.sin(ego.heading)
    cx = ego.x + c * sweep / 2.0
    cy = ego.y + s * sweep / 2.0
    hw = ego.agent.width / 2.0
    hl = lengths / 2.0
    local_x = np.stack([hl, -hl, -hl, hl, hl], axis=1)
    local_y = np.stack([np.full_like(hl, hw), np.full_like(hl, hw),
                        np.full_like(hl, -hw), np.full_like(hl, -hw),
                        np.full_like(hl, hw)], axis=1)
    px = local_x * c[:, None] - local_y * s[:, None] + cx[:, None]
    py = local_x * s[:, None] + local_y * c[:, None] + cy[:, None]
    corridor = shapely.polygons(np.stack([px, py], axis=-1))

    in_path = np.zeros(tl.n, dtype=bool)
    ego_vel = ego.velocity()
    for track in tl.peds:
        hits = track.present & shapely.intersects(corridor, track.polys)
        if not hits.any():
            continue
        rel_pos = np.column_stack([track.x - ego.x, track.y - ego.y])
        rel_vel = track.velocity() - ego_vel
        closing = np.sum(rel_pos * rel_vel, axis=1) < 0.0
        in_path |= hits & closing
    deficit = np.clip(p.required_decel - tl.ego_decel(), 0.0, None)
    return l2_aggregate(np.where(in_path, deficit, 0.0), p.dt)


def _score_r8(tl: Timeline) -> float:
    """Depth of the ego footprint inside lanes whose travel direction opposes ego's."""
    g = np.zeros(tl.n)
    spacing = tl.params.sample_spacing
    for lane in tl.map.lanes:
        poly = lane.polygon
        hits = shapely.intersects(tl.ego.polys, poly)
        for i in np.flatnonzero(hits):
            lane_h = lane.travel_heading_at(float(tl.ego.x[i]), float(tl.ego.y[i]))
            # "against the direction of traffic" = anti-aligned (> 135 deg),
            # so crossing lanes never count even when ego tilts mid-maneuver
            if abs(wrap_angle(lane_h - float(tl.ego.heading[i]))) <= 0.75 * math.pi + 1e-9:
                continue
            pts_arr = tl.ego_rect(i).boundary_points(spacing)
            pts = shapely.points(pts_arr)
            inside = shapely.covers(poly, pts)
            if inside.any():
                depth = float(np.max(shapely.distance(pts[inside], poly.boundary)))
                g[i] = max(g[i], depth)
    return l2_aggregate(g, tl.params.dt)


_SECTOR_FRONT, _SECTOR_RIGHT, _SECTOR_LEFT, _SECTOR_REAR = range(4)


def _bearing_sectors(tl: Timeline, track: _AgentTrack) -> np.ndarray:
    """Sector of the other vehicle's nearest point in the ego frame, per instant.

    The nearest point is taken from the ego center (unique for a convex
    footprint, unlike polygon-to-polygon shortest lines whose foot is
    ambiguous along parallel edges). front: |b| < 45 deg; right: b in
    [-135, -45); left: b in (45, 135]; rear ignored.
    """
    sectors = np.full(tl.n, _SECTOR_REAR)
    mask = track.present
    if not mask.any():
        return sectors
    centers = shapely.points(np.column_stack([tl.ego.x[mask], tl.ego.y[mask]]))
    lines = shapely.shortest_line(centers, track.polys[mask])
    coords = shapely.get_coordinates(lines).reshape(-1, 2, 2)
    near = coords[:, 1, :]
    b = np.arctan2(near[:, 1] - tl.ego.y[mask], near[:, 0] - tl.ego.x[mask]) \
        - tl.ego.heading[mask]
    b = np.arctan2(np.sin(b), np.cos(b))
    q = np.pi / 4
    sec = np.full(b.shape, _SECTOR_REAR)
    sec[np.abs(b) < q] = _SECTOR_FRONT
    sec[(b >= -3 * q) & (b < -q)] = _SECTOR_RIGHT
    sec[(b > q) & (b <= 3 * q)] = _SECTOR_LEFT
    sectors[mask] = sec
    return sectors


def _vehicle_clearance(tl: Timeline) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-instant deficits for (r9, r10, r11, r12)."""
    p = tl.params
    g9 = np.zeros(tl.n)
    g10 = np.zeros(tl.n)
    g11 = np.zeros(tl.n)
    g12 = np.zeros(tl.n)
    for track in tl.parked:
        d = tl.distances_to(track)
        g9 = np.maximum(g9, np.clip(p.veh_clearance_lateral - d, 0.0, None))
    for track in tl.vehicles:
        d = tl.distances_to(track)
        sec = _bearing_sectors(tl, track)
        g10 = np.maximum(g10, np.where(sec == _SECTOR_RIGHT,
                                       np.clip(p.veh_clearance_lateral - d, 0.0, None), 0.0))
        g11 = np.maximum(g11, np.where(sec == _SECTOR_LEFT,
                                       np.clip(p.veh_clearance_lateral - d, 0.0, None), 0.0))
        g12 = np.maximum(g12, np.where(sec == _SECTOR_FRONT,
                                       np.clip(p.veh_clearance_front - d, 0.0, None), 0.0))
    return g9, g10, g11, g12


def _score_r13(tl: Timeline) -> float:
    g = np.zeros(tl.n)
    for i in range(tl.n):
        limit = tl.map.speed_limit_at(float(tl.ego.x[i]), float(tl.ego.y[i]))
        if limit is not None:
            g[i] = max(0.0, float(tl.ego.speed[i]) - limit)
    return l2_aggregate(g, tl.params.dt)


def _score_r14(tl: Timeline) -> float:
    """Depth of the ego footprint beyond its current lane.

    The current lane is the one with the nearest centerline among lanes
    running along or against ego's heading; near-perpendicular crossing
    lanes (as inside an intersection) never capture the ego.
    """
    if not tl.map.lanes:
        return 0.0
    centers = shapely.points(np.column_stack([tl.ego.x, tl.ego.y]))
    centerlines = np.array([lane.centerline_ls for lane in tl.map.lanes], dtype=object)
    dmat = shapely.distance(centers[:, None], centerlines[None, :])
    q = math.pi / 4
    for j, lane in enumerate(tl.map.lanes):
        for i in np.flatnonzero(dmat[:, j] < 20.0):  # alignment matters only nearby
            diff = abs(wrap_angle(
                lane.travel_heading_at(float(tl.ego.x[i]), float(tl.ego.y[i]))
                - float(tl.ego.heading[i])))
            if q < diff < 3 * q:
                dmat[i, j] = np.inf
    current = np.argmin(dmat, axis=1)
    g = np.zeros(tl.n)
    spacing = tl.params.sample_spacing
    for lane_idx in np.unique(current):
        lane = tl.map.lanes[int(lane_idx)]
        poly = lane.polygon
        steps = np.flatnonzero(current == lane_idx)
        covered = shapely.covered_by(tl.ego.polys[steps], poly)
        for i in steps[~covered]:
            pts = shapely.points(tl.ego_rect(int(i)).boundary_points(spacing))
            g[i] = float(np.max(shapely.distance(pts, poly)))
    return l2_aggregate(g, tl.params.dt)


# -- public surface ----------------------------------------------------------

_SCORERS = {
    "r1": _score_r1, "r2": _score_r2, "r3": _score_r3, "r4": _score_r4,
    "r5": _score_r5, "r6": _score_r6, "r7": _score_r7, "r8": _score_r8,
    "r13": _score_r13, "r14": _score_r14,
}


def violation_vector(realization: Realization, scenario: Scenario, map_: Map,
                     params: RuleParams | None = None) -> ViolationVector:
    """All 14 scores for one realization. Deterministic given inputs and params."""
    params = params or RuleParams()
    tl = Timeline(realization, scenario, map_, params)
    v = np.zeros(N_RULES)
    for rid, fn in _SCORERS.items():
        v[RULE_INDEX[rid]] = fn(tl)
    g9, g10, g11, g12 = _vehicle_clearance(tl)
    for rid, g in zip(("r9", "r10", "r11", "r12"), (g9, g10, g11, g12)):
        v[RULE_INDEX[rid]] = l2_aggregate(g, params.dt)
    return ViolationVector(v)


def _single(rule_id: str):
    def score(realization, scenario, map_, params=None):
        params = params or RuleParams()
        tl = Timeline(realization, scenario, map_, params)
        if rule_id in _SCORERS:
            return _SCORERS[rule_id](tl)
        gs = dict(zip(("r9", "r10", "r11", "r12"), _vehicle_clearance(tl)))
        return l2_aggregate(gs[rule_id], params.dt)
    score.__name__ = f"score_{rule_id}"
    return score


score_r1_vru_collision = _single("r1")
score_r2_vehicle_collision = _single("r2")
score_r3_drivable_area = _single("r3")
score_r4_ped_clearance_offroad = _single("r4")
score_r5_ped_clearance_onroad = _single("r5")
score_r6_signal_intent = _single("r6")
score_r7_yield = _single("r7")
score_r8_correct_side = _single("r8")
score_r9_parked_car = _single("r9")
score_r10_clearance_right = _single("r10")
score_r11_clearance_left = _single("r11")
score_r12_clearance_front = _single("r12")
score_r13_speed_limit = _single("r13")
score_r14_stay_in_lane = _single("r14")


def vectors_to_csv(vectors: dict[str, ViolationVector]) -> str:
    """CSV export: realization_id, v1..v14 (row order = sorted ids)."""
    out = io.StringIO()
    out.write("realization_id," + ",".join(f"v{i}" for i in range(1, 15)) + "\n")
    for rid in sorted(vectors):
        row = ",".join(repr(float(x)) for x in vectors[rid].as_array())
        out.write(f"{rid},{row}\n")
    return out.getvalue()


def vectors_from_csv(text: str) -> dict[str, ViolationVector]:
    lines = text.strip().splitlines()
    header = "realization_id," + ",".join(f"v{i}" for i in range(1, 15))
    if not lines or lines[0] != header:
        raise ParseError("bad violation CSV header")
    vectors = {}
    for line in lines[1:]:
        parts = line.split(",")
        vectors[parts[0]] = ViolationVector([float(x) for x in parts[1:]])
    return vectors
