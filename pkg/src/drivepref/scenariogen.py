"""Deterministic synthetic maps, scenarios, planted violations, and crowds.

Two fixed maps ship with the generator: "U", an urban grid with a four-way
intersection, and "S", a small suburban loop. Neither has traffic lights or
stop signs. Scenario templates place props (pedestrians, parked cars, moving
vehicles, conflict zones) and the ego trajectory decides which rules it
engages; severities are calibrated by bisection against the violations
module, which stays the single source of truth for scores.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from shapely.geometry import Polygon

from .dataset_io import Dataset, atomic_write_text, save_dataset
from .errors import GenerationError, ValidationError
from .preferences import Annotation
from .rulebook import (FIRST_PREFERRED, INCOMPARABLE, SECOND_PREFERRED,
                       Rulebook, compare)
from .rules import RULE_IDS, RuleParams, ViolationVector, violation_vector
from .world import (Agent, ConflictZone, Lane, Map, Realization, Scenario,
                    Trajectory, mirror_map, mirror_realization,
                    mirror_scenario, time_grid)

EGO_LENGTH, EGO_WIDTH = 4.5, 2.0
CAR_LENGTH, CAR_WIDTH = 4.5, 2.0
PED_SIZE = 0.5
LANE_W = 3.5
BASE_SPEED = 8.0


# -- maps ---------------------------------------------------------------------

def _rect(x0, y0, x1, y1) -> Polygon:
    return Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def _straight_lane(lid, p0, p1, direction="forward", successors=()) -> Lane:
    p0, p1 = np.array(p0, float), np.array(p1, float)
    d = p1 - p0
    n = np.array([-d[1], d[0]]) / np.hypot(*d)  # left normal of point order
    return Lane(lid, np.array([p0, p1]), np.array([p0, p1]) + n * LANE_W / 2,
                np.array([p0, p1]) - n * LANE_W / 2, direction, tuple(successors))


def build_map_u() -> Map:
    """Urban map: an east-west arterial crossing a north-south street."""
    ew = _rect(-120, -7, 120, 7)
    ns = _rect(-3.5, -80, 3.5, 80)
    lanes = [
        _straight_lane("e1", (-120, -5.25), (120, -5.25)),
        _straight_lane("e2", (-120, -1.75), (120, -1.75)),
        _straight_lane("w1", (120, 1.75), (-120, 1.75)),
        _straight_lane("w2", (120, 5.25), (-120, 5.25)),
        _straight_lane("n1", (1.75, -80), (1.75, 80)),
        _straight_lane("s1", (-1.75, 80), (-1.75, -80)),
    ]
    crosswalks = [_rect(-6.5, -7, -3.5, 7), _rect(3.5, -7, 6.5, 7),
                  _rect(-3.5, -10, 3.5, -7), _rect(-3.5, 7, 3.5, 10)]
    zones = [(_rect(-120, -7, 120, 7), 12.0), (_rect(-3.5, -80, 3.5, 80), 10.0)]
    return Map("U", [ew, ns], lanes, crosswalks, zones)


def build_map_s() -> Map:
    """Suburban map: a square two-lane loop."""
    strips = [_rect(-30, 23, 30, 30), _rect(-30, -30, 30, -23),
              _rect(23, -30, 30, 30), _rect(-30, -30, -23, 30)]
    cw = [
        _straight_lane("cw_n", (-26.5, 28.25), (26.5, 28.25), successors=("cw_e",)),
        _straight_lane("cw_e", (28.25, 26.5), (28.25, -26.5), successors=("cw_s",)),
        _straight_lane("cw_s", (26.5, -28.25), (-26.5, -28.25), successors=("cw_w",)),
        _straight_lane("cw_w", (-28.25, -26.5), (-28.25, 26.5), successors=("cw_n",)),
    ]
    ccw = [
        _straight_lane("ccw_n", (26.5, 24.75), (-26.5, 24.75), successors=("ccw_w",)),
        _straight_lane("ccw_w", (-24.75, 26.5), (-24.75, -26.5), successors=("ccw_s",)),
        _straight_lane("ccw_s", (-26.5, -24.75), (26.5, -24.75), successors=("ccw_e",)),
        _straight_lane("ccw_e", (24.75, -26.5), (24.75, 26.5), successors=("ccw_n",)),
    ]
    crosswalks = [_rect(-1.5, 23, 1.5, 30)]
    zones = [(_rect(-30, -30, 30, 30), 10.0)]
    return Map("S", strips, cw + ccw, crosswalks, zones)


def build_maps() -> dict[str, Map]:
    return {"U": build_map_u(), "S": build_map_s()}


# -- trajectory construction ---------------------------------------------------

def make_trajectory(t: np.ndarray, x: np.ndarray, y: np.ndarray) -> Trajectory:
    """Heading and speed derived from the sampled path."""
    if len(t) == 1:
        return Trajectory(np.array([[t[0], x[0], y[0], 0.0, 0.0]]))
    vx = np.gradient(x, t)
    vy = np.gradient(y, t)
    speed = np.hypot(vx, vy)
    heading = np.arctan2(vy, vx)
    still = speed < 1e-9
    if still.any():
        # hold the last moving heading through stops
        idx = np.flatnonzero(~still)
        if len(idx) == 0:
            heading[:] = 0.0
        else:
            heading[still] = np.interp(np.flatnonzero(still), idx, heading[idx])
    return Trajectory(np.column_stack([t, x, y, heading, speed]))


def stationary(x: float, y: float, duration: float, heading: float = 0.0,
               t0: float = 0.0) -> Trajectory:
    return Trajectory(np.array([[t0, x, y, heading, 0.0],
                                [t0 + duration, x, y, heading, 0.0]]))


def const_velocity(x0, y0, heading, speed, t0, t1) -> Trajectory:
    dt = t1 - t0
    return Trajectory(np.array([
        [t0, x0, y0, heading, speed],
        [t1, x0 + speed * dt * math.cos(heading),
         y0 + speed * dt * math.sin(heading), heading, speed]]))


def bump(u: np.ndarray, center: float, half_width: float) -> np.ndarray:
    """Raised-cosine bump in [0, 1], zero outside |u - center| >= half_width."""
    z = np.clip((u - center) / half_width, -1.0, 1.0)
    out = 0.5 * (1.0 + np.cos(np.pi * z))
    out[np.abs(u - center) >= half_width] = 0.0
    return out


def plateau(u: np.ndarray, start: float, end: float, ramp: float) -> np.ndarray:
    """Ramp up over `ramp`, hold 1, ramp down; zero outside [start, end]."""
    up = np.clip((u - start) / ramp, 0.0, 1.0)
    down = np.clip((end - u) / ramp, 0.0, 1.0)
    return np.minimum(up, down) * ((u >= start) & (u <= end))


@dataclass
class EgoPlanU:
    """Straight eastbound drive on map U with station-triggered maneuvers."""

    lane_y: float
    x_start: float
    duration: float
    base_speed: float = BASE_SPEED
    start_offset: float = 0.0
    lat_bumps: list[tuple[float, float, float]] = field(default_factory=list)
    # (x_station, half_width, offset); positive offset moves +y (left)
    lat_plateaus: list[tuple[float, float, float, float]] = field(default_factory=list)
    # (x_start, x_end, ramp, offset)
    speed_bumps: list[tuple[float, float, float]] = field(default_factory=list)
    # (t_center, half_width, extra speed)
    x_max: float | None = None  # hard stop keeping ego on the mapped road

    def build(self, dt: float = 0.1) -> Trajectory:
        t = time_grid(self.duration, dt)
        v = np.full_like(t, self.base_speed)
        for tc, hw, dv in self.speed_bumps:
            v = v + dv * bump(t, tc, hw)
        x = self.x_start + self.start_offset + np.concatenate(
            [[0.0], np.cumsum((v[1:] + v[:-1]) / 2.0 * np.diff(t))])
        if self.x_max is not None:
            x = np.minimum(x, self.x_max)
        y = np.full_like(t, self.lane_y)
        for xc, hw, dy in self.lat_bumps:
            y = y + dy * bump(x, xc, hw)
        for xs, xe, ramp, dy in self.lat_plateaus:
            y = y + dy * plateau(x, xs, xe, ramp)
        return make_trajectory(t, x, y)


def _ego(realization_id: str, scenario_id: str, traj: Trajectory) -> Realization:
    return Realization(realization_id, scenario_id,
                       Agent("ego", "vehicle", EGO_LENGTH, EGO_WIDTH, traj))


def _lead_speed_profile(t: np.ndarray) -> np.ndarray:
    """Lead-vehicle choreography: drop 4 m of headway, give it back later."""
    v = np.full_like(t, BASE_SPEED)
    v -= 2.0 * plateau(t, 5.0, 7.4, 0.4)     # trapezoid area 2.0 -> loses 4 m
    v += 2.0 * plateau(t, 11.0, 13.4, 0.4)   # regains 4 m
    return v


# -- planted single-rule violations ---------------------------------------------

@dataclass(frozen=True)
class PlantSpec:
    rule: str
    severity: float
    template: str = "default"
    seed: int = 0

    def __post_init__(self):
        if self.rule not in RULE_IDS:
            raise ValidationError(f"unknown rule {self.rule!r}")
        if not self.severity > 0:
            raise ValidationError("severity must be > 0")


@dataclass
class PlantedViolation:
    spec: PlantSpec
    map: Map
    scenario: Scenario
    realization: Realization
    vector: ViolationVector
    knob: float
    allowed_cofires: frozenset[str]


@dataclass(frozen=True)
class _Template:
    rule: str
    knob_lo: float
    knob_hi: float
    severity_lo: float
    severity_hi: float
    cofires: frozenset[str]
    build: Callable[[float], tuple[Scenario, Realization]]


def _straight_scenario(sid: str, duration: float, agents: list[Agent],
                       zones: list[ConflictZone] = ()) -> Scenario:
    return Scenario(sid, "U", duration, agents, list(zones))


def _make_templates() -> dict[str, _Template]:
    T: dict[str, _Template] = {}

    def plan(duration=12.0, **kw) -> EgoPlanU:
        return EgoPlanU(lane_y=-5.25, x_start=-106, duration=duration, **kw)

    def reg(rule, lo, hi, slo, shi, cof, build):
        T[rule] = _Template(rule, lo, hi, slo, shi, frozenset(cof), build)

    def crash_trajectory(v: float, x_obstacle: float, obstacle_len: float,
                         dur: float) -> Trajectory:
        """Constant speed v until overlap, halting 2.5 m past first contact.

        The rest depth keeps the first-overlap sample a full grid step clear
        of the clamp, so the sampled impact speed equals v exactly.
        """
        t = time_grid(dur, 0.1)
        x_contact = x_obstacle - (EGO_LENGTH + obstacle_len) / 2.0
        x_stop = x_contact + 2.5
        x = np.minimum(x_contact - 4.0 - 5.0 * v + v * t, x_stop)
        return make_trajectory(t, x, np.full_like(t, -5.25))

    # r1: hit a standing pedestrian and stop; severity = impact speed.
    def b_r1(v):
        sid = "plant_r1"
        dur = 12.0
        ped = Agent("ped", "pedestrian", PED_SIZE, PED_SIZE,
                    stationary(-50.0, -5.25, dur))
        traj = crash_trajectory(v, -50.0, PED_SIZE, dur)
        return _straight_scenario(sid, dur, [ped]), _ego("plant_r1_ego", sid, traj)
    reg("r1", 1.0, 11.0, 1.0, 10.8, {"r5", "r6"}, b_r1)

    # r2: rear-end a stopped vehicle; severity = impact speed.
    def b_r2(v):
        sid = "plant_r2"
        dur = 12.0
        car = Agent("car", "vehicle", CAR_LENGTH, CAR_WIDTH,
                    stationary(-50.0, -5.25, dur))
        traj = crash_trajectory(v, -50.0, CAR_LENGTH, dur)
        return _straight_scenario(sid, dur, [car]), _ego("plant_r2_ego", sid, traj)
    reg("r2", 1.0, 11.0, 1.0, 10.8, {"r12"}, b_r2)

    # r3: excursion past the road edge; off-road implies out-of-lane (r14).
    def b_r3(delta):
        sid = "plant_r3"
        p = plan(lat_plateaus=[(-80, -48, 8.0, -delta)])
        return _straight_scenario(sid, 12.0, []), _ego("plant_r3_ego", sid, p.build())
    reg("r3", 0.8, 2.2, 0.02, 3.2, {"r14"}, b_r3)

    # r4: pass a pedestrian standing just off the road edge.
    def b_r4(closeness):
        sid = "plant_r4"
        ped_y = -7.25 - (1.05 - closeness)  # closer knob -> nearer the road
        ped = Agent("ped", "pedestrian", PED_SIZE, PED_SIZE,
                    stationary(-60.0, ped_y, 12.0))
        p = plan()
        return _straight_scenario(sid, 12.0, [ped]), _ego("plant_r4_ego", sid, p.build())
    reg("r4", 0.05, 1.04, 0.004, 0.5, set(), b_r4)

    # r5: pass a pedestrian standing on the road in the neighbor lane.
    def b_r5(closeness):
        sid = "plant_r5"
        ped_y = -1.5 - closeness
        ped = Agent("ped", "pedestrian", PED_SIZE, PED_SIZE,
                    stationary(-60.0, ped_y, 12.0))
        p = plan()
        return _straight_scenario(sid, 12.0, [ped]), _ego("plant_r5_ego", sid, p.build())
    reg("r5", 0.05, 1.69, 0.1, 1.6, set(), b_r5)

    # r6: coast toward a pedestrian dead ahead (no braking = full deficit for
    # `dwell` seconds inside the corridor), then brake hard and stop short of
    # the clearance threshold so r5 never fires.
    def b_r6(dwell):
        sid = "plant_r6"
        dur = 14.0
        brake = 4.0
        x_ped = 0.0
        halves = (EGO_LENGTH + PED_SIZE) / 2.0
        stop_center_gap = 4.0 + halves                       # rect gap 4 m at stop
        brake_dist = BASE_SPEED**2 / (2 * brake)
        # ego starts inside the corridor, coasts `dwell` seconds, then brakes
        x0 = x_ped - stop_center_gap - brake_dist - BASE_SPEED * dwell
        t = time_grid(dur, 0.1)
        v = np.where(t < dwell, BASE_SPEED,
                     np.clip(BASE_SPEED - brake * (t - dwell), 0.0, None))
        x = x0 + np.concatenate([[0.0], np.cumsum((v[1:] + v[:-1]) / 2.0 * np.diff(t))])
        traj = make_trajectory(t, x, np.full_like(t, -5.25))
        ped = Agent("ped", "pedestrian", PED_SIZE, PED_SIZE,
                    stationary(x_ped, -5.25, dur))
        return _straight_scenario(sid, dur, [ped]), _ego("plant_r6_ego", sid, traj)
    reg("r6", 0.15, 1.45, 0.35, 1.15, set(), b_r6)

    # r7: cross the intersection shortly before a right-of-way vehicle arrives.
    def b_r7(gap_deficit):
        sid = "plant_r7"
        dur = 10.0
        gap = 2.0 - gap_deficit
        zone = ConflictZone("cz", _rect(-3.5, -7, 3.5, 7))
        t_exit = (5.75 + 36.0) / BASE_SPEED  # ego starts at x=-36
        y_a0 = -9.25 - BASE_SPEED * (t_exit + gap)
        agent = Agent("xing", "vehicle", CAR_LENGTH, CAR_WIDTH,
                      const_velocity(1.75, y_a0, math.pi / 2, BASE_SPEED, 0.0, dur),
                      right_of_way_zone_ids=frozenset({"cz"}))
        t = time_grid(dur, 0.1)
        x = -36.0 + BASE_SPEED * t
        traj = make_trajectory(t, x, np.full_like(t, -5.25))
        scen = Scenario(sid, "U", dur, [agent], [zone])
        return scen, _ego("plant_r7_ego", sid, traj)
    reg("r7", 0.15, 1.95, 0.1, 1.95, set(), b_r7)

    # r8: drive the whole realization inside an opposite-direction lane.
    def b_r8(duration):
        sid = "plant_r8"
        t = time_grid(duration, 0.1)
        x = -100.0 + BASE_SPEED * t
        traj = make_trajectory(t, x, np.full_like(t, 1.75))  # w1, heading east
        return _straight_scenario(sid, duration, []), _ego("plant_r8_ego", sid, traj)
    reg("r8", 1.0, 22.0, 1.7, 8.3, set(), b_r8)

    # r9: squeeze past a parked car on the road edge.
    def b_r9(closeness):
        sid = "plant_r9"
        parked = Agent("parked", "parked_vehicle", CAR_LENGTH, CAR_WIDTH,
                       stationary(-60.0, -7.65, 12.0))
        p = plan(lat_bumps=[(-60.0, 14.0, -(closeness))])
        return _straight_scenario(sid, 12.0, [parked]), _ego("plant_r9_ego", sid,
                                                             p.build())
    reg("r9", 0.12, 0.37, 0.002, 0.25, set(), b_r9)

    # r10/r11: run alongside a vehicle with a small lateral gap (ego in e2).
    def side_template(side: str):
        def b(closeness):
            sid = f"plant_{side}"
            dur = 12.0
            if side == "r10":
                agent_y = -4.3 + closeness   # approaches ego's right flank
            else:
                agent_y = 0.8 - closeness    # approaches ego's left flank
            car = Agent("side", "vehicle", CAR_LENGTH, CAR_WIDTH,
                        const_velocity(-106.0 + BASE_SPEED * 2.0, agent_y, 0.0,
                                       BASE_SPEED, 2.0, 9.0))
            t = time_grid(dur, 0.1)
            x = -106.0 + BASE_SPEED * t
            traj = make_trajectory(t, x, np.full_like(t, -1.75))
            return _straight_scenario(sid, dur, [car]), _ego(f"plant_{side}_ego",
                                                             sid, traj)
        return b
    reg("r10", 0.26, 0.53, 0.01, 0.65, set(), side_template("r10"))
    reg("r11", 0.26, 0.53, 0.01, 0.65, set(), side_template("r11"))

    # r12: follow a lead vehicle that brakes and reopens the gap later.
    def b_r12(closeness):
        sid = "plant_r12"
        dur = 16.0
        t = time_grid(dur, 0.1)
        v_lead = _lead_speed_profile(t)
        lead_front_gap = 6.0 + EGO_LENGTH / 2 + CAR_LENGTH / 2
        x_lead = -106.0 + lead_front_gap + np.concatenate(
            [[0.0], np.cumsum((v_lead[1:] + v_lead[:-1]) / 2.0 * np.diff(t))])
        lead = Agent("lead", "vehicle", CAR_LENGTH, CAR_WIDTH,
                     make_trajectory(t, x_lead, np.full_like(t, -5.25)))
        x = -106.0 + (closeness - 4.0) + BASE_SPEED * t
        traj = make_trajectory(t, x, np.full_like(t, -5.25))
        return _straight_scenario(sid, dur, [lead]), _ego("plant_r12_ego", sid, traj)
    reg("r12", 5.1, 5.9, 0.15, 1.75, set(), b_r12)

    # r13: speed over the limit for a fixed window.
    def b_r13(v_over):
        sid = "plant_r13"
        dur = 12.0
        t = time_grid(dur, 0.1)
        v = np.full_like(t, BASE_SPEED) + (12.0 - BASE_SPEED + v_over) * \
            plateau(t, 4.0, 8.0, 0.5)
        x = -106.0 + np.concatenate([[0.0],
                                     np.cumsum((v[1:] + v[:-1]) / 2.0 * np.diff(t))])
        traj = make_trajectory(t, x, np.full_like(t, -5.25))
        return _straight_scenario(sid, dur, []), _ego("plant_r13_ego", sid, traj)
    reg("r13", 0.1, 15.0, 0.15, 27.0, set(), b_r13)

    # r14: straddle the boundary to the neighbor same-direction lane.
    def b_r14(delta):
        sid = "plant_r14"
        p = plan(lat_plateaus=[(-85, -45, 8.0, delta)])
        return _straight_scenario(sid, 12.0, []), _ego("plant_r14_ego", sid, p.build())
    reg("r14", 0.8, 1.6, 0.02, 1.7, set(), b_r14)

    return T


PLANT_TEMPLATES = _make_templates()


def plant_violation(spec: PlantSpec, params: RuleParams | None = None,
                    maps: dict[str, Map] | None = None) -> PlantedViolation:
    """Realization whose vector is nonzero exactly at the planted rule.

    Entangled co-fires the rules force (a planted r1 necessarily grazes r5/r6,
    r3 implies leaving the lane) are declared per template. The severity knob
    is bisected until the measured score lands within 5% of the target; specs
    outside the template's feasible severity range raise GenerationError.
    """
    params = params or RuleParams()
    maps = maps or build_maps()
    tpl = PLANT_TEMPLATES[spec.rule]
    if not (tpl.severity_lo <= spec.severity <= tpl.severity_hi):
        raise GenerationError(
            f"{spec.rule}: target severity {spec.severity:g} outside feasible "
            f"range [{tpl.severity_lo:g}, {tpl.severity_hi:g}]")

    def measure(knob: float):
        scen, real = tpl.build(knob)
        vec = violation_vector(real, scen, maps[scen.map_id], params)
        return vec[spec.rule], (scen, real, vec)

    lo, hi = tpl.knob_lo, tpl.knob_hi
    f_lo, out_lo = measure(lo)
    f_hi, out_hi = measure(hi)
    if not (f_lo <= spec.severity <= f_hi):
        raise GenerationError(
            f"{spec.rule}: severity {spec.severity:g} not bracketed by template "
            f"(measured range [{f_lo:.3g}, {f_hi:.3g}])")
    knob, best, best_val = lo, out_lo, f_lo
    if abs(f_hi - spec.severity) < abs(f_lo - spec.severity):
        knob, best, best_val = hi, out_hi, f_hi
    a, b = lo, hi
    for _ in range(40):
        mid = (a + b) / 2.0
        val, out = measure(mid)
        if abs(val - spec.severity) < abs(best_val - spec.severity):
            knob, best, best_val = mid, out, val
        if abs(val - spec.severity) <= 0.05 * spec.severity:
            break
        if val < spec.severity:
            a = mid
        else:
            b = mid
    scen, real, vec = best
    return PlantedViolation(spec, maps[scen.map_id], scen, real, vec, knob,
                            tpl.cofires)


def mirror_planted(p: PlantedViolation) -> PlantedViolation:
    """Reflect a planted violation about the vertical axis (r10 <-> r11 check)."""
    m = mirror_map(p.map)
    s = mirror_scenario(p.scenario)
    r = mirror_realization(p.realization)
    vec = violation_vector(r, s, m)
    return PlantedViolation(p.spec, m, s, r, vec, p.knob, p.allowed_cofires)


# -- composite dataset generation ------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    n_scenarios: int = 40
    realizations_per_scenario: int = 4
    seed: int = 0
    clean_prob: float = 0.04
    collision_share: float = 0.15
    intersection_share: float = 0.15
    loop_share: float = 0.2


# engagement knob ranges (low, high) for the ego-side knob, per family
_CLEARANCE_KNOBS = {
    "r3": (0.9, 1.9),
    "r4": (3.35, 4.2),
    "r5": (0.2, 0.74),
    "r9": (3.62, 3.86),
    "r13": (0.5, 6.0),
    "r14": (0.85, 1.55),
}
_TRAFFIC_KNOBS = {
    "r10": (0.27, 0.52),
    "r11": (0.27, 0.52),
    "r12": (5.1, 5.9),
    "r14": (0.85, 1.55),
}


def _straight_scenario_props(sid: str, dur: float, layout: str) -> list[Agent]:
    """Fixed prop set for the straight-road families (ego drives e2).

    "clearance" scenarios carry static props only, so speed engagements stay
    safe; "traffic" scenarios carry the moving vehicles.
    """
    if layout == "clearance":
        return [
            Agent("ped_off", "pedestrian", PED_SIZE, PED_SIZE,
                  stationary(-90.0, -7.6, dur)),
            Agent("ped_on", "pedestrian", PED_SIZE, PED_SIZE,
                  stationary(-65.0, 2.2, dur)),
            Agent("parked", "parked_vehicle", CAR_LENGTH, CAR_WIDTH,
                  stationary(-45.0, -7.65, dur)),
        ]
    t = time_grid(dur, 0.1)
    v_lead = _lead_speed_profile(t)
    lead_front = -106.0 + 6.0 + EGO_LENGTH / 2 + CAR_LENGTH / 2
    x_lead = lead_front + np.concatenate(
        [[0.0], np.cumsum((v_lead[1:] + v_lead[:-1]) / 2.0 * np.diff(t))])
    return [
        Agent("side_r", "vehicle", CAR_LENGTH, CAR_WIDTH,
              const_velocity(-106.0 + BASE_SPEED * 3.0, -4.3, 0.0, BASE_SPEED,
                             3.0, 7.0)),
        Agent("side_l", "vehicle", CAR_LENGTH, CAR_WIDTH,
              const_velocity(-106.0 + BASE_SPEED * 9.0, 0.8, 0.0, BASE_SPEED,
                             9.0, 13.0)),
        Agent("lead", "vehicle", CAR_LENGTH, CAR_WIDTH,
              make_trajectory(t, x_lead, np.full_like(t, -1.75))),
    ]


def _straight_realization(rid: str, sid: str, engagements: dict[str, float],
                          dur: float) -> Realization:
    """Ego plan in e2; each engagement adds one maneuver near its prop."""
    p = EgoPlanU(lane_y=-1.75, x_start=-106.0, duration=dur)
    e = engagements
    if "r12" in e:
        p.start_offset = e["r12"] - 4.0  # closes the choreographed lead gap
    if "r4" in e:
        p.lat_bumps.append((-90.0, 13.0, -e["r4"]))
    if "r5" in e:
        p.lat_bumps.append((-65.0, 12.0, +e["r5"]))
    if "r9" in e:
        p.lat_bumps.append((-45.0, 13.0, -e["r9"]))
    if "r10" in e:
        x_mid = -106.0 + BASE_SPEED * 5.0
        p.lat_bumps.append((x_mid, 16.0, -e["r10"]))
    if "r11" in e:
        x_mid = -106.0 + BASE_SPEED * 11.0
        p.lat_bumps.append((x_mid, 16.0, +e["r11"]))
    if "r3" in e:
        p.lat_plateaus.append((-28.0, -12.0, 6.0, -(3.5 + e["r3"])))
    if "r14" in e:
        p.lat_plateaus.append((4.0, 20.0, 6.0, -e["r14"]))
    if "r13" in e:
        p.speed_bumps.append((dur - 3.0, 2.5, (12.0 - BASE_SPEED) + e["r13"]))
    return _ego(rid, sid, p.build())


def _intersection_scenario(sid: str, dur: float) -> Scenario:
    zone = ConflictZone("cz", _rect(-3.5, -7, 3.5, 7))
    t_exit = (5.75 + 36.0) / BASE_SPEED
    y_a0 = -9.25 - BASE_SPEED * (t_exit + 2.6)  # default gap: tau + 0.6
    agent = Agent("xing", "vehicle", CAR_LENGTH, CAR_WIDTH,
                  const_velocity(1.75, y_a0, math.pi / 2, BASE_SPEED, 0.0, dur),
                  right_of_way_zone_ids=frozenset({"cz"}))
    curb_ped = Agent("curb_ped", "pedestrian", PED_SIZE, PED_SIZE,
                     stationary(-12.0, -7.85, dur))
    return Scenario(sid, "U", dur, [agent, curb_ped], [zone])


def _intersection_realization(rid, sid, engagements, dur) -> Realization:
    p = EgoPlanU(lane_y=-5.25, x_start=-36.0, duration=dur)
    if "r7" in engagements:
        # exit later so the remaining gap is (tau - knob); default gap is 2.6
        p.start_offset = -BASE_SPEED * (0.6 + engagements["r7"])
    if "r14" in engagements:
        p.lat_plateaus.append((-30.0, -16.0, 5.0, engagements["r14"]))
    if "r4" in engagements:
        p.lat_bumps.append((-12.0, 8.0, -engagements["r4"]))
    if "r13" in engagements:
        p.speed_bumps.append((dur - 2.0, 1.6, (12.0 - BASE_SPEED) + engagements["r13"]))
    return _ego(rid, sid, p.build())


_INTERSECTION_KNOBS = {"r7": (0.8, 1.9), "r14": (0.85, 1.55), "r13": (0.5, 6.0),
                       "r4": (0.1, 0.6)}
# r7 knob = gap deficit tau - gap


def _loop_scenario(sid: str, dur: float) -> Scenario:
    # parked car hugs the outer edge: bottom at y=29.65, default gap 0.4 m
    return Scenario(sid, "S", dur, [
        Agent("parked", "parked_vehicle", CAR_LENGTH, CAR_WIDTH,
              stationary(10.0, 30.65, dur))], [])


def _loop_realization(rid, sid, engagements, dur) -> Realization:
    p = EgoPlanU(lane_y=28.25, x_start=-26.0, duration=dur, base_speed=7.0,
                 x_max=22.0)
    e = engagements
    if "r8" in e:
        p.lat_plateaus.append((-18.0, -18.0 + 7.0 * e["r8"], 5.0, -3.5))
    if "r9" in e:
        p.lat_bumps.append((10.0, 12.0, +e["r9"]))
    if "r13" in e:
        p.speed_bumps.append((dur - 2.5, 2.0, (10.0 - 7.0) + e["r13"]))
    if "r14" in e and "r8" not in e:
        p.lat_plateaus.append((-14.0, 0.0, 5.0, -e["r14"]))
    return _ego(rid, sid, p.build())


_LOOP_KNOBS = {"r8": (1.4, 4.5), "r9": (0.12, 0.37), "r13": (0.5, 5.0),
               "r14": (0.85, 1.55)}


def _collision_scenario(sid: str, dur: float, kind: str) -> Scenario:
    if kind == "ped":
        prop = Agent("ped", "pedestrian", PED_SIZE, PED_SIZE,
                     stationary(-50.0, -5.25, dur))
    else:
        prop = Agent("stopped", "vehicle", CAR_LENGTH, CAR_WIDTH,
                     stationary(-50.0, -5.25, dur))
    return _straight_scenario(sid, dur, [prop])


def _collision_realization(rid, sid, engagements, dur, kind) -> Realization:
    rule = "r1" if kind == "ped" else "r2"
    if rule in engagements:
        # hit the prop at (base + knob) m/s and come to rest inside it
        v = BASE_SPEED + engagements[rule]
        obstacle_len = PED_SIZE if kind == "ped" else CAR_LENGTH
        t = time_grid(dur, 0.1)
        x_contact = -50.0 - (EGO_LENGTH + obstacle_len) / 2.0
        x = np.minimum(x_contact - 4.0 - 5.0 * v + v * t, x_contact + 2.5)
        y = np.full_like(t, -5.25)
        if "r14" in engagements:
            y = y + engagements["r14"] * plateau(x, -96.0, -80.0, 6.0)
        return _ego(rid, sid, make_trajectory(t, x, y))
    p = EgoPlanU(lane_y=-5.25, x_start=-106.0, duration=dur)
    p.lat_bumps.append((-50.0, 16.0, 3.4))  # swerve around the prop
    if "r14" in engagements:
        p.lat_plateaus.append((-96.0, -80.0, 6.0, +engagements["r14"]))
    if "r13" in engagements:
        p.speed_bumps.append((dur - 2.0, 1.6, (12.0 - BASE_SPEED) + engagements["r13"]))
    return _ego(rid, sid, p.build())


_COLLISION_KNOBS = {"r1": (-2.0, 3.0), "r2": (-2.0, 3.0), "r13": (0.5, 6.0),
                    "r14": (0.85, 1.55)}
# collision knob = extra speed on top of base at impact


def generate_dataset(n_scenarios: int, realizations_per_scenario: int, seed: int,
                     out_dir: str | Path | None = None,
                     config: GeneratorConfig | None = None) -> Dataset:
    """Scenario/realization corpus with per-realization engagement profiles.

    Deterministic under (arguments, seed): regeneration is byte-identical.
    """
    cfg = config or GeneratorConfig()
    cfg = GeneratorConfig(n_scenarios, realizations_per_scenario, seed,
                          cfg.clean_prob, cfg.collision_share,
                          cfg.intersection_share, cfg.loop_share)
    rng = np.random.default_rng(seed)
    ds = Dataset(maps=build_maps())
    manifest: dict = {"config": cfg.__dict__, "scenarios": []}

    for i in range(n_scenarios):
        sid = f"s{i:03d}"
        u = rng.random()
        if u < cfg.collision_share:
            family = "collision"
        elif u < cfg.collision_share + cfg.intersection_share:
            family = "intersection"
        elif u < cfg.collision_share + cfg.intersection_share + cfg.loop_share:
            family = "loop"
        else:
            family = "clearance" if rng.random() < 0.5 else "traffic"
        if family in ("clearance", "traffic"):
            dur = 16.0
        elif family == "loop":
            dur = 10.0
        else:
            dur = 14.0
        coll_kind = "ped" if rng.random() < 0.5 else "veh"

        if family in ("clearance", "traffic"):
            scen = Scenario(sid, "U", dur, _straight_scenario_props(sid, dur, family))
            knobs = _CLEARANCE_KNOBS if family == "clearance" else _TRAFFIC_KNOBS
        elif family == "intersection":
            scen = _intersection_scenario(sid, dur)
            knobs = _INTERSECTION_KNOBS
        elif family == "loop":
            scen = _loop_scenario(sid, dur)
            knobs = _LOOP_KNOBS
        else:
            scen = _collision_scenario(sid, dur, coll_kind)
            knobs = _COLLISION_KNOBS
        ds.scenarios[sid] = scen
        scen_manifest = {"id": sid, "family": family, "realizations": []}

        for j in range(realizations_per_scenario):
            rid = f"{sid}_r{j:02d}"
            engagements: dict[str, float] = {}
            if rng.random() >= cfg.clean_prob:
                avail = list(knobs)
                if family == "collision":
                    base_rule = "r1" if coll_kind == "ped" else "r2"
                    if rng.random() < 0.6:
                        lo, hi = knobs[base_rule]
                        engagements[base_rule] = float(rng.uniform(lo, hi))
                    avail = [r for r in avail if r not in ("r1", "r2")]
                n_lo = min(2, len(avail))
                n_pick = int(rng.integers(n_lo, min(len(avail), 5) + 1))
                picked = rng.choice(len(avail), size=n_pick, replace=False)
                for k in sorted(picked):
                    rule = avail[int(k)]
                    lo, hi = knobs[rule]
                    engagements[rule] = float(rng.uniform(lo, hi))
            if family in ("clearance", "traffic"):
                real = _straight_realization(rid, sid, engagements, dur)
            elif family == "intersection":
                real = _intersection_realization(rid, sid, engagements, dur)
            elif family == "loop":
                real = _loop_realization(rid, sid, engagements, dur)
            else:
                real = _collision_realization(rid, sid, engagements, dur, coll_kind)
            ds.realizations[rid] = real
            scen_manifest["realizations"].append(
                {"id": rid, "engagements": {k: round(v, 6)
                                            for k, v in sorted(engagements.items())}})
        manifest["scenarios"].append(scen_manifest)

    if out_dir is not None:
        out_dir = Path(out_dir)
        save_dataset(ds, out_dir)
        atomic_write_text(out_dir / "manifest.json",
                          json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return ds


# -- simulated crowds -------------------------------------------------------------

@dataclass(frozen=True)
class CrowdSpec:
    n_annotators: int = 25
    annotations_per_pair: int = 5
    noise: str = "flip"        # "flip": constant p_correct; "logistic": margin-based
    p_correct: float = 1.0
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_annotators < 1 or self.annotations_per_pair < 1:
            raise ValidationError("crowd counts must be >= 1")
        if self.noise not in ("flip", "logistic"):
            raise ValidationError(f"unknown noise model {self.noise!r}")
        if self.noise == "flip" and not (0.5 < self.p_correct <= 1.0):
            raise ValidationError("p_correct must lie in (0.5, 1]")
        if self.noise == "logistic" and not self.scale > 0:
            raise ValidationError("logistic scale must be > 0")


class LinearUtilityTruth:
    """Ground truth: lower weighted violation total is better."""

    def __init__(self, weights: np.ndarray):
        self.weights = np.asarray(weights, dtype=float)

    def better_first(self, va: np.ndarray, vb: np.ndarray) -> bool:
        return float(self.weights @ va) <= float(self.weights @ vb)

    def margin(self, va: np.ndarray, vb: np.ndarray) -> float:
        return abs(float(self.weights @ (va - vb)))


class RulebookTruth:
    """Ground truth: rulebook verdict, with a utility tie-break on abstentions."""

    def __init__(self, rulebook: Rulebook, tiebreak_weights: np.ndarray | None = None):
        self.rulebook = rulebook
        self.tiebreak = LinearUtilityTruth(
            tiebreak_weights if tiebreak_weights is not None else np.ones(14))

    def better_first(self, va, vb) -> bool:
        c = compare(self.rulebook, ViolationVector(va), ViolationVector(vb))
        if c.outcome == FIRST_PREFERRED:
            return True
        if c.outcome == SECOND_PREFERRED:
            return False
        return self.tiebreak.better_first(va, vb)

    def margin(self, va, vb) -> float:
        return self.tiebreak.margin(va, vb)


def within_scenario_pairs(dataset: Dataset) -> list[tuple[str, str]]:
    pairs = []
    by_scen: dict[str, list[str]] = {}
    for rid, real in sorted(dataset.realizations.items()):
        by_scen.setdefault(real.scenario_id, []).append(rid)
    for sid in sorted(by_scen):
        rids = by_scen[sid]
        for i in range(len(rids)):
            for j in range(i + 1, len(rids)):
                pairs.append((rids[i], rids[j]))
    return pairs


def simulate_crowd(dataset: Dataset, vectors: dict[str, ViolationVector],
                   truth, crowd: CrowdSpec) -> list[Annotation]:
    """Noisy pairwise annotations over every within-scenario pair."""
    rng = np.random.default_rng(crowd.seed)
    annotators = [f"annotator{i:03d}" for i in range(crowd.n_annotators)]
    out: list[Annotation] = []
    for a, b in within_scenario_pairs(dataset):
        va, vb = vectors[a].as_array(), vectors[b].as_array()
        first_better = truth.better_first(va, vb)
        if crowd.noise == "flip":
            p = crowd.p_correct
        else:
            m = truth.margin(va, vb)
            p = 1.0 / (1.0 + math.exp(-crowd.scale * m))
        k = min(crowd.annotations_per_pair, crowd.n_annotators)
        chosen = rng.choice(crowd.n_annotators, size=k, replace=False)
        for idx in sorted(chosen):
            correct = bool(rng.random() < p)
            picks_first = first_better == correct
            out.append(Annotation(annotators[int(idx)], a, b,
                                  "a" if picks_first else "b"))
    return out
