import math

import numpy as np
import pytest

from drivepref.rules import (RULE_IDS, RuleParams, ViolationVector,
                             load_rule_params, vectors_from_csv, vectors_to_csv,
                             violation_vector)
from drivepref.world import (Trajectory, mirror_map, mirror_realization,
                             mirror_scenario, time_grid)

from conftest import (aligned_rect_distance, conflict_zone, const_traj,
                      make_scene, pedestrian, still_traj, vehicle)

P = RuleParams()


def score(road_map, real, scen, rule=None):
    v = violation_vector(real, scen, road_map, P)
    return v if rule is None else v[rule]


class TestCleanDrive:
    def test_zero_vector(self, road_map):
        real, scen = make_scene(const_traj(-50, -5.25, 8.0, 5.0))
        v = score(road_map, real, scen)
        assert np.array_equal(v.as_array(), np.zeros(14))

    def test_deterministic_bit_identical(self, road_map):
        real, scen = make_scene(
            const_traj(0, -5.25, 5.0, 4.0),
            agents=[pedestrian("p", still_traj(10, -5.25, 4.0))])
        v1 = violation_vector(real, scen, road_map, P)
        v2 = violation_vector(real, scen, road_map, P)
        assert np.array_equal(v1.as_array(), v2.as_array())


class TestCollisions:
    def test_r1_far_pedestrian_zero(self, road_map):
        real, scen = make_scene(
            const_traj(0, -5.25, 8.0, 4.0),
            agents=[pedestrian("p", still_traj(0, 20.0, 4.0))])
        assert score(road_map, real, scen, "r1") == 0.0

    def test_r1_single_hit_severity_is_impact_speed(self, road_map):
        real, scen = make_scene(
            const_traj(0, -5.25, 5.0, 4.0),
            agents=[pedestrian("p", still_traj(10, -5.25, 4.0))])
        assert score(road_map, real, scen, "r1") == pytest.approx(5.0, abs=1e-9)

    def test_r1_two_impacts_sum(self, road_map):
        # phase A at 3 m/s hits ped at x=6; ramp to 4 m/s; hits ped at x=25.
        rows = []
        for t in time_grid(10.0, 0.1):
            if t <= 3.0:
                x, s = 3.0 * t, 3.0
            elif t <= 4.0:
                u = t - 3.0
                x, s = 9.0 + 3.0 * u + 0.5 * u * u, 3.0 + u
            else:
                x, s = 12.5 + 4.0 * (t - 4.0), 4.0
            rows.append([t, x, -5.25, 0.0, s])
        real, scen = make_scene(
            Trajectory(rows),
            agents=[pedestrian("p1", still_traj(6.0, -5.25, 10.0)),
                    pedestrian("p2", still_traj(25.0, -5.25, 10.0))])
        assert score(road_map, real, scen, "r1") == pytest.approx(7.0, abs=1e-9)

    def test_r2_head_on_relative_speed(self, road_map):
        real, scen = make_scene(
            const_traj(0, -5.25, 5.0, 4.0),
            agents=[vehicle("v", const_traj(20, -5.25, 5.0, 4.0,
                                            heading=math.pi))])
        assert score(road_map, real, scen, "r2") == pytest.approx(10.0, abs=1e-9)

    def test_r2_grazing_low_speed(self, road_map):
        real, scen = make_scene(
            const_traj(0, -5.25, 1.0, 8.0),
            agents=[vehicle("v", still_traj(5.2, -5.25, 8.0))])
        assert score(road_map, real, scen, "r2") == pytest.approx(1.0, abs=1e-9)

    def test_r2_no_overlap_zero(self, road_map):
        real, scen = make_scene(
            const_traj(0, -5.25, 5.0, 2.0),
            agents=[vehicle("v", still_traj(60.0, -5.25, 2.0))])
        assert score(road_map, real, scen, "r2") == 0.0

    @staticmethod
    def _flicker_rows(gap_steps: int):
        # overlap until t=1.0, out of overlap for `gap_steps` samples, back in
        rows = []
        out_until = 1.0 + 0.1 * gap_steps + 0.05
        for t in time_grid(4.0, 0.1):
            if t < 1.05:
                x = 5.0 * t
            elif t < out_until:
                x = 9.0  # clear of the pedestrian
            else:
                x = 5.0 + (t - out_until)
            rows.append([t, x, -5.25, 0.0, 5.0])
        return rows

    def test_debounce_merges_short_flicker(self, road_map):
        # 0.2 s gap < 0.3 s debounce: one event at 5 m/s
        real, scen = make_scene(
            Trajectory(self._flicker_rows(2)),
            agents=[pedestrian("p", still_traj(6.0, -5.25, 4.0))])
        assert score(road_map, real, scen, "r1") == pytest.approx(5.0, abs=1e-9)

    def test_debounce_keeps_separate_impacts(self, road_map):
        # 0.4 s gap >= 0.3 s debounce: two events
        real, scen = make_scene(
            Trajectory(self._flicker_rows(4)),
            agents=[pedestrian("p", still_traj(6.0, -5.25, 4.0))])
        assert score(road_map, real, scen, "r1") == pytest.approx(10.0, abs=1e-9)


class TestDrivableArea:
    def test_half_footprint_off_for_one_second(self, road_map):
        # ego center on the road edge: 1.0 m of the 2 m footprint hangs off;
        # duration 0.9 puts exactly 10 samples on the grid -> sqrt(1^2 * 1.0)
        real, scen = make_scene(still_traj(0, -7.0, 0.9))
        assert score(road_map, real, scen, "r3") == pytest.approx(1.0, abs=1e-9)

    def test_doubling_duration_scales_sqrt2(self, road_map):
        r1, s1 = make_scene(still_traj(0, -7.0, 0.9))
        r2, s2 = make_scene(still_traj(0, -7.0, 1.9))
        a = score(road_map, r1, s1, "r3")
        b = score(road_map, r2, s2, "r3")
        assert b / a == pytest.approx(math.sqrt(2.0), abs=1e-9)

    def test_on_road_zero(self, road_map):
        real, scen = make_scene(const_traj(-50, -1.75, 8.0, 5.0))
        assert score(road_map, real, scen, "r3") == 0.0


class TestPedestrianClearance:
    def test_r4_stationary_deficit(self, road_map):
        # ego bottom -6.75; off-road ped top -6.95 -> gap 0.2, threshold 0.5
        real, scen = make_scene(
            still_traj(0, -5.75, 0.9),
            agents=[pedestrian("p", still_traj(0, -7.2, 0.9))])
        assert score(road_map, real, scen, "r4") == pytest.approx(0.3, abs=1e-9)

    def test_r4_boundary_exactly_at_threshold(self, road_map):
        # gap exactly c0 = 0.5 at standstill -> no violation
        real, scen = make_scene(
            still_traj(0, -5.75, 0.9),
            agents=[pedestrian("p", still_traj(0, -7.5, 0.9))])
        assert score(road_map, real, scen, "r4") == 0.0

    def test_r5_stationary_deficit(self, road_map):
        # on-road ped bottom -3.35; ego top -4.25 -> gap 0.9, threshold 1.0
        real, scen = make_scene(
            still_traj(0, -5.25, 0.9),
            agents=[pedestrian("p", still_traj(0, -3.1, 0.9))])
        assert score(road_map, real, scen, "r5") == pytest.approx(0.1, abs=1e-9)

    def test_all_beyond_threshold_zero(self, road_map):
        real, scen = make_scene(
            const_traj(-40, -5.25, 8.0, 5.0),
            agents=[pedestrian("p1", still_traj(0, 3.0, 5.0)),
                    pedestrian("p2", still_traj(20, -9.5, 5.0))])
        v = score(road_map, real, scen)
        assert v["r4"] == 0.0 and v["r5"] == 0.0

    def test_drive_by_matches_spreadsheet_oracle(self, road_map):
        # moving pass: recompute every step with the hand distance formula
        speed, dur = 8.0, 3.0
        ped_xy = (12.0, -7.5)
        real, scen = make_scene(
            const_traj(0, -5.25, speed, dur),
            agents=[pedestrian("p", still_traj(*ped_xy, dur))])
        got = score(road_map, real, scen, "r4")
        dmin = P.ped_offroad_c0 + P.ped_offroad_c1 * speed
        total = 0.0
        for t in time_grid(dur, P.dt):
            d = aligned_rect_distance((speed * t, -5.25), (2.25, 1.0),
                                      ped_xy, (0.25, 0.25))
            total += max(0.0, dmin - d) ** 2 * P.dt
        assert got == pytest.approx(math.sqrt(total), abs=1e-9)


class TestBrakingIntent:
    def test_constant_speed_approach_closed_form(self, road_map):
        # in-corridor and closing for steps t=3.0..3.9 (10 samples), a=0:
        # deficit = a_req = 1 -> sqrt(10 * 0.1) = 1.0
        real, scen = make_scene(
            const_traj(0, -5.25, 8.0, 3.9),
            agents=[pedestrian("p", still_traj(50.0, -5.25, 3.9))])
        assert score(road_map, real, scen, "r6") == pytest.approx(1.0, abs=1e-9)

    def test_braking_harder_than_required_zero(self, road_map):
        rows = [[t, 10.0 * t - t * t, -5.25, 0.0, 10.0 - 2.0 * t]
                for t in time_grid(3.9, 0.1)]
        real, scen = make_scene(
            Trajectory(rows),
            agents=[pedestrian("p", still_traj(60.0, -5.25, 3.9))])
        assert score(road_map, real, scen, "r6") == 0.0

    def test_no_vru_in_corridor_zero(self, road_map):
        real, scen = make_scene(
            const_traj(0, -5.25, 8.0, 3.9),
            agents=[pedestrian("p", still_traj(20.0, -2.0, 3.9))])
        assert score(road_map, real, scen, "r6") == 0.0


class TestYield:
    def _zone_scene(self, ego_x0, dur=6.0):
        zone = conflict_zone("cz", 10, -7, 20, 3.5)
        agent = vehicle("xing", const_traj(40, 1.75, 5.0, dur, heading=math.pi),
                        zones={"cz"})
        return make_scene(const_traj(ego_x0, -5.25, 8.0, dur),
                          agents=[agent], zones=[zone])

    def test_in_zone_at_arrival_full_tau(self, road_map):
        real, scen = self._zone_scene(ego_x0=-10.0)
        assert score(road_map, real, scen, "r7") == pytest.approx(P.yield_gap,
                                                                  abs=1e-9)

    def test_clears_early_zero(self, road_map):
        real, scen = self._zone_scene(ego_x0=20.0)
        assert score(road_map, real, scen, "r7") == 0.0

    def test_two_zones_additive(self, road_map):
        dur = 14.0
        z1 = conflict_zone("z1", 10, -7, 20, 3.5)
        z2 = conflict_zone("z2", 60, -7, 70, 3.5)
        a1 = vehicle("a1", const_traj(40, 1.75, 5.0, dur, heading=math.pi),
                     zones={"z1"})
        a2 = vehicle("a2", const_traj(90, 1.75, 5.0, dur, heading=math.pi),
                     zones={"z2"})
        ego = const_traj(-10, -5.25, 8.0, dur)
        r_both, s_both = make_scene(ego, agents=[a1, a2], zones=[z1, z2])
        r_one, s_one = make_scene(ego, agents=[a1], zones=[z1])
        r_two, s_two = make_scene(ego, agents=[a2], zones=[z2])
        got = score(road_map, r_both, s_both, "r7")
        expect = (score(road_map, r_one, s_one, "r7")
                  + score(road_map, r_two, s_two, "r7"))
        assert got == pytest.approx(expect, abs=1e-9)
        assert got > 0


class TestWrongSide:
    def test_fully_inside_opposing_lane(self, road_map):
        # centered in w1 heading east: depth = half lane width = 1.75
        real, scen = make_scene(still_traj_with_motion())
        assert score(road_map, real, scen, "r8") == pytest.approx(1.75, abs=1e-9)

    def test_own_lane_zero(self, road_map):
        real, scen = make_scene(const_traj(-40, -5.25, 8.0, 3.0))
        assert score(road_map, real, scen, "r8") == 0.0

    def test_partial_overtake_matches_depth_oracle(self, road_map):
        # ego at y=0.25: samples inside w1 reach y=1.25 -> depth 1.25
        real, scen = make_scene(const_traj(-40, 0.25, 8.0, 0.9))
        assert score(road_map, real, scen, "r8") == pytest.approx(1.25, abs=1e-9)

    def test_mirror_symmetric_score(self, road_map):
        real, scen = make_scene(const_traj(-40, 1.75, 8.0, 0.9))
        base = score(road_map, real, scen, "r8")
        mirrored = violation_vector(mirror_realization(real),
                                    mirror_scenario(scen), mirror_map(road_map), P)
        assert mirrored["r8"] == pytest.approx(base, abs=1e-9)


def still_traj_with_motion():
    # eastbound at 8 m/s centered in the westbound lane for 0.9 s (10 samples)
    return const_traj(-40, 1.75, 8.0, 0.9)


class TestVehicleClearance:
    def test_empty_road_all_zero(self, road_map):
        real, scen = make_scene(const_traj(-40, -5.25, 8.0, 3.0))
        v = score(road_map, real, scen)
        assert all(v[r] == 0.0 for r in ("r9", "r10", "r11", "r12"))

    def test_right_sector_only(self, road_map):
        # gap d_veh/2 = 0.15 directly right -> r10 only
        real, scen = make_scene(
            still_traj(0, -5.25, 0.9),
            agents=[vehicle("v", still_traj(0, -7.40, 0.9))])
        v = score(road_map, real, scen)
        assert v["r10"] == pytest.approx(0.15, abs=1e-9)
        assert v["r9"] == v["r11"] == v["r12"] == 0.0

    def test_left_sector_mirror_exact(self, road_map):
        real, scen = make_scene(
            still_traj(0, -5.25, 0.9),
            agents=[vehicle("v", still_traj(0, -3.10, 0.9))])
        v = score(road_map, real, scen)
        assert v["r11"] == pytest.approx(0.15, abs=1e-9)
        assert v["r10"] == 0.0

    def test_mirrored_scene_swaps_r10_r11(self, road_map):
        real, scen = make_scene(
            still_traj(0, -5.25, 0.9),
            agents=[vehicle("v", still_traj(0, -7.40, 0.9)),
                    pedestrian("p", still_traj(30, -7.2, 0.9))])
        v = score(road_map, real, scen)
        mv = violation_vector(mirror_realization(real), mirror_scenario(scen),
                              mirror_map(road_map), P)
        assert mv["r10"] == pytest.approx(v["r11"], abs=1e-9)
        assert mv["r11"] == pytest.approx(v["r10"], abs=1e-9)
        for rule in RULE_IDS:
            if rule in ("r10", "r11"):
                continue
            assert mv[rule] == pytest.approx(v[rule], abs=1e-9)

    def test_front_sector(self, road_map):
        real, scen = make_scene(
            still_traj(0, -5.25, 0.9),
            agents=[vehicle("v", still_traj(5.2, -5.25, 0.9))])
        v = score(road_map, real, scen)
        assert v["r12"] == pytest.approx(0.3, abs=1e-9)
        assert v["r10"] == v["r11"] == 0.0

    def test_rear_ignored(self, road_map):
        real, scen = make_scene(
            still_traj(0, -5.25, 0.9),
            agents=[vehicle("v", still_traj(-5.2, -5.25, 0.9))])
        v = score(road_map, real, scen)
        assert all(v[r] == 0.0 for r in ("r9", "r10", "r11", "r12"))

    def test_parked_goes_to_r9_exclusively(self, road_map):
        real, scen = make_scene(
            still_traj(0, -5.25, 0.9),
            agents=[vehicle("v", still_traj(0, -7.40, 0.9),
                            kind="parked_vehicle")])
        v = score(road_map, real, scen)
        assert v["r9"] == pytest.approx(0.15, abs=1e-9)
        assert v["r10"] == 0.0


class TestSpeedLimit:
    def test_under_limit_zero(self, road_map):
        real, scen = make_scene(const_traj(-40, -5.25, 9.9, 3.0))
        assert score(road_map, real, scen, "r13") == 0.0

    def test_one_over_for_four_seconds(self, road_map):
        # 40 grid samples at 1 m/s over -> sqrt(1^2 * 4.0) = 2.0
        real, scen = make_scene(const_traj(-40, -5.25, 11.0, 3.9))
        assert score(road_map, real, scen, "r13") == pytest.approx(2.0, abs=1e-9)

    def test_homogeneity(self, road_map):
        r1, s1 = make_scene(const_traj(-40, -5.25, 11.0, 3.9))
        r2, s2 = make_scene(const_traj(-40, -5.25, 12.0, 3.9))
        assert (score(road_map, r2, s2, "r13")
                == pytest.approx(2 * score(road_map, r1, s1, "r13"), abs=1e-9))


class TestStayInLane:
    def test_straddle_half_meter(self, road_map):
        # ego top reaches -3.0, e1 boundary at -3.5 -> depth 0.5 for 10 samples
        real, scen = make_scene(still_traj(0, -4.0, 0.9))
        assert score(road_map, real, scen, "r14") == pytest.approx(0.5, abs=1e-9)

    def test_lane_change_scores_even_if_legal(self, road_map):
        rows = []
        for t in time_grid(4.0, 0.1):
            y = -5.25 + 3.5 * min(1.0, max(0.0, (t - 1.0) / 2.0))
            rows.append([t, 8.0 * t, y, 0.0, 8.0])
        real, scen = make_scene(Trajectory(rows))
        assert score(road_map, real, scen, "r14") > 0.0

    def test_centerline_tracking_zero(self, road_map):
        real, scen = make_scene(const_traj(-40, -1.75, 8.0, 3.0))
        assert score(road_map, real, scen, "r14") == 0.0


class TestAggregationProperties:
    def test_clean_suffix_leaves_scores_unchanged(self, road_map):
        overspeed = [[t, 11.0 * t, -5.25, 0.0, 11.0] for t in time_grid(2.9, 0.1)]
        real, scen = make_scene(Trajectory(overspeed))
        base = violation_vector(real, scen, road_map, P).as_array()
        # append a clean constant-speed suffix under the limit
        t_ext = time_grid(5.9, 0.1)
        rows = []
        for t in t_ext:
            if t <= 2.95:  # cut mid-interval so float jitter cannot move it
                rows.append([t, 11.0 * t, -5.25, 0.0, 11.0])
            else:
                rows.append([t, 31.9 + 8.0 * (t - 2.9), -5.25, 0.0, 8.0])
        real2, scen2 = make_scene(Trajectory(rows))
        ext = violation_vector(real2, scen2, road_map, P).as_array()
        assert np.allclose(base, ext, atol=1e-9)

    def test_nonnegative_and_finite(self, road_map):
        real, scen = make_scene(
            const_traj(0, -5.25, 5.0, 4.0),
            agents=[pedestrian("p", still_traj(10, -5.25, 4.0)),
                    vehicle("v", still_traj(10, -7.4, 4.0))])
        v = violation_vector(real, scen, road_map, P).as_array()
        assert np.all(np.isfinite(v)) and np.all(v >= 0)


class TestParamsAndCsv:
    def test_params_file_roundtrip(self, tmp_path):
        path = tmp_path / "params.txt"
        path.write_text("dt = 0.2\nyield_gap = 3.0  # seconds\n")
        p = load_rule_params(path)
        assert p.dt == 0.2 and p.yield_gap == 3.0
        assert p.ped_onroad_c0 == RuleParams().ped_onroad_c0

    def test_params_rejects_unknown_key(self, tmp_path):
        path = tmp_path / "params.txt"
        path.write_text("no_such_param = 1\n")
        with pytest.raises(Exception, match="no_such_param"):
            load_rule_params(path)

    def test_params_rejects_nonpositive(self):
        with pytest.raises(Exception):
            RuleParams(dt=0.0)

    def test_vector_csv_roundtrip(self):
        vecs = {"a": ViolationVector(np.linspace(0, 1.3, 14)),
                "b": ViolationVector(np.zeros(14))}
        again = vectors_from_csv(vectors_to_csv(vecs))
        for k in vecs:
            assert np.array_equal(again[k].as_array(), vecs[k].as_array())

    def test_vector_validation(self):
        with pytest.raises(Exception):
            ViolationVector(np.full(14, -1.0))
        with pytest.raises(Exception):
            ViolationVector(np.zeros(13))
