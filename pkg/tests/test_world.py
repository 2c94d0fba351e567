import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drivepref.errors import TrajectoryRangeError, ValidationError
from drivepref.world import (Agent, Trajectory, footprint_at, mirror_agent,
                             mirror_trajectory, sample_pose, time_grid)

from conftest import const_traj, still_traj


class TestTrajectoryValidation:
    def test_decreasing_timestamps_rejected(self):
        with pytest.raises(ValidationError):
            Trajectory([[0, 0, 0, 0, 1], [0, 1, 0, 0, 1]])

    def test_negative_speed_rejected(self):
        with pytest.raises(ValidationError):
            Trajectory([[0, 0, 0, 0, -1], [1, 0, 0, 0, 1]])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValidationError):
            Trajectory([[0, 0, np.nan, 0, 0], [1, 0, 0, 0, 0]])


class TestSamplePose:
    def test_sample_timestamp_verbatim(self):
        tr = Trajectory([[0, 0, 0, 0.1, 1], [1, 2, 3, 0.4, 5], [2, 4, 6, 0.5, 2]])
        assert sample_pose(tr, 1.0) == (2.0, 3.0, 0.4, 5.0)

    def test_midpoint_linear(self):
        tr = Trajectory([[0, 0, 0, 0, 0], [2, 2, 0, 0, 4]])
        x, y, h, s = sample_pose(tr, 1.0)
        assert (x, y) == (1.0, 0.0)
        assert s == 2.0

    def test_heading_shortest_arc_midpoint(self):
        tr = Trajectory([[0, 0, 0, math.radians(350) - 2 * math.pi, 1],
                         [1, 1, 0, math.radians(10), 1]])
        # stored headings wrap to (-pi, pi]; midpoint must be 0 via shortest arc
        _, _, h, _ = sample_pose(tr, 0.5)
        assert h == pytest.approx(0.0, abs=1e-12)

    def test_out_of_range(self):
        tr = Trajectory([[0, 0, 0, 0, 0], [1, 1, 0, 0, 0]])
        with pytest.raises(TrajectoryRangeError):
            sample_pose(tr, -0.01)
        with pytest.raises(TrajectoryRangeError):
            sample_pose(tr, 1.01)

    @given(st.integers(2, 12), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_resampling_identity(self, n, seed):
        rng = np.random.default_rng(seed)
        t = np.cumsum(rng.uniform(0.05, 1.0, size=n))
        samples = np.column_stack([
            t, rng.normal(size=n) * 10, rng.normal(size=n) * 10,
            rng.uniform(-math.pi, math.pi, size=n), rng.uniform(0, 20, size=n)])
        tr = Trajectory(samples)
        for i in range(n):
            x, y, h, s = sample_pose(tr, float(t[i]))
            assert (x, y, h, s) == (samples[i, 1], samples[i, 2],
                                    samples[i, 3], samples[i, 4])


class TestAgents:
    def test_parked_must_be_stationary(self):
        with pytest.raises(ValidationError):
            Agent("p", "parked_vehicle", 4.5, 2.0, const_traj(0, 0, 3.0, 2.0))
        Agent("p", "parked_vehicle", 4.5, 2.0, still_traj(0, 0, 2.0))

    def test_footprint_axis_aligned(self):
        a = Agent("v", "vehicle", 4.0, 2.0, still_traj(0, 0, 2.0))
        corners = {tuple(np.round(c, 9)) for c in footprint_at(a, 1.0).corners()}
        assert corners == {(2, 1), (-2, 1), (-2, -1), (2, -1)}

    def test_footprint_rotated(self):
        a = Agent("v", "vehicle", 4.0, 2.0,
                  still_traj(0, 0, 2.0, heading=math.pi / 2))
        corners = {tuple(np.round(c, 9)) for c in footprint_at(a, 0.5).corners()}
        assert corners == {(1, 2), (-1, 2), (-1, -2), (1, -2)}

    def test_stationary_footprint_constant(self):
        a = Agent("v", "parked_vehicle", 4.0, 2.0, still_traj(3, -2, 5.0, 0.3))
        r0 = footprint_at(a, 0.0).corners()
        r1 = footprint_at(a, 4.9).corners()
        assert np.allclose(r0, r1)


class TestMirror:
    def test_mirror_involution(self):
        tr = const_traj(2.0, -5.0, 7.0, 3.0, heading=0.4)
        back = mirror_trajectory(mirror_trajectory(tr))
        assert np.allclose(back.samples(), tr.samples())

    def test_mirror_flips_x_and_heading(self):
        tr = const_traj(2.0, -5.0, 7.0, 1.0, heading=0.0)
        m = mirror_trajectory(tr)
        assert np.allclose(m.x, -tr.x)
        assert np.allclose(m.y, tr.y)
        assert np.allclose(np.abs(m.heading), math.pi)

    def test_mirror_agent_preserves_kind(self):
        a = Agent("p", "pedestrian", 0.5, 0.5, still_traj(1, 1, 2.0))
        assert mirror_agent(a).kind == "pedestrian"


def test_time_grid_endpoints():
    g = time_grid(3.9, 0.1)
    assert len(g) == 40
    assert g[0] == 0.0
    assert g[-1] == pytest.approx(3.9)
