from __future__ import annotations

import math
import random

import pytest

from drivebench.kinematics import (
    EgoPose,
    IntegratorConfig,
    ego_to_global,
    global_to_ego,
    history_from_poses,
    integrate,
    integrate_states,
    wrap_angle,
    yaw_from_quaternion,
)
from drivebench.records import ActionState

from oracles import mp_integrate, scipy_yaw

# The worked six-command deceleration example exercised throughout.
DECEL_COMMANDS = [
    ActionState(6.0, -0.001),
    ActionState(5.0, -0.001),
    ActionState(4.0, 0.0),
    ActionState(3.5, 0.0),
    ActionState(3.0, 0.0),
    ActionState(3.0, 0.0),
]


class TestIntegrate:
    def test_straight_line_matches_closed_form(self):
        actions = [ActionState(2.0, 0.0)] * 6
        trajectory = integrate(actions)
        assert trajectory.points == tuple((float(i), 0.0) for i in range(1, 7))

    def test_deceleration_example_first_steps(self):
        states = integrate_states(DECEL_COMMANDS)
        x1, y1, th1 = states[1]
        assert (x1, y1, th1) == (3.0, 0.0, -0.003)
        x2, y2, th2 = states[2]
        assert x2 == pytest.approx(3 + 2.5 * math.cos(-0.003), abs=1e-15)
        assert y2 == pytest.approx(2.5 * math.sin(-0.003), abs=1e-15)
        assert th2 == pytest.approx(-0.0055, abs=1e-15)

    def test_deceleration_example_matches_high_precision_oracle(self):
        expected = mp_integrate([(a.speed, a.curvature) for a in DECEL_COMMANDS])
        got = integrate(DECEL_COMMANDS).points
        for (gx, gy), (ex, ey) in zip(got, expected):
            assert gx == pytest.approx(ex, abs=1e-9)
            assert gy == pytest.approx(ey, abs=1e-9)

    def test_single_step_is_axis_aligned(self):
        trajectory = integrate(
            [ActionState(1.0, 1.0)], IntegratorConfig(dt=0.5, horizon_steps=1)
        )
        assert trajectory.points == ((0.5, 0.0),)
        states = integrate_states(
            [ActionState(1.0, 1.0)], IntegratorConfig(dt=0.5, horizon_steps=1)
        )
        assert states[-1][2] == pytest.approx(0.5)

    def test_random_inputs_match_oracle(self):
        rng = random.Random(13)
        for _ in range(50):
            actions = [
                ActionState(rng.uniform(0, 20), rng.uniform(-0.5, 0.5))
                for _ in range(6)
            ]
            expected = mp_integrate([(a.speed, a.curvature) for a in actions])
            got = integrate(actions).points
            for (gx, gy), (ex, ey) in zip(got, expected):
                assert gx == pytest.approx(ex, abs=1e-9)
                assert gy == pytest.approx(ey, abs=1e-9)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            integrate([ActionState(1.0, 0.0)] * 5)

    def test_non_finite_action_rejected(self):
        actions = [ActionState(math.inf, 0.0)] + [ActionState(1.0, 0.0)] * 5
        with pytest.raises(ValueError):
            integrate(actions)

    def test_zero_curvature_stays_on_axis(self):
        rng = random.Random(5)
        for _ in range(100):
            actions = [ActionState(rng.uniform(0, 25), 0.0) for _ in range(6)]
            points = integrate(actions).points
            xs = [x for x, _ in points]
            assert all(y == 0.0 for _, y in points)
            assert all(b >= a for a, b in zip(xs, xs[1:]))

    def test_path_length_never_exceeds_speed_budget(self):
        rng = random.Random(6)
        for _ in range(100):
            actions = [
                ActionState(rng.uniform(0, 20), rng.uniform(-1, 1)) for _ in range(6)
            ]
            points = [(0.0, 0.0)] + list(integrate(actions).points)
            path = sum(
                math.hypot(bx - ax, by - ay)
                for (ax, ay), (bx, by) in zip(points, points[1:])
            )
            budget = sum(a.speed * 0.5 for a in actions)
            assert path <= budget + 1e-12

    def test_config_validation(self):
        with pytest.raises(ValueError):
            IntegratorConfig(dt=0.0)
        with pytest.raises(ValueError):
            IntegratorConfig(horizon_steps=0)


class TestYawFromQuaternion:
    def test_identity(self):
        assert yaw_from_quaternion((1.0, 0.0, 0.0, 0.0)) == 0.0

    def test_quarter_turn(self):
        q = (math.cos(math.pi / 4), 0.0, 0.0, math.sin(math.pi / 4))
        assert yaw_from_quaternion(q) == pytest.approx(math.pi / 2, abs=1e-12)
        assert yaw_from_quaternion(q) == pytest.approx(scipy_yaw(*q), abs=1e-12)

    def test_half_turn(self):
        q = (0.0, 0.0, 0.0, 1.0)
        assert yaw_from_quaternion(q) == pytest.approx(math.pi, abs=1e-12)
        assert abs(yaw_from_quaternion(q)) == pytest.approx(
            abs(scipy_yaw(*q)), abs=1e-12
        )

    def test_random_z_rotations_match_scipy(self):
        rng = random.Random(11)
        for _ in range(200):
            yaw = rng.uniform(-math.pi + 1e-6, math.pi)
            q = (math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2))
            assert yaw_from_quaternion(q) == pytest.approx(yaw, abs=1e-12)
            assert yaw_from_quaternion(q) == pytest.approx(scipy_yaw(*q), abs=1e-12)

    def test_full_random_quaternions_match_scipy(self):
        rng = random.Random(12)
        for _ in range(200):
            raw = [rng.gauss(0, 1) for _ in range(4)]
            n = math.sqrt(sum(v * v for v in raw))
            w, x, y, z = (v / n for v in raw)
            assert yaw_from_quaternion((w, x, y, z)) == pytest.approx(
                scipy_yaw(w, x, y, z), abs=1e-9
            )

    def test_non_unit_rejected(self):
        with pytest.raises(ValueError):
            yaw_from_quaternion((1.0, 0.0, 0.0, 0.1))

    def test_result_in_wrap_range(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)


class TestFrameTransforms:
    def test_identity_pose(self):
        ref = EgoPose(0.0, 0.0, 0.0)
        assert global_to_ego(ref, [(5.0, 2.0)]) == [(5.0, 2.0)]

    def test_point_ahead_maps_to_forward_axis(self):
        ref = EgoPose(0.0, 0.0, math.pi / 2)
        (ex, ey), = global_to_ego(ref, [(0.0, 5.0)])
        assert ex == pytest.approx(5.0, abs=1e-12)
        assert ey == pytest.approx(0.0, abs=1e-12)

    def test_pure_translation(self):
        ref = EgoPose(10.0, 0.0, 0.0)
        assert global_to_ego(ref, [(10.0, 3.0)]) == [(0.0, 3.0)]

    def test_round_trip_is_rigid(self):
        rng = random.Random(21)
        for _ in range(300):
            ref = EgoPose(
                rng.uniform(-100, 100),
                rng.uniform(-100, 100),
                rng.uniform(-math.pi, math.pi),
            )
            p = (rng.uniform(-100, 100), rng.uniform(-100, 100))
            (back,) = ego_to_global(ref, global_to_ego(ref, [p]))
            assert back[0] == pytest.approx(p[0], abs=1e-12)
            assert back[1] == pytest.approx(p[1], abs=1e-12)


def _poses_along_x(step: float, yaw_step: float = 0.0, count: int = 7):
    return [
        EgoPose(x=step * i, y=0.0, yaw=wrap_angle(yaw_step * i), timestamp_us=i * 500_000)
        for i in range(count)
    ]


class TestHistoryFromPoses:
    def test_uniform_straight_motion(self):
        actions = history_from_poses(_poses_along_x(1.0), dt=0.5)
        assert len(actions) == 6
        for a in actions:
            assert a.speed == pytest.approx(2.0)
            assert a.curvature == 0.0

    def test_constant_turn(self):
        actions = history_from_poses(_poses_along_x(1.0, yaw_step=0.1), dt=0.5)
        for a in actions:
            assert a.speed == pytest.approx(2.0)
            assert a.curvature == pytest.approx(0.1)

    def test_stationary_guard(self):
        poses = [
            EgoPose(x=3.0, y=4.0, yaw=0.7, timestamp_us=i * 500_000) for i in range(7)
        ]
        actions = history_from_poses(poses, dt=0.5)
        assert all(a.speed == 0.0 and a.curvature == 0.0 for a in actions)

    def test_unordered_timestamps_rejected(self):
        poses = _poses_along_x(1.0)
        poses[3] = EgoPose(poses[3].x, 0.0, 0.0, timestamp_us=poses[2].timestamp_us)
        with pytest.raises(ValueError):
            history_from_poses(poses, dt=0.5)

    def test_spacing_violation_rejected(self):
        poses = _poses_along_x(1.0)
        poses[-1] = EgoPose(poses[-1].x, 0.0, 0.0, timestamp_us=poses[-2].timestamp_us + 700_000)
        with pytest.raises(ValueError):
            history_from_poses(poses, dt=0.5)

    def test_recovers_actions_from_integrated_poses(self):
        # Yaw steps beyond pi alias in wrapped poses, so keep the draw to
        # physical motion: |curvature| <= 1 and under a half-turn per tick.
        rng = random.Random(31)
        for _ in range(100):
            actions = []
            for _ in range(6):
                speed = rng.uniform(0.5, 15.0)
                k_max = min(1.0, 3.0 / (speed * 0.5))
                actions.append(ActionState(speed, rng.uniform(-k_max, k_max)))
            states = integrate_states(actions)
            poses = [
                EgoPose(x=x, y=y, yaw=wrap_angle(yaw), timestamp_us=i * 500_000)
                for i, (x, y, yaw) in enumerate(states)
            ]
            recovered = history_from_poses(poses, dt=0.5)
            for got, want in zip(recovered, actions):
                assert got.speed == pytest.approx(want.speed, abs=1e-9)
                assert got.curvature == pytest.approx(want.curvature, abs=1e-9)
