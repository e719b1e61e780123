"""Planar unicycle integration and frame transforms.

The integrator applies the exact forward-Euler recurrence

    x_{t+1} = x_t + v_t * cos(theta_t) * dt
    y_{t+1} = y_t + v_t * sin(theta_t) * dt
    theta_{t+1} = theta_t + k_t * v_t * dt

from (0, 0, 0). This discrete recurrence is the contract, not an ODE to
be approximated better, so no higher-order scheme is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .records import ActionState, Trajectory

# Below this speed a yaw difference is noise, not curvature.
STATIONARY_SPEED_FLOOR = 0.1

QUATERNION_NORM_TOL = 1e-6


def wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    r = math.remainder(angle, math.tau)
    if r <= -math.pi:
        r += math.tau
    return r


@dataclass(frozen=True)
class EgoPose:
    """Planar pose in the global frame; yaw from +x, in (-pi, pi]."""

    x: float
    y: float
    yaw: float
    timestamp_us: int = 0


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.5
    horizon_steps: int = 6

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.horizon_steps < 1:
            raise ValueError(f"horizon_steps must be >= 1, got {self.horizon_steps}")


def integrate_states(
    actions, config: IntegratorConfig = IntegratorConfig()
) -> list[tuple[float, float, float]]:
    """Full (x, y, yaw) state sequence, origin state included."""
    actions = tuple(actions)
    if len(actions) != config.horizon_steps:
        raise ValueError(
            f"expected {config.horizon_steps} actions, got {len(actions)}"
        )
    for i, a in enumerate(actions):
        if not (math.isfinite(a.speed) and math.isfinite(a.curvature)):
            raise ValueError(f"non-finite action at index {i}")
    x, y, theta = 0.0, 0.0, 0.0
    states = [(x, y, theta)]
    dt = config.dt
    for a in actions:
        x = x + a.speed * math.cos(theta) * dt
        y = y + a.speed * math.sin(theta) * dt
        theta = theta + a.curvature * a.speed * dt
        states.append((x, y, theta))
    return states


def integrate(actions, config: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """Positions after each step, excluding the (0, 0) origin."""
    states = integrate_states(actions, config)
    return Trajectory(
        points=tuple((x, y) for x, y, _ in states[1:]), tick=config.dt
    )


def yaw_from_quaternion(q) -> float:
    """Heading about +z from a unit (w, x, y, z) quaternion."""
    w, x, y, z = q
    norm = math.sqrt(w * w + x * x + y * y + z * z)
    if abs(norm - 1.0) > QUATERNION_NORM_TOL:
        raise ValueError(f"non-unit quaternion, |q| = {norm}")
    return wrap_angle(math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)))


def global_to_ego(reference: EgoPose, global_points) -> list[tuple[float, float]]:
    """Rotate/translate global points into the reference pose's frame.

    Ego +x is the vehicle's forward direction at the reference pose.
    """
    c = math.cos(reference.yaw)
    s = math.sin(reference.yaw)
    out = []
    for px, py in global_points:
        dx = px - reference.x
        dy = py - reference.y
        out.append((c * dx + s * dy, -s * dx + c * dy))
    return out


def ego_to_global(reference: EgoPose, ego_points) -> list[tuple[float, float]]:
    """Inverse of global_to_ego."""
    c = math.cos(reference.yaw)
    s = math.sin(reference.yaw)
    return [
        (reference.x + c * ex - s * ey, reference.y + s * ex + c * ey)
        for ex, ey in ego_points
    ]


def history_from_poses(poses, dt: float = 0.5) -> tuple[ActionState, ...]:
    """Derive (speed, curvature) actions from consecutive poses.

    For each pose pair: speed is planar displacement over dt, curvature
    is the wrapped yaw difference over (speed * dt), forced to zero below
    the stationary floor. Output is oldest to newest. Poses must be
    time-ordered with spacing within 20% of dt.
    """
    poses = list(poses)
    if len(poses) < 2:
        raise ValueError("need at least 2 poses")
    for a, b in zip(poses, poses[1:]):
        spacing = (b.timestamp_us - a.timestamp_us) / 1e6
        if spacing <= 0:
            raise ValueError(
                f"poses not time-ordered at timestamp {b.timestamp_us}"
            )
        if abs(spacing - dt) > 0.2 * dt:
            raise ValueError(
                f"pose spacing {spacing:.3f}s deviates more than 20% from dt={dt}"
            )
    actions = []
    for a, b in zip(poses, poses[1:]):
        speed = math.hypot(b.x - a.x, b.y - a.y) / dt
        if speed < STATIONARY_SPEED_FLOOR:
            curvature = 0.0
        else:
            curvature = wrap_angle(b.yaw - a.yaw) / (speed * dt)
        actions.append(ActionState(speed=speed, curvature=curvature))
    return tuple(actions)
