"""Shared domain types and unicycle kinematics.

Everything here is immutable and side-effect free; engine state lives in the
environment, not in these values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]. Idempotent."""
    w = math.remainder(theta, TWO_PI)  # IEEE remainder lands in [-pi, pi]
    if w <= -math.pi:
        w += TWO_PI
    return w


@dataclass(frozen=True)
class VehicleState:
    px: float  # m
    py: float  # m
    vx: float  # m/s
    vy: float  # m/s
    theta: float  # heading, rad, wrapped to (-pi, pi]
    radius: float  # m, > 0
    v_pref: float  # preferred speed, m/s, > 0
    gx: float  # goal x, m
    gy: float  # goal y, m

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"vehicle radius must be positive, got {self.radius}")
        if self.v_pref <= 0:
            raise ValueError(f"v_pref must be positive, got {self.v_pref}")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def position(self) -> tuple[float, float]:
        return (self.px, self.py)

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    def distance_to_goal(self) -> float:
        return math.hypot(self.gx - self.px, self.gy - self.py)


@dataclass(frozen=True)
class PedestrianState:
    id: str
    px: float  # m
    py: float  # m
    radius: float  # m, > 0

    def __post_init__(self):
        if not self.id:
            raise ValueError("pedestrian id must be non-empty")
        if self.radius <= 0:
            raise ValueError(f"pedestrian radius must be positive, got {self.radius}")

    @property
    def position(self) -> tuple[float, float]:
        return (self.px, self.py)


@dataclass(frozen=True)
class Action:
    v: float  # commanded speed for the step, m/s (negative = reverse)
    dtheta: float  # heading change applied at the start of the step, rad


@dataclass(frozen=True)
class Config:
    """Engine parameters. Defaults model a low-speed shuttle among pedestrians."""

    dt: float = 0.5  # s per control step
    v_max: float = 4.167  # m/s, 15 km/h
    v_min: float = -1.0  # m/s, reverse bound
    dtheta_rate: float = 0.2  # rad/s heading rate bound
    av_radius: float = 1.0  # m
    ped_radius: float = 0.3  # m
    personal_space: float = 1.0  # m, danger zone width beyond contact
    sensor_range: float = 15.0  # m, pedestrian visibility radius
    goal_radius: float = 2.0  # m, goal region radius
    horizon: int = 6  # prediction/planning steps (K)
    history: int = 6  # observation history length (H)
    delta: float = 0.1  # collision probability threshold for the penalty
    r_goal: float = 10.0  # terminal reward at the goal
    r_collision: float = -20.0  # terminal reward on contact
    w_theta: float = 0.1  # action penalty weight on |dtheta|
    w_back: float = 0.25  # action penalty weight on reversing
    speed_dependent_danger: bool = True  # scale danger penalty with speed
    timeout_margin: float = 15.0  # s added to the reference duration
    loss_weight: float = 1.0  # Mahalanobis term weight in the combined loss
    gamma: float = 0.99  # discount, recorded for consumers; unused internally

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (self.v_min < 0 < self.v_max):
            raise ValueError("speed bounds must satisfy v_min < 0 < v_max")
        if self.dtheta_rate <= 0:
            raise ValueError("dtheta_rate must be positive")
        for name in ("av_radius", "ped_radius", "personal_space", "sensor_range",
                     "goal_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.history < 1:
            raise ValueError("history must be at least 1")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if self.w_theta < 0 or self.w_back < 0:
            raise ValueError("action penalty weights must be non-negative")
        if self.timeout_margin < 0:
            raise ValueError("timeout_margin must be non-negative")
        if self.loss_weight < 0:
            raise ValueError("loss_weight must be non-negative")

    @property
    def dtheta_max(self) -> float:
        """Per-step heading change bound, rad."""
        return self.dtheta_rate * self.dt

    @property
    def combined_radius(self) -> float:
        """Contact radius plus personal space: the keep-out disc radius."""
        return self.ped_radius + self.av_radius + self.personal_space

    @property
    def contact_radius(self) -> float:
        """Center distance at which the vehicle touches a pedestrian."""
        return self.ped_radius + self.av_radius


def unicycle_step(state: VehicleState, action: Action, dt: float) -> VehicleState:
    """Advance the vehicle one step under a speed / heading-change command.

    The heading change is applied first, then the vehicle moves dt seconds at
    the commanded speed along the new heading. The caller is responsible for
    clamping the action to its bounds.
    """
    theta = wrap_angle(state.theta + action.dtheta)
    vx = action.v * math.cos(theta)
    vy = action.v * math.sin(theta)
    return VehicleState(
        px=state.px + vx * dt,
        py=state.py + vy * dt,
        vx=vx,
        vy=vy,
        theta=theta,
        radius=state.radius,
        v_pref=state.v_pref,
        gx=state.gx,
        gy=state.gy,
    )


def min_separation(av: VehicleState, peds) -> float:
    """Smallest surface-to-surface distance to any pedestrian.

    Negative means overlap; +inf when no pedestrians are present.
    """
    best = math.inf
    for ped in peds:
        d = math.hypot(ped.px - av.px, ped.py - av.py) - av.radius - ped.radius
        if d < best:
            best = d
    return best


def clamp_action(raw: Action, cfg: Config) -> Action:
    """Clip an action to the speed and per-step heading-change bounds.

    Raises ValueError on NaN components: a NaN command is a policy bug and
    silently clipping it would hide the fault.
    """
    if math.isnan(raw.v) or math.isnan(raw.dtheta):
        raise ValueError(f"invalid policy output: {raw}")
    v = min(max(raw.v, cfg.v_min), cfg.v_max)
    dmax = cfg.dtheta_max
    dtheta = min(max(raw.dtheta, -dmax), dmax)
    return Action(v=v, dtheta=dtheta)
