"""Planning problem types, cost terms, and constraint checking.

The planner minimizes, over an action sequence a_0..a_{K-1} rolled through
unicycle kinematics from the current state:

    sum_k  a_k^T Q_a a_k                       action effort
    sum_k  Q_p (|p_k - goal| / |p_0 - goal|)^2 normalized goal tracking,
                                               the K-th term being terminal
    sum_k  Q_ED sum_i 1 / d_i(p_k)^2           clearance, intermediate steps

subject to one of three separation constraint families against the
predicted pedestrian Gaussians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..core import Action, Config, VehicleState
from ..uncertainty import Gaussian2D, PredictedTrack, mahalanobis, md_squared_threshold

VARIANTS = ("ed_hard", "ed_soft", "md_hard")

# A constraint counts as satisfied when its worst shortfall is below this.
CONSTRAINT_TOL = 1e-6

# Guard for the inverse-square clearance cost at zero distance.
DIST_EPS = 1e-6


@dataclass(frozen=True)
class MpcWeights:
    q_v: float = 0.05  # speed effort
    q_dtheta: float = 1.0  # heading effort
    q_p: float = 10.0  # goal tracking
    q_ed: float = 0.5  # clearance
    slack_bound: float = 1.0  # m, max keep-out relaxation (ed_soft)

    def __post_init__(self):
        for name in ("q_v", "q_dtheta", "q_p", "q_ed", "slack_bound"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class SolverParams:
    n_samples: int = 256  # fresh samples per iteration
    n_elites: int = 32
    n_iters: int = 8
    seed: int = 0
    std_floor: float = 1e-4  # keeps the sampling distribution alive

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        if not (1 <= self.n_elites <= self.n_samples):
            raise ValueError("n_elites must lie in [1, n_samples]")
        if self.n_iters < 1:
            raise ValueError("n_iters must be at least 1")
        if self.std_floor <= 0:
            raise ValueError("std_floor must be positive")


@dataclass(frozen=True)
class MpcProblem:
    start: VehicleState
    goal: tuple[float, float]
    tracks: tuple[PredictedTrack, ...]
    variant: str
    weights: MpcWeights
    cfg: Config

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        for track in self.tracks:
            if len(track.steps) != self.cfg.horizon:
                raise ValueError(
                    f"track {track.ped_id} has {len(track.steps)} steps, "
                    f"planning horizon is {self.cfg.horizon}"
                )


@dataclass(frozen=True)
class SolverStats:
    iterations: int
    samples_evaluated: int
    wall_time: float  # s
    elite_mean_costs: tuple[float, ...]  # per iteration, non-increasing


@dataclass(frozen=True)
class MpcSolution:
    actions: tuple[Action, ...]
    planned_positions: tuple[tuple[float, float], ...]
    cost: float
    feasible: bool
    violation: float  # worst constraint shortfall of the returned plan
    slack_used: float  # ed_soft only, else 0
    stats: SolverStats


def stage_cost(action: Action, position, ped_positions, weights: MpcWeights,
               goal, p0_dist: float) -> float:
    """Single-step cost at a rolled position.

    ped_positions are the predicted means for this step; p0_dist is the
    start-to-goal distance used to normalize goal tracking.
    """
    if p0_dist <= 0:
        raise ValueError("p0_dist must be positive")
    cost = weights.q_v * action.v ** 2 + weights.q_dtheta * action.dtheta ** 2
    dg = math.hypot(position[0] - goal[0], position[1] - goal[1]) / p0_dist
    cost += weights.q_p * dg * dg
    for ped in ped_positions:
        d = max(math.hypot(position[0] - ped[0], position[1] - ped[1]), DIST_EPS)
        cost += weights.q_ed / (d * d)
    return cost


def terminal_cost(position, goal, start_position, q_p: float) -> float:
    """Goal tracking cost at the end of the horizon."""
    p0 = math.hypot(start_position[0] - goal[0], start_position[1] - goal[1])
    if p0 <= 0:
        raise ValueError("start coincides with the goal; terminal cost is undefined")
    dg = math.hypot(position[0] - goal[0], position[1] - goal[1]) / p0
    return q_p * dg * dg


def md_floor(g: Gaussian2D, cfg: Config) -> float:
    """Mahalanobis distance a plan must keep from this Gaussian."""
    return math.sqrt(md_squared_threshold(g, cfg.combined_radius, cfg.delta))


def check_constraints(planned_positions, tracks, variant: str, cfg: Config,
                      slack: float = 0.0) -> tuple[bool, float]:
    """Verify a plan against the predicted tracks.

    Returns (feasible, worst_violation). Violations are meters for the
    Euclidean variants and Mahalanobis units for md_hard. For ed_soft the
    caller passes the slack allowance the plan claims to use.

    This is an independent reimplementation of the kernel's constraint
    logic, kept simple on purpose so it can vouch for the fast path.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    if slack < 0:
        raise ValueError("slack must be non-negative")
    for track in tracks:
        if len(track.steps) != len(planned_positions):
            raise ValueError(
                f"track {track.ped_id} has {len(track.steps)} steps, "
                f"plan has {len(planned_positions)}"
            )
    worst = 0.0
    keepout = cfg.combined_radius
    if variant == "ed_soft":
        # the relaxed keep-out may never drop below physical contact
        keepout = max(cfg.combined_radius - slack, cfg.contact_radius)
    for track in tracks:
        for pos, g in zip(planned_positions, track.steps):
            if variant == "md_hard":
                shortfall = md_floor(g, cfg) - mahalanobis(pos, g)
            else:
                d = math.hypot(pos[0] - g.mx, pos[1] - g.my)
                shortfall = keepout - d
            if shortfall > worst:
                worst = shortfall
    return worst <= CONSTRAINT_TOL, worst
