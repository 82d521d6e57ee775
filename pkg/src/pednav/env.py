"""Replay navigation environment.

The vehicle moves under unicycle kinematics through a recorded pedestrian
scene. Pedestrians follow their recording exactly; the episode ends at the
goal, on contact, or when the time budget runs out. Rewards combine progress,
proximity penalties, and an anticipatory penalty driven by the predictor.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

from .core import (Action, Config, VehicleState, clamp_action, min_separation,
                   unicycle_step)
from .predictor import (AvPose, PedestrianHistory, PredictorInput, project_av,
                        validate_output)
from .scenario import Scenario
from .uncertainty import PredictedTrack, collision_probability

TERMINAL_KINDS = ("running", "goal", "collision", "timeout")


@dataclass(frozen=True)
class ObservedPedestrian:
    """A pedestrian inside sensor range, with its predicted track."""

    id: str
    px: float
    py: float
    track: PredictedTrack


@dataclass(frozen=True)
class JointObservation:
    t: int
    av: VehicleState
    peds: tuple[ObservedPedestrian, ...]  # ordered by id

    @property
    def visible_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.peds)

    @property
    def tracks(self) -> tuple[PredictedTrack, ...]:
        return tuple(p.track for p in self.peds)


@dataclass(frozen=True)
class RewardBreakdown:
    branch: str  # goal | collision | danger | progress
    r_progress: float
    r_pred: float
    r_action: float
    r_danger: float
    danger: bool
    d_min: float  # +inf with no pedestrians present


@dataclass(frozen=True)
class StepOutcome:
    observation: JointObservation
    reward: float
    done: bool
    terminal_kind: str  # one of TERMINAL_KINDS
    breakdown: RewardBreakdown


def prediction_penalty(p_av, tracks, cfg: Config) -> float:
    """Anticipatory penalty from predicted collision probabilities.

    A predicted step whose collision probability exceeds cfg.delta charges
    half the collision penalty per step of lookahead: r_collision / 2^k for
    the earliest firing step k. The worst pedestrian sets the penalty; 0 when
    nothing fires. Always <= 0.
    """
    worst = 0.0
    for track in tracks:
        term = 0.0
        for k, g in enumerate(track.steps, start=1):
            if collision_probability(p_av, g, cfg.combined_radius) > cfg.delta:
                # the earliest firing step dominates the later ones
                term = cfg.r_collision / (2.0 ** k)
                break
        if term < worst:
            worst = term
    return worst


def compute_reward(prev: VehicleState, cur: VehicleState, action: Action,
                   tracks, peds, cfg: Config) -> tuple[float, RewardBreakdown]:
    """Reward for the transition prev -> cur under the clamped action.

    Branches, first match wins:
      goal      reached the goal region
      collision any pedestrian overlaps the vehicle
      danger    inside the personal space, scaled penalty
      progress  goal progress plus anticipatory and action penalties

    The anticipatory term uses the tracks attached to the pre-step
    observation, evaluated at the pre-step vehicle position, so it is a
    property of the state the action was chosen in.
    """
    d_min = min_separation(cur, peds)
    if cur.distance_to_goal() <= cfg.goal_radius:
        return cfg.r_goal, RewardBreakdown(
            branch="goal", r_progress=0.0, r_pred=0.0, r_action=0.0,
            r_danger=0.0, danger=False, d_min=d_min)
    if d_min < 0.0:
        return cfg.r_collision, RewardBreakdown(
            branch="collision", r_progress=0.0, r_pred=0.0, r_action=0.0,
            r_danger=0.0, danger=False, d_min=d_min)
    if d_min < cfg.personal_space:
        scale = 1.0 + cur.speed / cfg.v_max if cfg.speed_dependent_danger else 1.0
        r_danger = cfg.r_collision * scale * (cfg.personal_space - d_min) / cfg.personal_space
        return r_danger, RewardBreakdown(
            branch="danger", r_progress=0.0, r_pred=0.0, r_action=0.0,
            r_danger=r_danger, danger=True, d_min=d_min)
    r_progress = prev.distance_to_goal() - cur.distance_to_goal()
    r_pred = prediction_penalty(prev.position, tracks, cfg)
    r_action = -cfg.w_theta * abs(action.dtheta) - cfg.w_back * max(0.0, -action.v)
    reward = r_progress + r_pred + r_action
    return reward, RewardBreakdown(
        branch="progress", r_progress=r_progress, r_pred=r_pred,
        r_action=r_action, r_danger=0.0, danger=False, d_min=d_min)


def build_observation(av: VehicleState, t: int, scenario: Scenario, predictor,
                      cfg: Config, last_action: Optional[Action],
                      av_states) -> JointObservation:
    """Assemble the joint observation at step t.

    Only pedestrians within sensor range are observed and predicted.
    Histories are sampled at the previous step times; entries before a
    pedestrian appeared (or before the episode started) are None.
    """
    now = t * cfg.dt
    visible = []
    for ped in scenario.peds_at(now):
        if math.hypot(ped.px - av.px, ped.py - av.py) <= cfg.sensor_range:
            visible.append(ped)

    histories = []
    for ped in visible:
        points = []
        for h in range(cfg.history - 1, 0, -1):
            past = (t - h) * cfg.dt
            points.append(scenario.ped_position(ped.id, past) if past >= 0 else None)
        points.append(ped.position)
        histories.append(PedestrianHistory(id=ped.id, points=tuple(points)))

    states = list(av_states)
    while len(states) < cfg.history:
        states.insert(0, states[0])
    poses = tuple(
        AvPose(px=s.px, py=s.py, theta=s.theta,
               v=s.vx * math.cos(s.theta) + s.vy * math.sin(s.theta))
        for s in states[-cfg.history:]
    )

    inp = PredictorInput(
        t=t, dt=cfg.dt, horizon=cfg.horizon, history=cfg.history,
        av_history=poses,
        av_projection=project_av(av, last_action, cfg.horizon, cfg.dt),
        peds=tuple(histories),
    )
    out = validate_output(inp, predictor.predict(inp))
    observed = tuple(
        ObservedPedestrian(id=ped.id, px=ped.px, py=ped.py, track=track)
        for ped, track in zip(visible, out.tracks)
    )
    return JointObservation(t=t, av=av, peds=observed)


class CrowdNavEnv:
    """Deterministic replay environment for one scenario."""

    def __init__(self, scenario: Scenario, predictor, cfg: Config = Config()):
        self.scenario = scenario
        self.predictor = predictor
        self.cfg = cfg
        self._av: Optional[VehicleState] = None
        self._obs: Optional[JointObservation] = None
        self._t = 0
        self._done = False
        self._last_action: Optional[Action] = None
        self._av_states: deque = deque(maxlen=cfg.history)

    @property
    def done(self) -> bool:
        return self._done

    @property
    def t(self) -> int:
        return self._t

    def reset(self) -> JointObservation:
        start = self.scenario.start
        theta = 0.0
        for point in self.scenario.ego_reference[1:]:
            if point != start:
                theta = math.atan2(point[1] - start[1], point[0] - start[0])
                break
        goal = self.scenario.goal
        av = VehicleState(
            px=start[0], py=start[1], vx=0.0, vy=0.0, theta=theta,
            radius=self.cfg.av_radius, v_pref=self.cfg.v_max,
            gx=goal[0], gy=goal[1],
        )
        self._av = av
        self._t = 0
        self._done = False
        self._last_action = None
        self._av_states = deque([av], maxlen=self.cfg.history)
        self._obs = build_observation(av, 0, self.scenario, self.predictor,
                                      self.cfg, None, self._av_states)
        return self._obs

    def step(self, action: Action) -> StepOutcome:
        if self._av is None:
            raise RuntimeError("step() before reset()")
        if self._done:
            raise RuntimeError("step() after the episode ended; call reset()")
        cfg = self.cfg
        clamped = clamp_action(action, cfg)
        prev = self._av
        prev_obs = self._obs
        cur = unicycle_step(prev, clamped, cfg.dt)
        t = self._t + 1
        elapsed = t * cfg.dt
        peds = self.scenario.peds_at(elapsed)
        reward, breakdown = compute_reward(
            prev, cur, clamped, prev_obs.tracks, peds, cfg)

        if breakdown.branch == "goal":
            kind = "goal"
        elif breakdown.branch == "collision":
            kind = "collision"
        elif elapsed >= self.scenario.time_budget:
            kind = "timeout"
        else:
            kind = "running"
        done = kind != "running"

        self._av = cur
        self._t = t
        self._done = done
        self._last_action = clamped
        self._av_states.append(cur)
        obs = build_observation(cur, t, self.scenario, self.predictor, cfg,
                                clamped, self._av_states)
        self._obs = obs
        return StepOutcome(observation=obs, reward=reward, done=done,
                           terminal_kind=kind, breakdown=breakdown)
