"""Episode execution and record keeping."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .core import Action, Config, clamp_action
from .env import CrowdNavEnv, JointObservation, StepOutcome
from .predictor import (ConstantVelocityPredictor, ExternalPredictor,
                        GroundTruthPredictor)
from .scenario import Scenario


@dataclass(frozen=True)
class StepLog:
    t: int
    px: float
    py: float
    vx: float
    vy: float
    theta: float
    v_cmd: float  # executed (clamped) action
    dtheta_cmd: float
    reward: float
    branch: str
    d_min: float  # +inf when no pedestrians present
    intrusion: bool  # inside personal space but not in contact
    planner_time: float  # s, wall clock around the policy call
    planner_feasible: Optional[bool]  # None for policies without a planner


@dataclass(frozen=True)
class EpisodeRecord:
    scenario_id: str
    terminal_kind: str  # goal | collision | timeout
    nav_time: float  # s, steps * dt
    path_length: float  # m, sum of executed displacements
    steps: tuple[StepLog, ...]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("an episode record needs at least one step")


class EpisodeError(RuntimeError):
    """A policy or predictor failed mid-episode."""

    def __init__(self, scenario_id: str, cause: BaseException):
        super().__init__(f"scenario {scenario_id!r}: {cause}")
        self.scenario_id = scenario_id
        self.cause = cause


class TrajectoryObserver:
    """Collects plot-ready rows: vehicle pose, pedestrians, predicted tracks."""

    FIELDS = ("kind", "step", "id", "k", "x", "y", "theta", "v", "dtheta",
              "reward", "d_min", "mx", "my", "sxx", "sxy", "syy")

    def __init__(self):
        self.rows: list[dict] = []

    def _observation_rows(self, obs: JointObservation):
        for ped in obs.peds:
            self.rows.append({"kind": "ped", "step": obs.t, "id": ped.id,
                              "x": repr(ped.px), "y": repr(ped.py)})
            for k, g in enumerate(ped.track.steps, start=1):
                self.rows.append({
                    "kind": "pred", "step": obs.t, "id": ped.id, "k": k,
                    "mx": repr(g.mx), "my": repr(g.my), "sxx": repr(g.sxx),
                    "sxy": repr(g.sxy), "syy": repr(g.syy)})

    def on_reset(self, obs: JointObservation):
        av = obs.av
        self.rows.append({"kind": "av", "step": obs.t, "x": repr(av.px),
                          "y": repr(av.py), "theta": repr(av.theta)})
        self._observation_rows(obs)

    def on_step(self, outcome: StepOutcome, executed: Action):
        obs = outcome.observation
        av = obs.av
        d_min = outcome.breakdown.d_min
        self.rows.append({
            "kind": "av", "step": obs.t, "x": repr(av.px), "y": repr(av.py),
            "theta": repr(av.theta), "v": repr(executed.v),
            "dtheta": repr(executed.dtheta), "reward": repr(outcome.reward),
            "d_min": repr(d_min) if math.isfinite(d_min) else ""})
        self._observation_rows(obs)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.FIELDS, restval="")
            writer.writeheader()
            writer.writerows(self.rows)


def run_episode(env: CrowdNavEnv, policy,
                observer: Optional[TrajectoryObserver] = None) -> EpisodeRecord:
    """Run one episode to termination.

    Policy and predictor exceptions are wrapped in EpisodeError; the engine
    never swallows them. Planner wall time is measured here, around the
    policy call, so it covers the full observation-to-action path.
    """
    cfg = env.cfg
    try:
        obs = env.reset()
    except Exception as exc:
        raise EpisodeError(env.scenario.id, exc) from exc
    if observer:
        observer.on_reset(obs)
    steps: list[StepLog] = []
    path_length = 0.0
    prev_pos = obs.av.position
    while True:
        t0 = time.perf_counter()
        try:
            action = policy(obs)
            executed = clamp_action(action, cfg)
            outcome = env.step(action)
        except Exception as exc:
            raise EpisodeError(env.scenario.id, exc) from exc
        planner_time = time.perf_counter() - t0
        solution = getattr(policy, "last_solution", None)
        feasible = solution.feasible if solution is not None else None
        av = outcome.observation.av
        path_length += math.hypot(av.px - prev_pos[0], av.py - prev_pos[1])
        prev_pos = av.position
        d_min = outcome.breakdown.d_min
        steps.append(StepLog(
            t=outcome.observation.t,
            px=av.px, py=av.py, vx=av.vx, vy=av.vy, theta=av.theta,
            v_cmd=executed.v, dtheta_cmd=executed.dtheta,
            reward=outcome.reward, branch=outcome.breakdown.branch,
            d_min=d_min,
            intrusion=0.0 <= d_min < cfg.personal_space,
            planner_time=planner_time,
            planner_feasible=feasible,
        ))
        if observer:
            observer.on_step(outcome, executed)
        if outcome.done:
            return EpisodeRecord(
                scenario_id=env.scenario.id,
                terminal_kind=outcome.terminal_kind,
                nav_time=len(steps) * cfg.dt,
                path_length=path_length,
                steps=tuple(steps),
            )
        obs = outcome.observation


def record_to_dict(rec: EpisodeRecord) -> dict:
    return {
        "scenario_id": rec.scenario_id,
        "terminal_kind": rec.terminal_kind,
        "nav_time": rec.nav_time,
        "path_length": rec.path_length,
        "steps": [
            {
                "t": s.t, "px": s.px, "py": s.py, "vx": s.vx, "vy": s.vy,
                "theta": s.theta, "v_cmd": s.v_cmd, "dtheta_cmd": s.dtheta_cmd,
                "reward": s.reward, "branch": s.branch,
                "d_min": s.d_min if math.isfinite(s.d_min) else None,
                "intrusion": s.intrusion,
                "planner_time": s.planner_time,
                "planner_feasible": s.planner_feasible,
            }
            for s in rec.steps
        ],
    }


def record_from_dict(data: dict) -> EpisodeRecord:
    steps = tuple(
        StepLog(
            t=int(s["t"]), px=s["px"], py=s["py"], vx=s["vx"], vy=s["vy"],
            theta=s["theta"], v_cmd=s["v_cmd"], dtheta_cmd=s["dtheta_cmd"],
            reward=s["reward"], branch=s["branch"],
            d_min=math.inf if s["d_min"] is None else s["d_min"],
            intrusion=bool(s["intrusion"]),
            planner_time=s["planner_time"],
            planner_feasible=s["planner_feasible"],
        )
        for s in data["steps"]
    )
    return EpisodeRecord(
        scenario_id=data["scenario_id"],
        terminal_kind=data["terminal_kind"],
        nav_time=data["nav_time"],
        path_length=data["path_length"],
        steps=steps,
    )


def make_predictor_factory(spec: str, sigma0: float = 0.1, growth: float = 0.05,
                           sigma_gt: float = 0.05) -> Callable[[Scenario], object]:
    """Predictor constructor per scenario, from a spec string.

    Known specs: cv, gt, external:<endpoint>. The ground truth predictor
    needs the scenario it will be asked about; the others ignore it.
    """
    if spec == "cv":
        return lambda scenario: ConstantVelocityPredictor(sigma0=sigma0, growth=growth)
    if spec == "gt":
        return lambda scenario: GroundTruthPredictor(scenario, sigma_gt=sigma_gt)
    if spec.startswith("external:"):
        endpoint = spec[len("external:"):]
        return lambda scenario: ExternalPredictor(endpoint)
    raise ValueError(f"unknown predictor spec {spec!r}")


def evaluate_scenarios(scenarios, policy, predictor_factory, cfg: Config,
                       on_episode=None) -> tuple[list[EpisodeRecord], list[tuple[str, str]]]:
    """Run the policy over a list of scenarios.

    Returns (records, errors); an errored episode produces no record. The
    optional on_episode(scenario, record, observer) hook runs after each
    completed episode, for file output.
    """
    records: list[EpisodeRecord] = []
    errors: list[tuple[str, str]] = []
    for scenario in scenarios:
        env = CrowdNavEnv(scenario, predictor_factory(scenario), cfg)
        observer = TrajectoryObserver() if on_episode else None
        try:
            rec = run_episode(env, policy, observer)
        except EpisodeError as exc:
            errors.append((scenario.id, str(exc)))
            continue
        records.append(rec)
        if on_episode:
            on_episode(scenario, rec, observer)
    return records, errors
