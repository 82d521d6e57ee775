"""Policies: scripted baselines, the MPC planner wrapper, external bridges."""

from __future__ import annotations

from typing import Optional

from .core import Action, Config
from .env import JointObservation
from .mpc import (MpcProblem, MpcSolution, MpcWeights, SolverParams, solve)
from .uncertainty import PredictedTrack


class StraightPolicy:
    """Full throttle, no turning. Useful as a worst-case baseline."""

    name = "straight"

    def __init__(self, cfg: Config):
        self.cfg = cfg

    def __call__(self, obs: JointObservation) -> Action:
        return Action(v=self.cfg.v_max, dtheta=0.0)


class StopPolicy:
    """Never moves. Times out every episode; exercises the clock."""

    name = "stop"

    def __call__(self, obs: JointObservation) -> Action:
        return Action(v=0.0, dtheta=0.0)


def problem_from_observation(obs: JointObservation, variant: str,
                             weights: MpcWeights, cfg: Config) -> MpcProblem:
    """Build a planning problem from an observation.

    Tracks shorter than the planning horizon are padded by holding their
    last Gaussian (the pedestrian is assumed to stay put); longer ones are
    truncated.
    """
    tracks = []
    for ped in obs.peds:
        steps = ped.track.steps
        if len(steps) < cfg.horizon:
            steps = steps + (steps[-1],) * (cfg.horizon - len(steps))
        elif len(steps) > cfg.horizon:
            steps = steps[: cfg.horizon]
        tracks.append(PredictedTrack(ped_id=ped.track.ped_id, steps=steps))
    return MpcProblem(
        start=obs.av, goal=(obs.av.gx, obs.av.gy), tracks=tuple(tracks),
        variant=variant, weights=weights, cfg=cfg)


def mpc_policy(obs: JointObservation, variant: str,
               weights: MpcWeights = MpcWeights(), cfg: Config = Config(),
               params: SolverParams = SolverParams()) -> Action:
    """One-shot planner call: solve the horizon, return the first action."""
    problem = problem_from_observation(obs, variant, weights, cfg)
    return solve(problem, params).actions[0]


class MpcPolicy:
    """Receding-horizon wrapper around the sampling solver.

    Re-solves from scratch every step with the same seed, so a rollout is a
    deterministic function of the scenario and configuration. The latest
    solution is kept for logging (feasibility, solver stats).
    """

    def __init__(self, variant: str, weights: MpcWeights = MpcWeights(),
                 cfg: Config = Config(), params: SolverParams = SolverParams()):
        self.variant = variant
        self.weights = weights
        self.cfg = cfg
        self.params = params
        self.last_solution: Optional[MpcSolution] = None

    @property
    def name(self) -> str:
        return f"mpc_{self.variant}"

    def __call__(self, obs: JointObservation) -> Action:
        if obs.av.distance_to_goal() <= 1e-12:
            # degenerate spawn on the goal; the episode is already over
            self.last_solution = None
            return Action(v=0.0, dtheta=0.0)
        problem = problem_from_observation(obs, self.variant, self.weights, self.cfg)
        solution = solve(problem, self.params)
        self.last_solution = solution
        return solution.actions[0]


class ExternalPolicy:
    """Bridge to an external planner speaking the action wire protocol."""

    name = "external"

    def __init__(self, endpoint: str, timeout: float = 10.0):
        from . import wire

        self.endpoint = endpoint
        self._transport = wire.open_endpoint(endpoint, timeout=timeout)
        self.last_solution = None

    def __call__(self, obs: JointObservation) -> Action:
        from . import wire

        self._transport.send({"type": "act",
                              "observation": wire.observation_to_wire(obs)})
        reply = self._transport.recv()
        if reply is None:
            raise RuntimeError(f"planner at {self.endpoint} closed the connection")
        if reply.get("type") != "action":
            raise RuntimeError(f"planner sent {reply.get('type')!r}, expected 'action'")
        return Action(v=float(reply["v"]), dtheta=float(reply["dtheta"]))

    def close(self) -> None:
        self._transport.close()


_MPC_SPECS = {
    "mpc_ed_hard": "ed_hard",
    "mpc_ed_soft": "ed_soft",
    "mpc_md": "md_hard",
}


def make_policy(spec: str, cfg: Config, weights: MpcWeights = MpcWeights(),
                params: SolverParams = SolverParams()):
    """Instantiate a policy from its name.

    Known specs: mpc_ed_hard, mpc_ed_soft, mpc_md, straight, stop,
    external:<endpoint>.
    """
    if spec in _MPC_SPECS:
        return MpcPolicy(_MPC_SPECS[spec], weights=weights, cfg=cfg, params=params)
    if spec == "straight":
        return StraightPolicy(cfg)
    if spec == "stop":
        return StopPolicy()
    if spec.startswith("external:"):
        return ExternalPolicy(spec[len("external:"):])
    raise ValueError(f"unknown planner spec {spec!r}")
