"""Pedestrian trajectory predictors.

A predictor maps the recent past of every visible pedestrian (plus the
vehicle's own recent path and its projected next positions) to one Gaussian
per pedestrian per future step. Three implementations are provided: a
constant-velocity baseline, a replay oracle that reads the recorded future,
and a bridge to an external process speaking the prediction wire protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .core import Action, VehicleState, unicycle_step
from .scenario import Scenario
from .uncertainty import Gaussian2D, PredictedTrack


class PredictorError(RuntimeError):
    """A predictor could not produce a valid set of tracks."""


@dataclass(frozen=True)
class AvPose:
    """Vehicle pose sample as the predictor sees it."""

    px: float
    py: float
    theta: float
    v: float  # signed speed along heading, m/s


@dataclass(frozen=True)
class PedestrianHistory:
    """Recent positions of one pedestrian, oldest first, None where unseen."""

    id: str
    points: tuple[Optional[tuple[float, float]], ...]


@dataclass(frozen=True)
class PredictorInput:
    t: int  # current step index
    dt: float  # s per step
    horizon: int  # steps to predict (K)
    history: int  # history slots per agent (H)
    av_history: tuple[AvPose, ...]  # length H, oldest first
    av_projection: tuple[tuple[float, float], ...]  # length K
    peds: tuple[PedestrianHistory, ...]

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.history < 1:
            raise ValueError("history must be at least 1")
        if len(self.av_history) != self.history:
            raise ValueError("av_history length must equal the history setting")
        if len(self.av_projection) != self.horizon:
            raise ValueError("av_projection length must equal the horizon")
        for ped in self.peds:
            if len(ped.points) != self.history:
                raise ValueError(
                    f"pedestrian {ped.id} history length {len(ped.points)} != {self.history}"
                )


@dataclass(frozen=True)
class PredictorOutput:
    tracks: tuple[PredictedTrack, ...]
    fallback_ids: tuple[str, ...] = ()  # ids predicted by pure position hold


def validate_output(inp: PredictorInput, out: PredictorOutput) -> PredictorOutput:
    """Check a predictor reply against its request: same ids, full horizon."""
    want = [p.id for p in inp.peds]
    got = [t.ped_id for t in out.tracks]
    if sorted(want) != sorted(got):
        raise PredictorError(f"predicted ids {got} do not match requested ids {want}")
    for track in out.tracks:
        if len(track.steps) != inp.horizon:
            raise PredictorError(
                f"track for {track.ped_id} has {len(track.steps)} steps, "
                f"expected {inp.horizon}"
            )
    # reorder to the request order so downstream consumers can zip
    by_id = {t.ped_id: t for t in out.tracks}
    return PredictorOutput(
        tracks=tuple(by_id[i] for i in want),
        fallback_ids=out.fallback_ids,
    )


def project_av(current: VehicleState, last_action: Optional[Action],
               horizon: int, dt: float) -> tuple[tuple[float, float], ...]:
    """Project the vehicle forward by holding its previous action.

    Before the first step there is no previous action; the projection then
    holds the spawn position.
    """
    action = last_action if last_action is not None else Action(0.0, 0.0)
    out = []
    state = current
    for _ in range(horizon):
        state = unicycle_step(state, action, dt)
        out.append(state.position)
    return tuple(out)


def constant_velocity_predict(inp: PredictorInput, sigma0: float = 0.1,
                              growth: float = 0.05) -> PredictorOutput:
    """Extrapolate each pedestrian at its latest observed velocity.

    The velocity estimate is the finite difference of the last two observed
    points over their actual time gap, so occlusion gaps do not inflate it.
    Uncertainty is isotropic and grows linearly: sigma_k = sigma0 + k * growth.
    """
    if sigma0 <= 0:
        raise ValueError("sigma0 must be positive")
    if growth < 0:
        raise ValueError("growth must be non-negative")
    tracks = []
    for ped in inp.peds:
        seen = [(i, p) for i, p in enumerate(ped.points) if p is not None]
        if not seen:
            raise PredictorError(f"pedestrian {ped.id} has an empty history")
        last_i, last_p = seen[-1]
        if len(seen) >= 2:
            prev_i, prev_p = seen[-2]
            gap = (last_i - prev_i) * inp.dt
            vel = ((last_p[0] - prev_p[0]) / gap, (last_p[1] - prev_p[1]) / gap)
        else:
            vel = (0.0, 0.0)
        # steps since the last observation; zero when the pedestrian is
        # visible right now
        stale = (inp.history - 1) - last_i
        steps = []
        for k in range(1, inp.horizon + 1):
            ahead = (stale + k) * inp.dt
            sigma = sigma0 + growth * k
            steps.append(Gaussian2D.isotropic(
                last_p[0] + vel[0] * ahead, last_p[1] + vel[1] * ahead, sigma))
        tracks.append(PredictedTrack(ped_id=ped.id, steps=tuple(steps)))
    return PredictorOutput(tracks=tuple(tracks))


def ground_truth_predict(scenario: Scenario, ped_ids, t: int, horizon: int,
                         sigma_gt: float = 0.05,
                         dt: Optional[float] = None) -> PredictorOutput:
    """Read the recorded future as the prediction (oracle).

    Steps past a pedestrian's last recorded frame hold the last known
    position. A pedestrian with no recorded future at all gets a pure
    position-hold track and is reported in fallback_ids.
    """
    if sigma_gt <= 0:
        raise ValueError("sigma_gt must be positive")
    if dt is None:
        dt = 1.0 / scenario.fps
    tracks = []
    fallback = []
    for ped_id in ped_ids:
        if scenario.track(ped_id) is None:
            raise PredictorError(
                f"pedestrian {ped_id!r} is not in scenario {scenario.id!r}"
            )
        held = scenario.ped_position(ped_id, t * dt)
        if held is None:
            held = _last_known(scenario, ped_id, t * dt)
        observed_any = False
        steps = []
        for k in range(1, horizon + 1):
            pos = scenario.ped_position(ped_id, (t + k) * dt)
            if pos is not None:
                held = pos
                observed_any = True
            steps.append(Gaussian2D.isotropic(held[0], held[1], sigma_gt))
        if not observed_any:
            fallback.append(ped_id)
        tracks.append(PredictedTrack(ped_id=ped_id, steps=tuple(steps)))
    return PredictorOutput(tracks=tuple(tracks), fallback_ids=tuple(fallback))


def _last_known(scenario: Scenario, ped_id: str, time_s: float) -> tuple[float, float]:
    track = scenario.track(ped_id)
    if track is None:
        raise PredictorError(f"pedestrian {ped_id!r} is not in scenario {scenario.id!r}")
    frame = min(int(math.floor(time_s * scenario.fps)), track.last_frame)
    for f in range(frame, track.first_frame - 1, -1):
        pos = track.position_at_frame(f)
        if pos is not None:
            return pos
    raise PredictorError(f"pedestrian {ped_id!r} has no observation before t={time_s}")


class ConstantVelocityPredictor:
    """Constant-velocity extrapolation with linearly growing uncertainty."""

    name = "cv"

    def __init__(self, sigma0: float = 0.1, growth: float = 0.05):
        self.sigma0 = sigma0
        self.growth = growth

    def predict(self, inp: PredictorInput) -> PredictorOutput:
        return constant_velocity_predict(inp, self.sigma0, self.growth)


class GroundTruthPredictor:
    """Replay oracle bound to one scenario."""

    name = "gt"

    def __init__(self, scenario: Scenario, sigma_gt: float = 0.05):
        self.scenario = scenario
        self.sigma_gt = sigma_gt

    def predict(self, inp: PredictorInput) -> PredictorOutput:
        ids = [p.id for p in inp.peds]
        return ground_truth_predict(self.scenario, ids, inp.t, inp.horizon,
                                    self.sigma_gt, inp.dt)


class ExternalPredictor:
    """Bridge to an external predictor process over the prediction protocol.

    The endpoint is either "host:port" for TCP or "cmd:..." to spawn a
    subprocess and talk over its stdio. Requests on one connection are
    serialized; replies are validated before use.
    """

    name = "external"

    def __init__(self, endpoint: str, timeout: float = 10.0):
        from . import wire

        self.endpoint = endpoint
        self._transport = wire.open_endpoint(endpoint, timeout=timeout)

    def predict(self, inp: PredictorInput) -> PredictorOutput:
        from . import wire

        self._transport.send(wire.predictor_request_to_wire(inp))
        reply = self._transport.recv()
        if reply is None:
            raise PredictorError(f"predictor at {self.endpoint} closed the connection")
        return validate_output(inp, wire.predictor_reply_from_wire(reply))

    def close(self) -> None:
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def external_predict(inp: PredictorInput, endpoint: str,
                     timeout: float = 10.0) -> PredictorOutput:
    """One-shot convenience wrapper around ExternalPredictor."""
    with ExternalPredictor(endpoint, timeout=timeout) as predictor:
        return predictor.predict(inp)
