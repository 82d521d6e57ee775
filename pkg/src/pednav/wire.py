"""Newline-delimited JSON transports and message codecs.

One JSON object per line, UTF-8, strict JSON (no NaN/Infinity on the wire;
the occasional infinite quantity is mapped to null by its codec). Floats are
emitted with Python's shortest round-trip repr, so a value parsed back on
either side is bit-identical to the one that was sent.
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
from typing import Optional

from .core import VehicleState
from .env import JointObservation, ObservedPedestrian
from .predictor import (AvPose, PedestrianHistory, PredictorError,
                        PredictorInput, PredictorOutput)
from .uncertainty import Gaussian2D, PredictedTrack


class WireError(RuntimeError):
    """Transport failure or a malformed message."""


def dumps_line(obj: dict) -> bytes:
    return (json.dumps(obj, separators=(",", ":"), sort_keys=True,
                       allow_nan=False) + "\n").encode("utf-8")


def parse_line(line: bytes) -> dict:
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(f"malformed message: {exc}") from exc
    if not isinstance(obj, dict):
        raise WireError(f"expected a JSON object, got {type(obj).__name__}")
    return obj


class SocketTransport:
    """Line transport over a connected stream socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._reader = sock.makefile("rb")

    def send(self, obj: dict) -> None:
        try:
            self._sock.sendall(dumps_line(obj))
        except OSError as exc:
            raise WireError(f"send failed: {exc}") from exc

    def recv(self) -> Optional[dict]:
        try:
            line = self._reader.readline()
        except (OSError, TimeoutError) as exc:
            raise WireError(f"receive failed: {exc}") from exc
        if not line:
            return None
        return parse_line(line)

    def close(self) -> None:
        try:
            self._reader.close()
        finally:
            self._sock.close()


class SubprocessTransport:
    """Line transport over a child process's stdio."""

    def __init__(self, cmd: list[str]):
        self._proc = subprocess.Popen(
            cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE)

    def send(self, obj: dict) -> None:
        try:
            self._proc.stdin.write(dumps_line(obj))
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise WireError(f"send to subprocess failed: {exc}") from exc

    def recv(self) -> Optional[dict]:
        line = self._proc.stdout.readline()
        if not line:
            return None
        return parse_line(line)

    def close(self) -> None:
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


def open_endpoint(endpoint: str, timeout: float = 10.0):
    """Connect to "host:port" over TCP or spawn "cmd:<command line>"."""
    if endpoint.startswith("cmd:"):
        return SubprocessTransport(shlex.split(endpoint[len("cmd:"):]))
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint {endpoint!r} is neither host:port nor cmd:...")
    try:
        sock = socket.create_connection((host, int(port)), timeout=timeout)
    except OSError as exc:
        raise WireError(f"cannot connect to {endpoint}: {exc}") from exc
    sock.settimeout(timeout)
    return SocketTransport(sock)


# ---------------------------------------------------------------------------
# codecs

def vehicle_to_wire(av: VehicleState) -> dict:
    return {"px": float(av.px), "py": float(av.py), "vx": float(av.vx),
            "vy": float(av.vy), "theta": float(av.theta),
            "radius": float(av.radius), "v_pref": float(av.v_pref),
            "gx": float(av.gx), "gy": float(av.gy)}


def vehicle_from_wire(d: dict) -> VehicleState:
    return VehicleState(px=float(d["px"]), py=float(d["py"]), vx=float(d["vx"]),
                        vy=float(d["vy"]), theta=float(d["theta"]),
                        radius=float(d["radius"]), v_pref=float(d["v_pref"]),
                        gx=float(d["gx"]), gy=float(d["gy"]))


def gaussian_to_wire(g: Gaussian2D) -> dict:
    return {"mx": float(g.mx), "my": float(g.my), "sxx": float(g.sxx),
            "sxy": float(g.sxy), "syy": float(g.syy)}


def gaussian_from_wire(d: dict) -> Gaussian2D:
    return Gaussian2D(mx=float(d["mx"]), my=float(d["my"]), sxx=float(d["sxx"]),
                      sxy=float(d["sxy"]), syy=float(d["syy"]))


def observation_to_wire(obs: JointObservation) -> dict:
    return {
        "t": obs.t,
        "av": vehicle_to_wire(obs.av),
        "peds": [
            {"id": p.id, "px": float(p.px), "py": float(p.py),
             "track": [gaussian_to_wire(g) for g in p.track.steps]}
            for p in obs.peds
        ],
    }


def observation_from_wire(d: dict) -> JointObservation:
    peds = tuple(
        ObservedPedestrian(
            id=str(p["id"]), px=float(p["px"]), py=float(p["py"]),
            track=PredictedTrack(
                ped_id=str(p["id"]),
                steps=tuple(gaussian_from_wire(g) for g in p["track"])))
        for p in d["peds"]
    )
    return JointObservation(t=int(d["t"]), av=vehicle_from_wire(d["av"]), peds=peds)


def predictor_request_to_wire(inp: PredictorInput) -> dict:
    return {
        "type": "predict",
        "t": inp.t,
        "dt": float(inp.dt),
        "horizon": inp.horizon,
        "history": inp.history,
        "av_history": [
            {"px": float(p.px), "py": float(p.py), "theta": float(p.theta),
             "v": float(p.v)} for p in inp.av_history
        ],
        "av_projection": [[float(x), float(y)] for x, y in inp.av_projection],
        "peds": [
            {"id": p.id,
             "history": [list(map(float, q)) if q is not None else None
                         for q in p.points]}
            for p in inp.peds
        ],
    }


def predictor_input_from_wire(d: dict) -> PredictorInput:
    if d.get("type") != "predict":
        raise WireError(f"expected a predict request, got {d.get('type')!r}")
    return PredictorInput(
        t=int(d["t"]),
        dt=float(d["dt"]),
        horizon=int(d["horizon"]),
        history=int(d["history"]),
        av_history=tuple(
            AvPose(px=float(p["px"]), py=float(p["py"]),
                   theta=float(p["theta"]), v=float(p["v"]))
            for p in d["av_history"]
        ),
        av_projection=tuple((float(x), float(y)) for x, y in d["av_projection"]),
        peds=tuple(
            PedestrianHistory(
                id=str(p["id"]),
                points=tuple(
                    (float(q[0]), float(q[1])) if q is not None else None
                    for q in p["history"]))
            for p in d["peds"]
        ),
    )


def predictor_reply_to_wire(out: PredictorOutput) -> dict:
    return {
        "type": "tracks",
        "tracks": [
            {"id": t.ped_id, "steps": [gaussian_to_wire(g) for g in t.steps]}
            for t in out.tracks
        ],
        "fallback_ids": list(out.fallback_ids),
    }


def predictor_reply_from_wire(d: dict) -> PredictorOutput:
    kind = d.get("type")
    if kind == "error":
        raise PredictorError(f"predictor reported: {d.get('message')}")
    if kind != "tracks":
        raise WireError(f"expected tracks, got {kind!r}")
    tracks = []
    for t in d.get("tracks", []):
        ped_id = str(t.get("id"))
        steps = []
        for k, g in enumerate(t.get("steps", []), start=1):
            try:
                steps.append(gaussian_from_wire(g))
            except (KeyError, TypeError, ValueError) as exc:
                raise PredictorError(
                    f"invalid Gaussian for pedestrian {ped_id!r} step {k}: {exc}"
                ) from exc
        if not steps:
            raise PredictorError(f"empty track for pedestrian {ped_id!r}")
        tracks.append(PredictedTrack(ped_id=ped_id, steps=tuple(steps)))
    return PredictorOutput(
        tracks=tuple(tracks),
        fallback_ids=tuple(str(i) for i in d.get("fallback_ids", [])),
    )
