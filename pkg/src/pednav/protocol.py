"""Environment wire protocol: serve episodes to external processes.

One connection drives one environment. A session accepts hello,
list_scenarios, reset, and step messages; every request gets exactly one
reply. Protocol misuse (stepping a finished episode, unknown scenario ids,
malformed JSON) produces an error reply and leaves the session usable.
"""

from __future__ import annotations

import json
import math
import socketserver
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional

from . import wire
from .core import Action, Config, clamp_action
from .env import CrowdNavEnv
from .runner import EpisodeRecord, StepLog, record_to_dict
from .scenario import Scenario

PROTOCOL = "pednav-env/1"


class EnvProtocolError(RuntimeError):
    """The peer reported an error or broke the protocol."""


class EnvSession:
    """Protocol state machine for a single connection."""

    def __init__(self, scenarios: dict[str, Scenario], splits: dict[str, list[str]],
                 cfg: Config, predictor_factory, records_dir=None,
                 session_id: int = 0):
        self.scenarios = scenarios
        self.splits = splits
        self.cfg = cfg
        self.predictor_factory = predictor_factory
        self.records_dir = Path(records_dir) if records_dir else None
        self.session_id = session_id
        self._env: Optional[CrowdNavEnv] = None
        self._episode_index = 0
        self._steps: list[StepLog] = []
        self._path_length = 0.0
        self._prev_pos: Optional[tuple[float, float]] = None

    def handle(self, msg: dict) -> dict:
        try:
            kind = msg.get("type")
            if kind == "hello":
                return self._hello()
            if kind == "list_scenarios":
                return self._list(msg)
            if kind == "reset":
                return self._reset(msg)
            if kind == "step":
                return self._step(msg)
            return _error(f"unknown message type {kind!r}")
        except (KeyError, TypeError, ValueError, RuntimeError) as exc:
            return _error(str(exc))

    def _hello(self) -> dict:
        cfg = self.cfg
        return {
            "type": "config",
            "protocol": PROTOCOL,
            "config": asdict(cfg),
            "action_bounds": {"v_min": cfg.v_min, "v_max": cfg.v_max,
                              "dtheta_max": cfg.dtheta_max},
            "splits": {name: len(ids) for name, ids in self.splits.items()},
        }

    def _list(self, msg: dict) -> dict:
        split = msg.get("split", "all")
        if split not in self.splits:
            return _error(f"unknown split {split!r}, have {sorted(self.splits)}")
        return {"type": "scenarios", "split": split, "ids": list(self.splits[split])}

    def _reset(self, msg: dict) -> dict:
        sid = msg.get("scenario_id")
        if sid is None:
            return _error("reset requires a scenario_id")
        scenario = self.scenarios.get(sid)
        if scenario is None:
            return _error(f"unknown scenario {sid!r}")
        self._env = CrowdNavEnv(scenario, self.predictor_factory(scenario), self.cfg)
        obs = self._env.reset()
        self._steps = []
        self._path_length = 0.0
        self._prev_pos = obs.av.position
        return {"type": "observation", "observation": wire.observation_to_wire(obs)}

    def _step(self, msg: dict) -> dict:
        if self._env is None:
            return _error("step before reset")
        action = Action(v=float(msg["v"]), dtheta=float(msg["dtheta"]))
        env = self._env
        executed = clamp_action(action, self.cfg)  # raises on NaN, state untouched
        outcome = env.step(action)
        self._log_step(outcome, executed)
        if outcome.done:
            self._finish_episode(outcome.terminal_kind)
        br = outcome.breakdown
        return {
            "type": "step_result",
            "observation": wire.observation_to_wire(outcome.observation),
            "reward": float(outcome.reward),
            "done": outcome.done,
            "terminal_kind": outcome.terminal_kind,
            "info": {
                "branch": br.branch,
                "r_progress": br.r_progress,
                "r_pred": br.r_pred,
                "r_action": br.r_action,
                "r_danger": br.r_danger,
                "danger": br.danger,
                "d_min": br.d_min if math.isfinite(br.d_min) else None,
            },
        }

    def _log_step(self, outcome, executed: Action) -> None:
        av = outcome.observation.av
        self._path_length += math.hypot(av.px - self._prev_pos[0],
                                        av.py - self._prev_pos[1])
        self._prev_pos = av.position
        d_min = outcome.breakdown.d_min
        self._steps.append(StepLog(
            t=outcome.observation.t,
            px=av.px, py=av.py, vx=av.vx, vy=av.vy, theta=av.theta,
            v_cmd=executed.v, dtheta_cmd=executed.dtheta,
            reward=outcome.reward, branch=outcome.breakdown.branch,
            d_min=d_min, intrusion=0.0 <= d_min < self.cfg.personal_space,
            planner_time=0.0, planner_feasible=None,
        ))

    def _finish_episode(self, terminal_kind: str) -> None:
        if self.records_dir is None or not self._steps:
            self._episode_index += 1
            return
        record = EpisodeRecord(
            scenario_id=self._env.scenario.id,
            terminal_kind=terminal_kind,
            nav_time=len(self._steps) * self.cfg.dt,
            path_length=self._path_length,
            steps=tuple(self._steps),
        )
        self.records_dir.mkdir(parents=True, exist_ok=True)
        name = f"session{self.session_id:03d}-ep{self._episode_index:03d}.json"
        with open(self.records_dir / name, "w", encoding="utf-8") as fh:
            json.dump(record_to_dict(record), fh, indent=2, sort_keys=True,
                      allow_nan=False)
            fh.write("\n")
        self._episode_index += 1


def _error(message: str) -> dict:
    return {"type": "error", "message": message}


class _TcpHandler(socketserver.StreamRequestHandler):
    def handle(self):
        session = self.server.make_session()
        while True:
            line = self.rfile.readline()
            if not line:
                return
            try:
                msg = wire.parse_line(line)
            except wire.WireError as exc:
                self.wfile.write(wire.dumps_line(_error(str(exc))))
                continue
            self.wfile.write(wire.dumps_line(session.handle(msg)))


class EnvServer(socketserver.ThreadingTCPServer):
    """TCP server handing each connection its own EnvSession."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, bind: tuple[str, int], scenarios, splits, cfg,
                 predictor_factory, records_dir=None):
        super().__init__(bind, _TcpHandler)
        self._args = (scenarios, splits, cfg, predictor_factory, records_dir)
        self._sessions = 0

    def make_session(self) -> EnvSession:
        scenarios, splits, cfg, factory, records_dir = self._args
        session = EnvSession(scenarios, splits, cfg, factory,
                             records_dir=records_dir, session_id=self._sessions)
        self._sessions += 1
        return session


def serve_stdio(scenarios, splits, cfg, predictor_factory, records_dir=None,
                stdin=None, stdout=None) -> None:
    """Serve one session over stdio; returns at EOF."""
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    session = EnvSession(scenarios, splits, cfg, predictor_factory,
                         records_dir=records_dir)
    for line in stdin:
        if not line.strip():
            continue
        try:
            msg = wire.parse_line(line)
            reply = session.handle(msg)
        except wire.WireError as exc:
            reply = _error(str(exc))
        stdout.write(wire.dumps_line(reply))
        stdout.flush()


class EnvClient:
    """Typed client for the environment protocol.

    Accepts an endpoint string ("host:port" or "cmd:...") or an already
    open transport with send/recv/close.
    """

    def __init__(self, transport):
        if isinstance(transport, str):
            transport = wire.open_endpoint(transport)
        self._transport = transport

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def request(self, msg: dict) -> dict:
        self._transport.send(msg)
        reply = self._transport.recv()
        if reply is None:
            raise EnvProtocolError("server closed the connection")
        return reply

    def _expect(self, msg: dict, reply_type: str) -> dict:
        reply = self.request(msg)
        if reply.get("type") == "error":
            raise EnvProtocolError(reply.get("message", "unknown error"))
        if reply.get("type") != reply_type:
            raise EnvProtocolError(
                f"expected {reply_type!r}, got {reply.get('type')!r}")
        return reply

    def hello(self) -> dict:
        return self._expect({"type": "hello"}, "config")

    def list_scenarios(self, split: str = "all") -> list[str]:
        return self._expect({"type": "list_scenarios", "split": split},
                            "scenarios")["ids"]

    def reset(self, scenario_id: str) -> dict:
        return self._expect({"type": "reset", "scenario_id": scenario_id},
                            "observation")

    def step(self, v: float, dtheta: float) -> dict:
        return self._expect({"type": "step", "v": v, "dtheta": dtheta},
                            "step_result")

    def close(self) -> None:
        self._transport.close()
