"""Replay scenarios: a recorded vehicle reference plus pedestrian tracks.

A scenario is a fixed window of recorded traffic. The vehicle that produced
the window defines the start, the goal, and the time budget; pedestrians are
replayed as recorded and do not react. Positions between frames come from
linear interpolation, so the engine works at any control rate, although the
defaults make one control step exactly one frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

from .core import PedestrianState

SCHEMA_VERSION = 1

# Snap tolerance when a query time lands a hair off a frame boundary.
_FRAME_SNAP = 1e-9


@dataclass(frozen=True)
class PedestrianTrack:
    """One pedestrian's recorded positions, aligned to scenario frames."""

    id: str
    radius: float  # m
    first_frame: int
    positions: tuple[Optional[tuple[float, float]], ...]  # None = occluded frame

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"pedestrian radius must be positive, got {self.radius}")
        if self.first_frame < 0:
            raise ValueError("first_frame must be non-negative")
        if not self.positions:
            raise ValueError(f"pedestrian {self.id} has no recorded frames")
        if self.positions[0] is None or self.positions[-1] is None:
            raise ValueError(f"pedestrian {self.id} track must start and end observed")

    @property
    def last_frame(self) -> int:
        return self.first_frame + len(self.positions) - 1

    def position_at_frame(self, frame: int) -> Optional[tuple[float, float]]:
        if frame < self.first_frame or frame > self.last_frame:
            return None
        return self.positions[frame - self.first_frame]


@dataclass(frozen=True)
class Scenario:
    id: str
    fps: float  # recording rate, frames per second
    ego_reference: tuple[tuple[float, float], ...]  # recorded vehicle path, per frame
    peds: tuple[PedestrianTrack, ...]
    time_budget: float  # s, reference duration plus margin

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if len(self.ego_reference) < 2:
            raise ValueError("a scenario needs at least two reference frames")
        if self.time_budget <= 0:
            raise ValueError("time_budget must be positive")
        last = self.n_frames - 1
        ids = set()
        for track in self.peds:
            if track.id in ids:
                raise ValueError(f"duplicate pedestrian id {track.id!r}")
            ids.add(track.id)
            if track.last_frame > last:
                raise ValueError(
                    f"pedestrian {track.id} extends past the reference window"
                )
        object.__setattr__(self, "peds", tuple(sorted(self.peds, key=lambda t: t.id)))

    @property
    def n_frames(self) -> int:
        return len(self.ego_reference)

    @property
    def duration(self) -> float:
        """Reference duration in seconds."""
        return (self.n_frames - 1) / self.fps

    @property
    def start(self) -> tuple[float, float]:
        return self.ego_reference[0]

    @property
    def goal(self) -> tuple[float, float]:
        return self.ego_reference[-1]

    @cached_property
    def _tracks_by_id(self) -> dict[str, PedestrianTrack]:
        return {t.id: t for t in self.peds}

    def track(self, ped_id: str) -> Optional[PedestrianTrack]:
        return self._tracks_by_id.get(ped_id)

    def _frame_coord(self, time_s: float) -> float:
        f = time_s * self.fps
        snapped = round(f)
        if abs(f - snapped) <= _FRAME_SNAP:
            return float(snapped)
        return f

    def ped_position(self, ped_id: str, time_s: float) -> Optional[tuple[float, float]]:
        """Interpolated pedestrian position, None while absent.

        Interior occluded frames are bridged linearly between the nearest
        observed frames: occlusion is a sensing artifact, the pedestrian is
        still physically there. Tracks start and end observed, so both
        anchors always exist inside the window.
        """
        track = self._tracks_by_id.get(ped_id)
        if track is None:
            return None
        f = self._frame_coord(time_s)
        if f < track.first_frame or f > track.last_frame:
            return None
        a_f = int(math.floor(f))
        while track.position_at_frame(a_f) is None:
            a_f -= 1
        b_f = int(math.ceil(f))
        while track.position_at_frame(b_f) is None:
            b_f += 1
        a = track.position_at_frame(a_f)
        if a_f == b_f:
            return a
        b = track.position_at_frame(b_f)
        w = (f - a_f) / (b_f - a_f)
        return (a[0] + (b[0] - a[0]) * w, a[1] + (b[1] - a[1]) * w)

    def peds_at(self, time_s: float) -> tuple[PedestrianState, ...]:
        """All pedestrians present at a time instant, ordered by id."""
        out = []
        for track in self.peds:
            pos = self.ped_position(track.id, time_s)
            if pos is not None:
                out.append(
                    PedestrianState(id=track.id, px=pos[0], py=pos[1], radius=track.radius)
                )
        return tuple(out)

    def ego_position(self, time_s: float) -> tuple[float, float]:
        """Recorded vehicle position, clamped to the reference window."""
        f = self._frame_coord(time_s)
        f = min(max(f, 0.0), float(self.n_frames - 1))
        lo = math.floor(f)
        if lo == f:
            return self.ego_reference[int(f)]
        a = self.ego_reference[int(lo)]
        b = self.ego_reference[int(lo) + 1]
        w = f - lo
        return (a[0] + (b[0] - a[0]) * w, a[1] + (b[1] - a[1]) * w)


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "id": scenario.id,
        "fps": scenario.fps,
        "time_budget": scenario.time_budget,
        "ego_reference": [[x, y] for x, y in scenario.ego_reference],
        "pedestrians": [
            {
                "id": t.id,
                "radius": t.radius,
                "first_frame": t.first_frame,
                "positions": [list(p) if p is not None else None for p in t.positions],
            }
            for t in scenario.peds
        ],
    }


def scenario_from_dict(data: dict) -> Scenario:
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported scenario schema version: {version!r}")
    peds = tuple(
        PedestrianTrack(
            id=str(p["id"]),
            radius=float(p["radius"]),
            first_frame=int(p["first_frame"]),
            positions=tuple(
                (float(q[0]), float(q[1])) if q is not None else None
                for q in p["positions"]
            ),
        )
        for p in data["pedestrians"]
    )
    return Scenario(
        id=str(data["id"]),
        fps=float(data["fps"]),
        ego_reference=tuple((float(x), float(y)) for x, y in data["ego_reference"]),
        peds=peds,
        time_budget=float(data["time_budget"]),
    )


def save_scenario(path, scenario: Scenario) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2, sort_keys=True,
                  allow_nan=False)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))
