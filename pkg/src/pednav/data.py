"""Dataset tooling: trajectory tables, scenario extraction, splits, synthesis.

The input format is a flat CSV of agent positions per frame. Every recorded
vehicle becomes one scenario: its first and last frames bound the window,
its recorded endpoints become the start and goal, and all pedestrian frames
inside the window are kept for replay.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Config
from .scenario import (PedestrianTrack, Scenario, load_scenario, save_scenario)

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("frame", "agent_id", "agent_type", "x", "y")
AGENT_TYPES = ("pedestrian", "vehicle")

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class TableRow:
    frame: int
    agent_id: str
    agent_type: str
    x: float
    y: float


@dataclass(frozen=True)
class RawTrajectoryTable:
    rows: tuple[TableRow, ...]
    fps: float

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")


def parse_table(path, fps: float = 2.0) -> RawTrajectoryTable:
    """Parse a trajectory CSV.

    Required columns: frame, agent_id, agent_type, x, y. Extra columns are
    ignored. Malformed values and duplicate (frame, agent_id) pairs raise
    ValueError naming the offending row.
    """
    rows = []
    seen: set[tuple[int, str]] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file, expected a trajectory CSV")
        missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                frame = int(rec["frame"])
                x = float(rec["x"])
                y = float(rec["y"])
            except (TypeError, ValueError):
                raise ValueError(f"{path}: row {lineno}: malformed numeric field")
            if frame < 0:
                raise ValueError(f"{path}: row {lineno}: negative frame {frame}")
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError(f"{path}: row {lineno}: non-finite position")
            agent_id = (rec["agent_id"] or "").strip()
            if not agent_id:
                raise ValueError(f"{path}: row {lineno}: empty agent_id")
            agent_type = (rec["agent_type"] or "").strip()
            if agent_type not in AGENT_TYPES:
                raise ValueError(
                    f"{path}: row {lineno}: agent_type {agent_type!r} "
                    f"not in {AGENT_TYPES}")
            key = (frame, agent_id)
            if key in seen:
                raise ValueError(
                    f"{path}: row {lineno}: duplicate (frame, agent_id) = {key}")
            seen.add(key)
            rows.append(TableRow(frame=frame, agent_id=agent_id,
                                 agent_type=agent_type, x=x, y=y))
    return RawTrajectoryTable(rows=tuple(rows), fps=fps)


def _interp_gaps(frames: dict[int, tuple[float, float]],
                 first: int, last: int) -> list[tuple[float, float]]:
    """Positions for every frame in [first, last], linearly filling gaps."""
    known = sorted(frames)
    out = []
    j = 0
    for f in range(first, last + 1):
        if f in frames:
            out.append(frames[f])
            continue
        while known[j + 1] < f:
            j += 1
        f0, f1 = known[j], known[j + 1]
        a, b = frames[f0], frames[f1]
        w = (f - f0) / (f1 - f0)
        out.append((a[0] + (b[0] - a[0]) * w, a[1] + (b[1] - a[1]) * w))
    return out


def extract_scenarios(table: RawTrajectoryTable, cfg: Config,
                      min_frames: int = 10) -> list[Scenario]:
    """One scenario per recorded vehicle.

    Vehicles with fewer than min_frames recorded frames are dropped with a
    log entry. Gaps in a vehicle's recording are filled by interpolation so
    the reference path has a position at every frame.
    """
    vehicles: dict[str, dict[int, tuple[float, float]]] = {}
    peds: dict[str, dict[int, tuple[float, float]]] = {}
    for row in table.rows:
        bucket = vehicles if row.agent_type == "vehicle" else peds
        bucket.setdefault(row.agent_id, {})[row.frame] = (row.x, row.y)
    if not vehicles:
        raise ValueError("table contains no vehicles; nothing to extract")

    scenarios = []
    for vid in sorted(vehicles):
        frames = vehicles[vid]
        if len(frames) < min_frames:
            logger.warning("dropping vehicle %s: %d recorded frames (< %d)",
                           vid, len(frames), min_frames)
            continue
        first, last = min(frames), max(frames)
        if last == first:
            logger.warning("dropping vehicle %s: single-frame recording", vid)
            continue
        ego = _interp_gaps(frames, first, last)
        tracks = []
        for pid in sorted(peds):
            inside = {f: p for f, p in peds[pid].items() if first <= f <= last}
            if not inside:
                continue
            p_first, p_last = min(inside), max(inside)
            positions = tuple(inside.get(f) for f in range(p_first, p_last + 1))
            tracks.append(PedestrianTrack(
                id=pid, radius=cfg.ped_radius,
                first_frame=p_first - first, positions=positions))
        duration = (last - first) / table.fps
        scenarios.append(Scenario(
            id=vid, fps=table.fps,
            ego_reference=tuple(ego), peds=tuple(tracks),
            time_budget=duration + cfg.timeout_margin))
    return scenarios


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.64
    test: float = 0.20
    val: float = 0.16

    def __post_init__(self):
        parts = (self.train, self.test, self.val)
        if any(p < 0 for p in parts):
            raise ValueError("split fractions must be non-negative")
        if abs(sum(parts) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(parts)}")


@dataclass(frozen=True)
class Split:
    train: tuple[Scenario, ...]
    test: tuple[Scenario, ...]
    val: tuple[Scenario, ...]


def split_scenarios(scenarios, spec: SplitSpec = SplitSpec(),
                    seed: int = 0) -> Split:
    """Shuffle scenarios by seed and split by largest-remainder apportionment.

    Every scenario lands in exactly one split, sizes match the fractions as
    closely as integers allow, and the same seed always produces the same
    assignment regardless of input order.
    """
    ordered = sorted(scenarios, key=lambda s: s.id)
    n = len(ordered)
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = [ordered[i] for i in perm]

    fractions = (spec.train, spec.test, spec.val)
    exact = [f * n for f in fractions]
    counts = [math.floor(e) for e in exact]
    leftover = n - sum(counts)
    by_remainder = sorted(range(3), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in by_remainder[:leftover]:
        counts[i] += 1

    train = tuple(shuffled[: counts[0]])
    test = tuple(shuffled[counts[0]: counts[0] + counts[1]])
    val = tuple(shuffled[counts[0] + counts[1]:])
    return Split(train=train, test=test, val=val)


TEMPLATES = ("crossing", "head_on", "static_crowd", "dense_ring")

_EGO_SPEED = 2.0  # m/s along the reference line
_EGO_LENGTH = 40.0  # m
_RING_RADIUS = 2.0  # m


def synth_scenarios(template: str, n_peds: int, seed: int,
                    cfg: Config) -> Scenario:
    """Generate one synthetic scenario on a straight reference line.

    The reference vehicle drives (0,0) -> (40,0) at 2 m/s. Templates:
      crossing      pedestrians cross the line, timed to meet a full-speed
                    vehicle near the middle
      head_on       pedestrians walk back along the line toward the vehicle
      static_crowd  pedestrians scattered next to the line, standing still
      dense_ring    a tight standing ring around the start position

    Deterministic per (template, n_peds, seed).
    """
    if template not in TEMPLATES:
        raise ValueError(f"unknown template {template!r}, expected one of {TEMPLATES}")
    if n_peds < 0:
        raise ValueError("n_peds must be non-negative")
    rng = np.random.default_rng(seed)
    fps = 1.0 / cfg.dt
    duration = _EGO_LENGTH / _EGO_SPEED
    n_frames = int(round(duration * fps)) + 1
    times = [f / fps for f in range(n_frames)]
    ego = tuple((_EGO_SPEED * t, 0.0) for t in times)

    tracks = []
    for j in range(n_peds):
        pid = f"p{j}"
        if template == "crossing":
            x = 20.0 + 2.0 * (j - (n_peds - 1) / 2.0) + rng.uniform(-0.5, 0.5)
            walk = 1.0 + rng.uniform(0.0, 0.2)
            # crosses y=0 exactly when a full-throttle vehicle reaches x
            t_meet = x / cfg.v_max
            y0 = walk * t_meet
            positions = tuple((x, y0 - walk * t) for t in times)
        elif template == "head_on":
            x0 = 25.0 + 2.0 * j + rng.uniform(-0.5, 0.5)
            y = rng.uniform(-0.3, 0.3)
            walk = 1.2 + rng.uniform(0.0, 0.2)
            positions = tuple((x0 - walk * t, y) for t in times)
        elif template == "static_crowd":
            x = rng.uniform(8.0, 32.0)
            y = rng.uniform(-3.0, 3.0)
            positions = tuple((x, y) for _ in times)
        else:  # dense_ring
            angle = 2.0 * math.pi * j / n_peds
            x = _RING_RADIUS * math.cos(angle)
            y = _RING_RADIUS * math.sin(angle)
            positions = tuple((x, y) for _ in times)
        tracks.append(PedestrianTrack(id=pid, radius=cfg.ped_radius,
                                      first_frame=0, positions=positions))

    return Scenario(
        id=f"{template}-n{n_peds}-s{seed}",
        fps=fps,
        ego_reference=ego,
        peds=tuple(tracks),
        time_budget=duration + cfg.timeout_margin,
    )


def _safe_filename(scenario_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", scenario_id) or "scenario"


def save_scenario_dir(out_dir, scenarios, split: Split, extra: dict) -> None:
    """Write scenarios plus a manifest with the split assignment."""
    out = Path(out_dir)
    (out / "scenarios").mkdir(parents=True, exist_ok=True)
    files = {}
    for sc in sorted(scenarios, key=lambda s: s.id):
        name = _safe_filename(sc.id)
        path = f"scenarios/{name}.json"
        if path in files.values():
            raise ValueError(f"scenario ids collide on filename {name!r}")
        files[sc.id] = path
        save_scenario(out / path, sc)
    manifest = {
        "schema_version": MANIFEST_VERSION,
        "scenario_ids": sorted(files),
        "files": files,
        "splits": {
            "train": sorted(s.id for s in split.train),
            "test": sorted(s.id for s in split.test),
            "val": sorted(s.id for s in split.val),
        },
    }
    manifest.update(extra)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_scenario_dir(path) -> tuple[dict[str, Scenario], dict[str, list[str]]]:
    """Load a scenario directory. Returns (scenarios by id, split -> ids).

    The synthetic split "all" covers every scenario in manifest order.
    """
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{manifest_path} does not exist")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("schema_version") != MANIFEST_VERSION:
        raise ValueError(
            f"unsupported manifest schema version {manifest.get('schema_version')!r}")
    scenarios = {}
    for sid in manifest["scenario_ids"]:
        scenarios[sid] = load_scenario(root / manifest["files"][sid])
    splits = {name: list(ids) for name, ids in manifest["splits"].items()}
    splits["all"] = list(manifest["scenario_ids"])
    return scenarios, splits
