"""Episode scoring, aggregation, report emission, and parameter sweeps."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Config
from .runner import EpisodeRecord, evaluate_scenarios


@dataclass(frozen=True)
class EpisodeMetrics:
    scenario_id: str
    terminal_kind: str
    nav_time: float  # s
    path_length: float  # m
    intrusion_ratio: float  # % of steps spent inside personal space
    intrusion_distance: Optional[float]  # m, worst separation while intruding
    intrusion_speed: Optional[float]  # m/s, vehicle speed at that step
    compute_time: float  # s, mean planner time per step


def episode_metrics(rec: EpisodeRecord, cfg: Config) -> EpisodeMetrics:
    """Score one episode record."""
    steps = rec.steps
    intrusions = [s for s in steps if s.intrusion]
    ratio = 100.0 * len(intrusions) / len(steps)
    distance = speed = None
    if intrusions:
        worst = min(intrusions, key=lambda s: s.d_min)
        distance = worst.d_min
        speed = math.hypot(worst.vx, worst.vy)
    return EpisodeMetrics(
        scenario_id=rec.scenario_id,
        terminal_kind=rec.terminal_kind,
        nav_time=rec.nav_time,
        path_length=rec.path_length,
        intrusion_ratio=ratio,
        intrusion_distance=distance,
        intrusion_speed=speed,
        compute_time=float(np.mean([s.planner_time for s in steps])),
    )


@dataclass(frozen=True)
class Stat:
    mean: float
    std: float  # population standard deviation


def _stat(values) -> Stat:
    arr = np.asarray(values, dtype=np.float64)
    return Stat(mean=float(arr.mean()), std=float(arr.std()))


@dataclass(frozen=True)
class AggregateReport:
    episodes: int
    success_rate: float
    collision_rate: float
    timeout_rate: float
    nav_time: Optional[Stat]  # successful episodes only
    path_length: Optional[Stat]  # successful episodes only
    intrusion_ratio: Stat
    intrusion_distance: Optional[Stat]  # episodes with intrusions only
    intrusion_speed: Optional[Stat]
    compute_time: Stat


def aggregate(rows) -> AggregateReport:
    """Combine per-episode metrics. The three rates sum to 1."""
    rows = list(rows)
    if not rows:
        raise ValueError("no episodes to aggregate")
    for row in rows:
        if row.terminal_kind not in ("goal", "collision", "timeout"):
            raise ValueError(f"unexpected terminal kind {row.terminal_kind!r}")
    n = len(rows)
    successes = [r for r in rows if r.terminal_kind == "goal"]
    collisions = sum(1 for r in rows if r.terminal_kind == "collision")
    timeouts = sum(1 for r in rows if r.terminal_kind == "timeout")
    intruded = [r for r in rows if r.intrusion_distance is not None]
    return AggregateReport(
        episodes=n,
        success_rate=len(successes) / n,
        collision_rate=collisions / n,
        timeout_rate=timeouts / n,
        nav_time=_stat([r.nav_time for r in successes]) if successes else None,
        path_length=_stat([r.path_length for r in successes]) if successes else None,
        intrusion_ratio=_stat([r.intrusion_ratio for r in rows]),
        intrusion_distance=_stat([r.intrusion_distance for r in intruded]) if intruded else None,
        intrusion_speed=_stat([r.intrusion_speed for r in intruded]) if intruded else None,
        compute_time=_stat([r.compute_time for r in rows]),
    )


REPORT_COLUMNS = (
    "label", "episodes", "success", "collision", "timeout",
    "nav_time_mean", "nav_time_std", "path_length_mean", "path_length_std",
    "intrusion_ratio_mean", "intrusion_ratio_std",
    "intrusion_distance_mean", "intrusion_distance_std",
    "intrusion_speed_mean", "intrusion_speed_std",
    "compute_time_mean", "compute_time_std",
)


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.2f}"


def _report_cells(label: str, r: AggregateReport) -> dict:
    def pair(stat: Optional[Stat]):
        return (None, None) if stat is None else (stat.mean, stat.std)

    nav = pair(r.nav_time)
    path = pair(r.path_length)
    ratio = pair(r.intrusion_ratio)
    dist = pair(r.intrusion_distance)
    speed = pair(r.intrusion_speed)
    comp = pair(r.compute_time)
    values = (r.episodes, r.success_rate, r.collision_rate, r.timeout_rate,
              *nav, *path, *ratio, *dist, *speed, *comp)
    cells = {"label": label}
    for name, value in zip(REPORT_COLUMNS[1:], values):
        cells[name] = str(value) if name == "episodes" else _fmt(value)
    return cells


def emit_report_table(rows: list[tuple[str, AggregateReport]], fmt: str) -> str:
    """Render labeled aggregate reports as CSV or Markdown.

    All numeric cells use two decimals; missing statistics render as "-".
    """
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for label, report in rows:
            writer.writerow(_report_cells(label, report))
        return buf.getvalue()
    if fmt == "markdown":
        def joined(cells, a, b):
            return f"{cells[a]} ± {cells[b]}" if cells[a] != "-" else "-"

        header = ("| Planner | Success | Collision | Timeout | Nav time (s) | "
                  "Path length (m) | Intrusion ratio (%) | Intrusion distance (m) | "
                  "Intrusion speed (m/s) | Compute time (s) | Episodes |")
        sep = "|" + "---|" * 11
        lines = [header, sep]
        for label, report in rows:
            c = _report_cells(label, report)
            lines.append(
                "| " + " | ".join([
                    label, c["success"], c["collision"], c["timeout"],
                    joined(c, "nav_time_mean", "nav_time_std"),
                    joined(c, "path_length_mean", "path_length_std"),
                    joined(c, "intrusion_ratio_mean", "intrusion_ratio_std"),
                    joined(c, "intrusion_distance_mean", "intrusion_distance_std"),
                    joined(c, "intrusion_speed_mean", "intrusion_speed_std"),
                    joined(c, "compute_time_mean", "compute_time_std"),
                    c["episodes"],
                ]) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}, expected 'csv' or 'markdown'")


def emit_report(report: AggregateReport, fmt: str, label: str = "run") -> str:
    return emit_report_table([(label, report)], fmt)


def parse_report_csv(text: str) -> list[tuple[str, AggregateReport]]:
    """Inverse of emit_report_table(..., "csv"), at two-decimal precision."""
    reader = csv.DictReader(io.StringIO(text))
    out = []
    for rec in reader:
        def num(name) -> Optional[float]:
            return None if rec[name] == "-" else float(rec[name])

        def stat(prefix) -> Optional[Stat]:
            mean = num(prefix + "_mean")
            if mean is None:
                return None
            return Stat(mean=mean, std=num(prefix + "_std"))

        out.append((rec["label"], AggregateReport(
            episodes=int(rec["episodes"]),
            success_rate=num("success"),
            collision_rate=num("collision"),
            timeout_rate=num("timeout"),
            nav_time=stat("nav_time"),
            path_length=stat("path_length"),
            intrusion_ratio=stat("intrusion_ratio"),
            intrusion_distance=stat("intrusion_distance"),
            intrusion_speed=stat("intrusion_speed"),
            compute_time=stat("compute_time"),
        )))
    return out


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(Config)}


def sensitivity_sweep(param_name: str, values, make_policy: Callable[[Config], object],
                      scenarios, predictor_factory, cfg: Config,
                      on_value=None) -> list[tuple[float, AggregateReport]]:
    """Re-run the full evaluation for each value of one Config parameter.

    Everything else stays at the provided configuration. Raises on an
    unknown parameter name or an empty value list; invalid values surface
    the Config validation error.
    """
    if param_name not in _CONFIG_FIELDS:
        raise ValueError(f"unknown config parameter {param_name!r}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    results = []
    for value in values:
        cfg_v = dataclasses.replace(cfg, **{param_name: value})
        policy = make_policy(cfg_v)
        records, errors = evaluate_scenarios(scenarios, policy, predictor_factory, cfg_v)
        if errors:
            raise RuntimeError(
                f"sweep {param_name}={value}: {len(errors)} episodes failed: "
                f"{errors[0][1]}")
        report = aggregate([episode_metrics(r, cfg_v) for r in records])
        results.append((value, report))
        if on_value:
            on_value(value, records, report)
    return results
