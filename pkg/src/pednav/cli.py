"""Command line interface.

Subcommands:
  extract          trajectory CSV -> scenario directory with splits
  synth            generate synthetic scenario directories
  run              evaluate a planner over a split, emit records and reports
  serve            expose environments over TCP or stdio
  score-predictor  calibration metrics for a predictor on replay windows
  sweep            re-run an evaluation across values of one config parameter

Configuration comes from --config JSON (or the PEDNAV_CONFIG environment
variable), with sections "config", "predictor", "mpc_weights", "solver".
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .core import Config
from .data import (SplitSpec, extract_scenarios, load_scenario_dir,
                   parse_table, save_scenario_dir, split_scenarios,
                   synth_scenarios, TEMPLATES, _safe_filename)
from .metrics import (aggregate, emit_report_table, episode_metrics,
                      sensitivity_sweep)
from .mpc import MpcWeights, SolverParams
from .policies import make_policy
from .predictor import PredictorInput, AvPose, PedestrianHistory, validate_output
from .protocol import EnvServer, serve_stdio
from .runner import evaluate_scenarios, make_predictor_factory, record_to_dict
from .uncertainty import calibration_metrics


class CliError(Exception):
    """Usage or input error; maps to exit code 2."""


@dataclasses.dataclass(frozen=True)
class PredictorParams:
    sigma0: float = 0.1
    growth: float = 0.05
    sigma_gt: float = 0.05


@dataclasses.dataclass(frozen=True)
class Settings:
    cfg: Config
    predictor: PredictorParams
    weights: MpcWeights
    solver: SolverParams


_SECTIONS = {
    "config": Config,
    "predictor": PredictorParams,
    "mpc_weights": MpcWeights,
    "solver": SolverParams,
}


def load_settings(path: str | None) -> Settings:
    """Load layered settings from a JSON file; unknown keys are rejected."""
    if path is None:
        path = os.environ.get("PEDNAV_CONFIG") or None
    raw = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise CliError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise CliError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(raw, dict):
            raise CliError(f"config file {path} must hold a JSON object")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise CliError(f"unknown config sections {sorted(unknown)}")
    built = {}
    for section, cls in _SECTIONS.items():
        payload = raw.get(section, {})
        if not isinstance(payload, dict):
            raise CliError(f"config section {section!r} must be an object")
        known = {f.name for f in dataclasses.fields(cls)}
        bad = set(payload) - known
        if bad:
            raise CliError(f"unknown keys in section {section!r}: {sorted(bad)}")
        try:
            built[section] = cls(**payload)
        except (TypeError, ValueError) as exc:
            raise CliError(f"invalid section {section!r}: {exc}")
    return Settings(cfg=built["config"], predictor=built["predictor"],
                    weights=built["mpc_weights"], solver=built["solver"])


def _settings_dict(settings: Settings) -> dict:
    return {name: dataclasses.asdict(getattr(settings, attr))
            for name, attr in (("config", "cfg"), ("predictor", "predictor"),
                               ("mpc_weights", "weights"), ("solver", "solver"))}


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _load_split(scenarios_dir: str, split: str):
    try:
        scenarios, splits = load_scenario_dir(scenarios_dir)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load scenarios from {scenarios_dir}: {exc}")
    if split not in splits:
        raise CliError(f"unknown split {split!r}, have {sorted(splits)}")
    return [scenarios[sid] for sid in splits[split]], scenarios, splits


# ---------------------------------------------------------------------------
# subcommands

def cmd_extract(args) -> int:
    settings = load_settings(args.config)
    try:
        table = parse_table(args.input, fps=args.fps)
    except FileNotFoundError:
        raise CliError(f"input file not found: {args.input}")
    scenarios = extract_scenarios(table, settings.cfg, min_frames=args.min_frames)
    if not scenarios:
        raise CliError("no scenario passed the minimum-length filter")
    spec = SplitSpec()
    split = split_scenarios(scenarios, spec, seed=args.seed)
    save_scenario_dir(args.out, scenarios, split, extra={
        "command": "extract",
        "source": args.input,
        "fps": args.fps,
        "seed": args.seed,
        "fractions": dataclasses.asdict(spec),
    })
    print(f"extracted {len(scenarios)} scenarios "
          f"(train {len(split.train)}, test {len(split.test)}, val {len(split.val)}) "
          f"-> {args.out}")
    return 0


def cmd_synth(args) -> int:
    settings = load_settings(args.config)
    scenarios = [synth_scenarios(args.template, args.peds, args.seed + i, settings.cfg)
                 for i in range(args.count)]
    spec = SplitSpec()
    split = split_scenarios(scenarios, spec, seed=args.seed)
    save_scenario_dir(args.out, scenarios, split, extra={
        "command": "synth",
        "template": args.template,
        "peds": args.peds,
        "seed": args.seed,
        "fractions": dataclasses.asdict(spec),
    })
    print(f"generated {len(scenarios)} {args.template} scenarios -> {args.out}")
    return 0


def _metrics_csv(rows) -> str:
    import csv as _csv
    import io

    buf = io.StringIO()
    fields = ("scenario_id", "terminal_kind", "nav_time", "path_length",
              "intrusion_ratio", "intrusion_distance", "intrusion_speed",
              "compute_time")
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for m in rows:
        writer.writerow([
            m.scenario_id, m.terminal_kind, repr(m.nav_time), repr(m.path_length),
            repr(m.intrusion_ratio),
            "" if m.intrusion_distance is None else repr(m.intrusion_distance),
            "" if m.intrusion_speed is None else repr(m.intrusion_speed),
            repr(m.compute_time),
        ])
    return buf.getvalue()


def cmd_run(args) -> int:
    settings = load_settings(args.config)
    solver = settings.solver
    if args.seed is not None:
        solver = dataclasses.replace(solver, seed=args.seed)
    selected, _, _ = _load_split(args.scenarios, args.split)
    try:
        policy = make_policy(args.planner, settings.cfg, settings.weights, solver)
        predictor_factory = make_predictor_factory(
            args.predictor, sigma0=settings.predictor.sigma0,
            growth=settings.predictor.growth, sigma_gt=settings.predictor.sigma_gt)
    except ValueError as exc:
        raise CliError(str(exc))

    out = Path(args.out)
    (out / "records").mkdir(parents=True, exist_ok=True)
    (out / "trajectories").mkdir(parents=True, exist_ok=True)
    _write_json(out / "manifest.json", {
        "schema_version": 1,
        "command": "run",
        "planner": args.planner,
        "predictor": args.predictor,
        "scenarios_dir": args.scenarios,
        "split": args.split,
        "seed": args.seed,
        "scenario_ids": [s.id for s in selected],
        "settings": _settings_dict(dataclasses.replace(settings, solver=solver)),
    })

    def on_episode(scenario, record, observer):
        name = _safe_filename(scenario.id)
        _write_json(out / "records" / f"{name}.json", record_to_dict(record))
        observer.write_csv(out / "trajectories" / f"{name}.csv")

    records, errors = evaluate_scenarios(
        selected, policy, predictor_factory, settings.cfg, on_episode=on_episode)
    for sid, message in errors:
        print(f"error: {message}", file=sys.stderr)

    if records:
        rows = [episode_metrics(r, settings.cfg) for r in records]
        (out / "metrics.csv").write_text(_metrics_csv(rows), encoding="utf-8")
        report = aggregate(rows)
        label = f"{args.planner}+{args.predictor}"
        (out / "report.csv").write_text(
            emit_report_table([(label, report)], "csv"), encoding="utf-8")
        (out / "report.md").write_text(
            emit_report_table([(label, report)], "markdown"), encoding="utf-8")
        print(f"{len(records)} episodes -> {out} "
              f"(success {report.success_rate:.2f}, collision {report.collision_rate:.2f}, "
              f"timeout {report.timeout_rate:.2f})")
    return 1 if errors else 0


def cmd_serve(args) -> int:
    settings = load_settings(args.config)
    _, scenarios, splits = _load_split(args.scenarios, "all")
    try:
        predictor_factory = make_predictor_factory(
            args.predictor, sigma0=settings.predictor.sigma0,
            growth=settings.predictor.growth, sigma_gt=settings.predictor.sigma_gt)
    except ValueError as exc:
        raise CliError(str(exc))
    if args.stdio:
        serve_stdio(scenarios, splits, settings.cfg, predictor_factory,
                    records_dir=args.records)
        return 0
    host, _, port = args.bind.rpartition(":")
    if not port.isdigit():
        raise CliError(f"--bind must be host:port, got {args.bind!r}")
    server = EnvServer((host or "127.0.0.1", int(port)), scenarios, splits,
                       settings.cfg, predictor_factory, records_dir=args.records)
    actual = server.server_address
    print(f"serving {len(scenarios)} scenarios on {actual[0]}:{actual[1]}",
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _score_one_scenario(scenario, predictor, cfg: Config):
    """Prediction windows over a replay: inputs at each frame, truth after it."""
    gt_tracks, pred_tracks = [], []
    dt = 1.0 / scenario.fps
    steps_total = scenario.n_frames - 1
    for t in range(steps_total):
        now = t * dt
        ego = scenario.ego_position(now)
        ahead = scenario.ego_position((t + 1) * dt)
        theta = math.atan2(ahead[1] - ego[1], ahead[0] - ego[0]) \
            if ahead != ego else 0.0
        peds = [p for p in scenario.peds_at(now)
                if math.hypot(p.px - ego[0], p.py - ego[1]) <= cfg.sensor_range]
        if not peds:
            continue
        histories = []
        for ped in peds:
            points = []
            for h in range(cfg.history - 1, 0, -1):
                past = (t - h) * dt
                points.append(scenario.ped_position(ped.id, past) if past >= 0 else None)
            points.append(ped.position)
            histories.append(PedestrianHistory(id=ped.id, points=tuple(points)))
        poses = []
        speed = math.hypot(ahead[0] - ego[0], ahead[1] - ego[1]) / dt
        for h in range(cfg.history - 1, -1, -1):
            past = max((t - h) * dt, 0.0)
            pos = scenario.ego_position(past)
            poses.append(AvPose(px=pos[0], py=pos[1], theta=theta, v=speed))
        projection = tuple(scenario.ego_position((t + k) * dt)
                           for k in range(1, cfg.horizon + 1))
        inp = PredictorInput(
            t=t, dt=dt, horizon=cfg.horizon, history=cfg.history,
            av_history=tuple(poses), av_projection=projection,
            peds=tuple(histories))
        out = validate_output(inp, predictor.predict(inp))
        for ped, track in zip(peds, out.tracks):
            future = tuple(scenario.ped_position(ped.id, (t + k) * dt)
                           for k in range(1, cfg.horizon + 1))
            if all(f is None for f in future) or future[-1] is None:
                continue
            gt_tracks.append(future)
            pred_tracks.append(track)
    return gt_tracks, pred_tracks


def cmd_score_predictor(args) -> int:
    settings = load_settings(args.config)
    selected, _, _ = _load_split(args.scenarios, args.split)
    try:
        predictor_factory = make_predictor_factory(
            args.predictor, sigma0=settings.predictor.sigma0,
            growth=settings.predictor.growth, sigma_gt=settings.predictor.sigma_gt)
    except ValueError as exc:
        raise CliError(str(exc))
    gt_tracks, pred_tracks = [], []
    for scenario in selected:
        g, p = _score_one_scenario(scenario, predictor_factory(scenario), settings.cfg)
        gt_tracks.extend(g)
        pred_tracks.extend(p)
    if not gt_tracks:
        raise CliError("no prediction windows with ground truth in this split")
    report = calibration_metrics(gt_tracks, pred_tracks)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = "predictor,ade,fde,nll,desv1,desv2,desv3,n_pairs\n"
    row = (f"{args.predictor},{report.ade:.4f},{report.fde:.4f},{report.nll:.4f},"
           f"{report.desv1:.4f},{report.desv2:.4f},{report.desv3:.4f},"
           f"{report.n_pairs}\n")
    (out / "prediction_report.csv").write_text(header + row, encoding="utf-8")
    md = ("| Predictor | ADE (m) | FDE (m) | NLL | dESV1 | dESV2 | dESV3 | Pairs |\n"
          "|---|---|---|---|---|---|---|---|\n"
          f"| {args.predictor} | {report.ade:.4f} | {report.fde:.4f} "
          f"| {report.nll:.4f} | {report.desv1:.4f} | {report.desv2:.4f} "
          f"| {report.desv3:.4f} | {report.n_pairs} |\n")
    (out / "prediction_report.md").write_text(md, encoding="utf-8")
    print(f"ADE {report.ade:.4f}  FDE {report.fde:.4f}  NLL {report.nll:.4f}  "
          f"pairs {report.n_pairs} -> {out}")
    return 0


def _parse_sweep_values(param: str, raw: str) -> list:
    field_types = {f.name: f.type for f in dataclasses.fields(Config)}
    if param not in field_types:
        raise CliError(f"unknown config parameter {param!r}")
    kind = field_types[param]
    values = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if kind == "int":
            values.append(int(chunk))
        elif kind == "float":
            values.append(float(chunk))
        elif kind == "bool":
            values.append(chunk.lower() in ("1", "true", "yes"))
        else:
            raise CliError(f"parameter {param!r} of type {kind} cannot be swept")
    if not values:
        raise CliError("no sweep values given")
    return values


def cmd_sweep(args) -> int:
    settings = load_settings(args.config)
    values = _parse_sweep_values(args.param, args.values)
    selected, _, _ = _load_split(args.scenarios, args.split)
    try:
        predictor_factory = make_predictor_factory(
            args.predictor, sigma0=settings.predictor.sigma0,
            growth=settings.predictor.growth, sigma_gt=settings.predictor.sigma_gt)
    except ValueError as exc:
        raise CliError(str(exc))

    def policy_for(cfg_v: Config):
        return make_policy(args.planner, cfg_v, settings.weights, settings.solver)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def on_value(value, records, report):
        sub = out / f"{args.param}={value}"
        sub.mkdir(parents=True, exist_ok=True)
        (sub / "report.csv").write_text(
            emit_report_table([(f"{args.param}={value}", report)], "csv"),
            encoding="utf-8")

    try:
        results = sensitivity_sweep(args.param, values, policy_for, selected,
                                    predictor_factory, settings.cfg,
                                    on_value=on_value)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    rows = [(f"{args.param}={value}", report) for value, report in results]
    (out / "sweep.csv").write_text(emit_report_table(rows, "csv"), encoding="utf-8")
    (out / "sweep.md").write_text(emit_report_table(rows, "markdown"),
                                  encoding="utf-8")
    print(f"swept {args.param} over {values} -> {out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pednav",
        description="Crowd navigation engine over replayed pedestrian recordings")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", default=None,
                       help="settings JSON (default: $PEDNAV_CONFIG if set)")

    p = sub.add_parser("extract", help="build scenarios from a trajectory CSV")
    p.add_argument("--input", required=True, help="trajectory CSV path")
    p.add_argument("--out", required=True, help="scenario directory to create")
    p.add_argument("--fps", type=float, default=2.0, help="recording frame rate")
    p.add_argument("--min-frames", type=int, default=10,
                   help="drop vehicles recorded fewer frames than this")
    p.add_argument("--seed", type=int, default=0, help="split shuffle seed")
    add_config(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("synth", help="generate synthetic scenarios")
    p.add_argument("--template", required=True, choices=TEMPLATES)
    p.add_argument("--count", type=int, default=1, help="number of scenarios")
    p.add_argument("--peds", type=int, default=3, help="pedestrians per scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    add_config(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="evaluate a planner over a split")
    p.add_argument("--scenarios", required=True, help="scenario directory")
    p.add_argument("--split", default="test",
                   help="train, test, val, or all (default: test)")
    p.add_argument("--planner", default="mpc_md",
                   help="mpc_ed_hard | mpc_ed_soft | mpc_md | straight | stop "
                        "| external:<endpoint>")
    p.add_argument("--predictor", default="cv",
                   help="cv | gt | external:<endpoint>")
    p.add_argument("--seed", type=int, default=None, help="override solver seed")
    p.add_argument("--out", required=True)
    add_config(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="serve environments over TCP or stdio")
    p.add_argument("--scenarios", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--bind", help="host:port to listen on")
    group.add_argument("--stdio", action="store_true",
                       help="speak the protocol over stdin/stdout")
    p.add_argument("--predictor", default="cv")
    p.add_argument("--records", default=None,
                   help="directory for per-session episode records")
    add_config(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("score-predictor",
                       help="calibration metrics on replay windows")
    p.add_argument("--scenarios", required=True)
    p.add_argument("--split", default="val")
    p.add_argument("--predictor", default="cv")
    p.add_argument("--out", required=True)
    add_config(p)
    p.set_defaults(func=cmd_score_predictor)

    p = sub.add_parser("sweep", help="sensitivity sweep over one config parameter")
    p.add_argument("--param", required=True, help="Config field name, e.g. r_goal")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--scenarios", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--planner", default="mpc_md")
    p.add_argument("--predictor", default="cv")
    p.add_argument("--out", required=True)
    add_config(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
