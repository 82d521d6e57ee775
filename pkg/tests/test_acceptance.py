"""Acceptance gate: one test per contract criterion, at the stated tolerance.

Each test here is a release gate for the package as a whole. They check the
public surface only, end to end, and every tolerance is the contractual one,
not a convenient one. Run with -v to get one pass/fail line per criterion.
"""

import csv
import dataclasses
import io
import json
import math
import threading
import time

import numpy as np
import pytest

from pednav.cli import main as cli_main
from pednav.core import Action, Config, VehicleState, unicycle_step
from pednav.data import SplitSpec, split_scenarios, synth_scenarios
from pednav.env import CrowdNavEnv, compute_reward, prediction_penalty
from pednav.mpc import MpcProblem, MpcWeights, SolverParams, solve
from pednav.policies import StopPolicy
from pednav.protocol import EnvClient, EnvServer
from pednav.runner import make_predictor_factory, run_episode
from pednav.uncertainty import (Gaussian2D, PredictedTrack,
                                calibration_metrics, collision_probability,
                                collision_probability_oracle, mahalanobis,
                                md_squared_threshold, nll)

CFG = Config()


def av_state(px=0.0, py=0.0, vx=0.0, vy=0.0, theta=0.0, gx=40.0, gy=0.0):
    return VehicleState(px=px, py=py, vx=vx, vy=vy, theta=theta,
                        radius=CFG.av_radius, v_pref=CFG.v_max, gx=gx, gy=gy)


def random_gaussian(rng, eig_lo, eig_hi, center_scale=3.0):
    angle = rng.uniform(0.0, math.pi)
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    eigs = rng.uniform(eig_lo, eig_hi, size=2)
    cov = rot @ np.diag(eigs) @ rot.T
    mx, my = rng.normal(0.0, center_scale, size=2)
    return Gaussian2D(mx=float(mx), my=float(my), sxx=float(cov[0, 0]),
                      sxy=float(cov[0, 1]), syy=float(cov[1, 1]))


def point_at_md(g, d, direction):
    """A point at Mahalanobis distance d from g's mean, along a unit vector."""
    chol = np.linalg.cholesky(np.array([[g.sxx, g.sxy], [g.sxy, g.syy]]))
    offset = d * (chol @ np.asarray(direction))
    return (g.mx + float(offset[0]), g.my + float(offset[1]))


# ---------------------------------------------------------------------------
# criterion 1: closed-form collision probability vs the Monte Carlo oracle

def test_collision_probability_tracks_monte_carlo():
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    r = CFG.combined_radius
    for case in range(20):
        # eigenvalues keep sigma_min at least twice the disc radius
        g = random_gaussian(rng, (2.0 * r) ** 2 * 1.05, 100.0)
        d = rng.uniform(0.0, 2.0)
        u = rng.normal(size=2)
        point = point_at_md(g, d, u / np.linalg.norm(u))
        closed = collision_probability(point, g, r)
        mc = collision_probability_oracle(point, g, r, n_samples=1_000_000,
                                          seed=case)
        assert mc > 0.0, f"case {case}: oracle found no mass, bad fixture"
        assert abs(closed - mc) / mc <= 0.25, \
            f"case {case}: closed {closed} vs oracle {mc}"

    # at the mean of an isotropic Gaussian the disc integral is exact
    sigma = 3.0
    g = Gaussian2D(mx=0.0, my=0.0, sxx=sigma ** 2, sxy=0.0, syy=sigma ** 2)
    exact = 1.0 - math.exp(-r * r / (2.0 * sigma * sigma))
    mc = collision_probability_oracle((0.0, 0.0), g, r, n_samples=1_000_000,
                                      seed=99)
    stderr = math.sqrt(exact * (1.0 - exact) / 1_000_000)
    assert abs(mc - exact) <= 3.0 * stderr

    assert time.perf_counter() - t0 < 30.0


# ---------------------------------------------------------------------------
# criterion 2: likelihood and distance identities

def test_nll_and_mahalanobis_identities():
    unit = Gaussian2D(mx=0.0, my=0.0, sxx=1.0, sxy=0.0, syy=1.0)
    assert nll((0.0, 0.0), unit) == pytest.approx(math.log(2.0 * math.pi),
                                                  abs=1e-9)
    stretched = Gaussian2D(mx=0.0, my=0.0, sxx=4.0, sxy=0.0, syy=1.0)
    assert mahalanobis((2.0, 0.0), stretched) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# criterion 3: calibration statistics are sound on self-sampled truth

def test_calibration_coverage_on_sampled_truth():
    rng = np.random.default_rng(7)
    steps_per_track, n_tracks = 4, 2500  # 10_000 scored pairs
    gt_tracks, pred_tracks = [], []
    for i in range(n_tracks):
        steps, truth = [], []
        for _ in range(steps_per_track):
            g = random_gaussian(rng, 0.05, 2.0)
            # draw the ground truth from the predicted distribution itself
            chol = np.linalg.cholesky(np.array([[g.sxx, g.sxy],
                                                [g.sxy, g.syy]]))
            p = np.array([g.mx, g.my]) + chol @ rng.standard_normal(2)
            truth.append((float(p[0]), float(p[1])))
            steps.append(g)
        gt_tracks.append(tuple(truth))
        pred_tracks.append(PredictedTrack(ped_id=f"t{i}", steps=tuple(steps)))
    report = calibration_metrics(gt_tracks, pred_tracks)
    assert report.n_pairs == 10_000
    assert abs(report.desv1) <= 0.02
    assert abs(report.desv2) <= 0.02
    assert abs(report.desv3) <= 0.02

    # perfectly confident predictor: every truth point sits on its mean, so
    # the one-sigma coverage saturates at 1 and the gap is exactly 1 - 0.39
    at_mean = [tuple((g.mx, g.my) for g in t.steps) for t in pred_tracks]
    perfect = calibration_metrics(at_mean, pred_tracks)
    assert perfect.desv1 == 0.61


# ---------------------------------------------------------------------------
# criterion 4: reward engine constants

def test_reward_engine_branch_constants():
    cfg = CFG
    no_peds, no_tracks = (), ()

    prev = av_state(px=36.0)
    cur = av_state(px=38.5)  # 1.5 m from the goal at (40, 0)
    reward, br = compute_reward(prev, cur, Action(2.0, 0.0), no_tracks,
                                no_peds, cfg)
    assert reward == 10.0 and br.branch == "goal"

    from pednav.core import PedestrianState

    overlap = (PedestrianState(id="p", px=1.0, py=0.0, radius=0.3),)
    reward, br = compute_reward(av_state(), av_state(), Action(0.0, 0.0),
                                no_tracks, overlap, cfg)
    assert reward == -20.0 and br.branch == "collision"

    # pedestrian surface half a personal space away
    near = (PedestrianState(id="p", px=cfg.av_radius + 0.3 + 0.5, py=0.0,
                            radius=0.3),)
    flat = dataclasses.replace(cfg, speed_dependent_danger=False)
    reward, br = compute_reward(av_state(), av_state(), Action(0.0, 0.0),
                                no_tracks, near, flat)
    assert reward == -10.0 and br.branch == "danger"
    moving = av_state(vx=cfg.v_max)
    reward, br = compute_reward(av_state(), moving, Action(cfg.v_max, 0.0),
                                no_tracks, near, cfg)
    assert reward == -20.0 and br.branch == "danger"

    # anticipatory penalty: earliest firing step of the worst pedestrian
    far = Gaussian2D(mx=100.0, my=100.0, sxx=0.01, sxy=0.0, syy=0.01)
    hot = Gaussian2D(mx=0.0, my=0.0, sxx=0.01, sxy=0.0, syy=0.01)
    k2_only = PredictedTrack(ped_id="a", steps=(far, hot, far, far, far, far))
    assert prediction_penalty((0.0, 0.0), (k2_only,), cfg) == -5.0
    k1_and_k3 = PredictedTrack(ped_id="a", steps=(hot, far, hot, far, far, far))
    assert prediction_penalty((0.0, 0.0), (k1_and_k3,), cfg) == -10.0


# ---------------------------------------------------------------------------
# criterion 5: keep-out boundary agrees with the probability threshold

def test_md_boundary_matches_probability_threshold():
    rng = np.random.default_rng(13)
    delta, r = 0.1, CFG.combined_radius
    for case in range(50):
        g = random_gaussian(rng, 0.05, 0.8)
        d_threshold = math.sqrt(md_squared_threshold(g, r, delta))
        u = rng.normal(size=2)
        u /= np.linalg.norm(u)

        # independent bisection on the closed-form probability itself
        lo, hi = 0.0, 30.0
        assert collision_probability(point_at_md(g, lo, u), g, r) > delta
        assert collision_probability(point_at_md(g, hi, u), g, r) < delta
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if collision_probability(point_at_md(g, mid, u), g, r) > delta:
                lo = mid
            else:
                hi = mid
        d_bisect = 0.5 * (lo + hi)
        assert abs(d_threshold - d_bisect) <= 1e-6, f"case {case}"


# ---------------------------------------------------------------------------
# criterion 6: planner behavior bundle

def qp_straight_line_speeds(cfg, weights, goal_dist):
    """Optimal straight-line speed profile under the action box.

    With the goal on the heading axis the cost is quadratic in per-step
    speeds. The top speed binds for near goals, so this solves the bound
    constraint by active set: clamp speeds that want to exceed v_max,
    re-solve the free ones, and verify the KKT conditions at the end.
    """
    k = cfg.horizon
    c = np.tril(np.ones((k, k)))
    scale = weights.q_p / (goal_dist * goal_dist)
    a = weights.q_v * np.eye(k) + scale * cfg.dt * cfg.dt * (c.T @ c)
    b = scale * cfg.dt * goal_dist * (c.T @ np.ones(k))
    clamped = np.zeros(k, dtype=bool)
    for _ in range(k + 1):
        v = np.full(k, cfg.v_max)
        free = ~clamped
        if free.any():
            rhs = b[free] - a[np.ix_(free, clamped)] @ v[clamped]
            v[free] = np.linalg.solve(a[np.ix_(free, free)], rhs)
        over = free & (v > cfg.v_max)
        if not over.any():
            break
        clamped |= over
    grad = a @ v - b
    assert np.all(v >= cfg.v_min)
    assert np.all(grad[clamped] <= 1e-9)
    assert np.allclose(grad[~clamped], 0.0, atol=1e-9)
    return v


def assert_elites_non_increasing(sol):
    costs = sol.stats.elite_mean_costs
    assert all(b <= a for a, b in zip(costs, costs[1:]))


def static_track(x, y, steps=None, sigma=0.3):
    var = sigma * sigma
    return PredictedTrack(ped_id=f"({x},{y})", steps=tuple(
        Gaussian2D(mx=x, my=y, sxx=var, sxy=0.0, syy=var)
        for _ in range(steps or CFG.horizon)))


def test_planner_behavior_bundle():
    weights = MpcWeights()
    solves = []

    # empty scene: the rollout must end where the straight-line optimum ends
    goal_dist = 10.0
    empty = MpcProblem(start=av_state(gx=goal_dist), goal=(goal_dist, 0.0),
                       tracks=(), variant="ed_hard", weights=weights, cfg=CFG)
    sol = solve(empty, SolverParams(seed=0))
    solves.append(sol)
    assert sol.feasible
    v_opt = qp_straight_line_speeds(CFG, weights, goal_dist)
    analytic_final = goal_dist - CFG.dt * float(np.sum(v_opt))
    fx, fy = sol.planned_positions[-1]
    cem_final = math.hypot(fx - goal_dist, fy)
    assert abs(cem_final - analytic_final) <= 0.1

    # a pedestrian crossing ahead: the hard keep-out must clear 2.3 m at
    # every planned point
    crossing = PredictedTrack(ped_id="x", steps=tuple(
        Gaussian2D(mx=5.0, my=1.5 - 0.5 * k, sxx=0.09, sxy=0.0, syy=0.09)
        for k in range(1, CFG.horizon + 1)))
    problem = MpcProblem(start=av_state(gx=12.0), goal=(12.0, 0.0),
                         tracks=(crossing,), variant="ed_hard",
                         weights=weights, cfg=CFG)
    sol = solve(problem, SolverParams(seed=1))
    solves.append(sol)
    assert sol.feasible
    for pos, g in zip(sol.planned_positions, crossing.steps):
        assert math.hypot(pos[0] - g.mx, pos[1] - g.my) >= 2.3 - 1e-6

    # a tight standing ring around the start: no plan can satisfy the hard
    # keep-out, and the solver must say so instead of pretending
    ring = tuple(static_track(2.0 * math.cos(a), 2.0 * math.sin(a))
                 for a in np.linspace(0.0, 2.0 * math.pi, 8, endpoint=False))
    trapped = MpcProblem(start=av_state(gx=20.0), goal=(20.0, 0.0),
                         tracks=ring, variant="ed_hard", weights=weights,
                         cfg=CFG)
    sol = solve(trapped, SolverParams(seed=2))
    solves.append(sol)
    assert not sol.feasible
    assert sol.violation > 0.0

    for sol in solves:
        assert_elites_non_increasing(sol)
        assert sol.stats.wall_time < 0.5


# ---------------------------------------------------------------------------
# criterion 7: reruns of the evaluation command are byte-identical

def _masked_tree(root):
    """Evaluation outputs with wall-clock timing fields blanked."""
    result = {}
    for path in sorted(root.rglob("*")):
        if path.is_dir():
            continue
        rel = path.relative_to(root).as_posix()
        data = path.read_bytes()
        if rel.startswith("records/"):
            obj = json.loads(data)
            for step in obj["steps"]:
                step["planner_time"] = 0.0
            data = json.dumps(obj, sort_keys=True).encode()
        elif rel == "metrics.csv":
            rows = list(csv.reader(io.StringIO(data.decode())))
            col = rows[0].index("compute_time")
            for row in rows[1:]:
                row[col] = ""
            data = "\n".join(",".join(r) for r in rows).encode()
        elif rel == "report.csv":
            rows = list(csv.reader(io.StringIO(data.decode())))
            for name in ("compute_time_mean", "compute_time_std"):
                col = rows[0].index(name)
                for row in rows[1:]:
                    row[col] = ""
            data = "\n".join(",".join(r) for r in rows).encode()
        elif rel == "report.md":
            lines = data.decode().splitlines()
            for i, line in enumerate(lines[2:], start=2):
                cells = line.split("|")
                cells[-3] = " masked "
                lines[i] = "|".join(cells)
            data = "\n".join(lines).encode()
        result[rel] = data
    return result


def test_evaluation_reruns_are_byte_identical(tmp_path, capsys):
    scen_dir = tmp_path / "scen"
    assert cli_main(["synth", "--template", "crossing", "--count", "2",
                     "--peds", "2", "--seed", "11",
                     "--out", str(scen_dir)]) == 0
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        code = cli_main(["run", "--scenarios", str(scen_dir), "--split",
                         "all", "--planner", "mpc_md", "--predictor", "cv",
                         "--seed", "17", "--out", str(out)])
        assert code == 0
        outs.append(out)
    capsys.readouterr()
    first, second = _masked_tree(outs[0]), _masked_tree(outs[1])
    assert sorted(first) == sorted(second)
    mismatched = [rel for rel in first if first[rel] != second[rel]]
    assert mismatched == []


# ---------------------------------------------------------------------------
# criterion 8: split apportionment at the reference corpus size

def test_split_sizes_at_310_scenarios():
    scenarios = [synth_scenarios("static_crowd", 1, seed, CFG)
                 for seed in range(310)]
    split = split_scenarios(scenarios, SplitSpec(), seed=0)
    assert (len(split.train), len(split.test), len(split.val)) == (198, 62, 50)


# ---------------------------------------------------------------------------
# criterion 9: timeout budget and exact termination time

def test_timeout_budget_and_exact_termination():
    scenario = synth_scenarios("static_crowd", 0, 0, CFG)
    assert scenario.duration == 20.0
    assert scenario.time_budget == 35.0
    env = CrowdNavEnv(scenario, make_predictor_factory("cv")(scenario), CFG)
    record = run_episode(env, StopPolicy())
    assert record.terminal_kind == "timeout"
    assert record.nav_time == 35.0
    assert len(record.steps) == 70


# ---------------------------------------------------------------------------
# criterion 10: protocol soak with an in-process reward replay

def scripted_action(episode, step):
    v = 0.5 * ((episode + step) % 8)
    dtheta = 0.02 * (((3 * episode + 2 * step) % 9) - 4)
    return v, dtheta


def test_protocol_soak_rewards_match_in_process_replay(tmp_path):
    cfg = CFG
    scenarios = {}
    for seed in range(5):
        sc = synth_scenarios("crossing", 2, seed, cfg)
        scenarios[sc.id] = sc
    splits = {"all": sorted(scenarios)}
    server = EnvServer(("127.0.0.1", 0), scenarios, splits, cfg,
                       make_predictor_factory("cv"))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address
    logs = []
    try:
        with EnvClient(f"{host}:{port}") as client:
            ids = client.list_scenarios("all")
            assert len(ids) == 5
            for episode in range(25):
                sid = ids[episode % 5]
                client.reset(sid)
                steps, done, k = [], False, 0
                while not done:
                    v, dtheta = scripted_action(episode, k)
                    reply = client.step(v, dtheta)
                    steps.append((v, dtheta, reply["reward"]))
                    done = reply["done"]
                    k += 1
                logs.append((sid, steps))
    finally:
        server.shutdown()
        server.server_close()

    assert len(logs) == 25
    factory = make_predictor_factory("cv")
    for sid, steps in logs:
        env = CrowdNavEnv(scenarios[sid], factory(scenarios[sid]), cfg)
        env.reset()
        for j, (v, dtheta, served_reward) in enumerate(steps):
            outcome = env.step(Action(v=v, dtheta=dtheta))
            assert outcome.reward == served_reward, f"{sid} step {j}"
            assert outcome.done == (j == len(steps) - 1)
