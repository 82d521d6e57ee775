"""Cross-entropy sampling solver for the planning problem.

Single shooting over action sequences: sample candidate sequences from a
per-dimension Gaussian clipped to the action box, score them with the batch
kernel, refit the distribution to the elite set, repeat. Elites survive into
the next pool, which makes the elite mean cost non-increasing; that is
asserted on every solve. Every solve draws from a fresh seeded generator, so
a solve is a pure function of (problem, params).
"""

from __future__ import annotations

import math
import time

import numpy as np

from .. import kernels
from ..core import Action
from .problem import (CONSTRAINT_TOL, DIST_EPS, MpcProblem, MpcSolution,
                      SolverParams, SolverStats, check_constraints, md_floor)

_VARIANT_CODES = {"ed_hard": kernels.ED_HARD, "ed_soft": kernels.ED_SOFT,
                  "md_hard": kernels.MD_HARD}


def _track_arrays(problem: MpcProblem):
    """Flatten predicted tracks into the (P, K) arrays the kernel eats."""
    cfg = problem.cfg
    n_peds = len(problem.tracks)
    k = cfg.horizon
    mx = np.zeros((n_peds, k))
    my = np.zeros((n_peds, k))
    inv_xx = np.zeros((n_peds, k))
    inv_xy = np.zeros((n_peds, k))
    inv_yy = np.zeros((n_peds, k))
    floor = np.zeros((n_peds, k))
    for p, track in enumerate(problem.tracks):
        for s, g in enumerate(track.steps):
            mx[p, s] = g.mx
            my[p, s] = g.my
            det = g.det
            inv_xx[p, s] = g.syy / det
            inv_xy[p, s] = -g.sxy / det
            inv_yy[p, s] = g.sxx / det
            floor[p, s] = md_floor(g, cfg)
    return mx, my, inv_xx, inv_xy, inv_yy, floor


def solve(problem: MpcProblem, params: SolverParams = SolverParams()) -> MpcSolution:
    """Optimize an action sequence for the problem. Deterministic per seed."""
    t_start = time.perf_counter()
    cfg = problem.cfg
    w = problem.weights
    start = problem.start
    p0_dist = math.hypot(start.px - problem.goal[0], start.py - problem.goal[1])
    if p0_dist <= 0:
        raise ValueError("start coincides with the goal; nothing to plan")

    k = cfg.horizon
    variant = _VARIANT_CODES[problem.variant]
    mx, my, inv_xx, inv_xy, inv_yy, floor = _track_arrays(problem)

    lo = np.array([cfg.v_min, -cfg.dtheta_max])
    hi = np.array([cfg.v_max, cfg.dtheta_max])
    mean = np.tile((lo + hi) / 2.0, (k, 1))
    std = np.tile((hi - lo) / 2.0, (k, 1))

    rng = np.random.default_rng(params.seed)
    elites = None
    elite_means: list[float] = []
    best_key = None
    best = None
    evaluated = 0

    for _ in range(params.n_iters):
        raw = rng.standard_normal((params.n_samples, k, 2)) * std + mean
        np.clip(raw, lo, hi, out=raw)
        pool = raw if elites is None else np.concatenate([elites, raw])
        cost, viol, slack, px, py = kernels.evaluate_samples(
            pool, start.px, start.py, start.theta, cfg.dt,
            problem.goal[0], problem.goal[1], p0_dist,
            mx, my, inv_xx, inv_xy, inv_yy, floor,
            variant, w.q_v, w.q_dtheta, w.q_p, w.q_ed,
            cfg.combined_radius, cfg.contact_radius, w.slack_bound, DIST_EPS)
        evaluated += len(pool)

        infeasible = viol > CONSTRAINT_TOL
        # feasible samples rank by cost, infeasible ones after them by violation
        rank = np.where(infeasible, viol, cost)
        order = np.lexsort((np.arange(len(pool)), rank, infeasible.astype(np.int8)))
        elite_idx = order[: params.n_elites]

        effective = np.where(infeasible, np.inf, cost)
        elite_mean = float(np.mean(effective[elite_idx]))
        if elite_means and not elite_mean <= elite_means[-1]:
            raise AssertionError(
                "elite mean cost increased across iterations: "
                f"{elite_means[-1]} -> {elite_mean}")
        elite_means.append(elite_mean)

        top = order[0]
        top_key = (bool(infeasible[top]), float(rank[top]))
        if best_key is None or top_key < best_key:
            best_key = top_key
            best = (pool[top].copy(), px[top].copy(), py[top].copy(),
                    float(cost[top]), float(slack[top]))

        elites = pool[elite_idx].copy()
        mean = elites.mean(axis=0)
        std = np.maximum(elites.std(axis=0), params.std_floor)

    best_actions, best_px, best_py, best_cost, best_slack = best
    actions = tuple(Action(v=float(a[0]), dtheta=float(a[1])) for a in best_actions)
    planned = tuple((float(x), float(y)) for x, y in zip(best_px, best_py))
    # the public feasibility verdict comes from the plain checker, not the kernel
    feasible, violation = check_constraints(
        planned, problem.tracks, problem.variant, cfg, slack=best_slack)
    stats = SolverStats(
        iterations=params.n_iters,
        samples_evaluated=evaluated,
        wall_time=time.perf_counter() - t_start,
        elite_mean_costs=tuple(elite_means),
    )
    return MpcSolution(
        actions=actions, planned_positions=planned, cost=best_cost,
        feasible=feasible, violation=violation, slack_used=best_slack,
        stats=stats)
