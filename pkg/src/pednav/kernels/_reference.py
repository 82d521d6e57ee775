"""Pure numpy implementation of the planner's batch evaluation kernel.

The compiled module _speedups implements the same two functions with the
same semantics; any change here must be mirrored there. Numerical results
of the two implementations agree to float64 rounding, not bit-for-bit.
"""

from __future__ import annotations

import numpy as np

ED_HARD = 0
ED_SOFT = 1
MD_HARD = 2

_PI = np.pi
_TWO_PI = 2.0 * np.pi


def _wrap(theta):
    """Vectorized wrap to (-pi, pi]."""
    w = np.mod(theta + _PI, _TWO_PI) - _PI
    return np.where(w == -_PI, _PI, w)


def rollout_positions(actions, x0, y0, theta0, dt):
    """Roll N action sequences through unicycle kinematics.

    Parameters
    ----------
    actions : (N, K, 2) float64, [speed, heading change] per step
    x0, y0, theta0 : start pose
    dt : step length, s

    Returns
    -------
    (px, py) : two (N, K) arrays, positions after steps 1..K
    """
    actions = np.asarray(actions, dtype=np.float64)
    n, k, _ = actions.shape
    px = np.empty((n, k))
    py = np.empty((n, k))
    th = np.full(n, theta0)
    x = np.full(n, x0)
    y = np.full(n, y0)
    for s in range(k):
        th = _wrap(th + actions[:, s, 1])
        x = x + actions[:, s, 0] * np.cos(th) * dt
        y = y + actions[:, s, 0] * np.sin(th) * dt
        px[:, s] = x
        py[:, s] = y
    return px, py


def evaluate_samples(actions, x0, y0, theta0, dt, goal_x, goal_y, p0_dist,
                     ped_mx, ped_my, inv_xx, inv_xy, inv_yy, md_floor,
                     variant, q_v, q_dtheta, q_p, q_ed,
                     keepout, hard_floor, slack_bound, eps):
    """Score a batch of candidate action sequences.

    Cost: per-step action quadratic, normalized goal-distance quadratic at
    every rolled position (the final one acting as the terminal term), and an
    inverse-square clearance cost against predicted means at the
    intermediate positions. The soft variant adds the squared slack it uses.

    Constraint handling depends on the variant:
      ED_HARD  keep every rolled position at least `keepout` from every mean
      ED_SOFT  keepout may shrink by at most slack_bound, never below
               hard_floor; the slack actually needed is returned
      MD_HARD  Mahalanobis distance to each predicted Gaussian must reach
               md_floor for that (pedestrian, step)

    Returns
    -------
    (cost, violation, slack, px, py)
        violation is 0 for satisfied constraints, else the worst shortfall
        in meters (ED) or Mahalanobis units (MD). The caller decides the
        feasibility tolerance.
    """
    actions = np.asarray(actions, dtype=np.float64)
    n, k, _ = actions.shape
    ped_mx = np.asarray(ped_mx, dtype=np.float64)
    ped_my = np.asarray(ped_my, dtype=np.float64)
    n_peds = ped_mx.shape[0]

    px, py = rollout_positions(actions, x0, y0, theta0, dt)
    v = actions[:, :, 0]
    w = actions[:, :, 1]
    cost = (q_v * v * v + q_dtheta * w * w).sum(axis=1)
    tx = px - goal_x
    ty = py - goal_y
    dg = np.sqrt(tx * tx + ty * ty) / p0_dist
    cost = cost + q_p * (dg * dg).sum(axis=1)

    need = np.zeros(n)
    floor_violation = np.zeros(n)
    md_short = np.zeros(n)
    if n_peds > 0:
        dx = px[:, None, :] - ped_mx[None, :, :]  # (N, P, K)
        dy = py[:, None, :] - ped_my[None, :, :]
        d = np.sqrt(dx * dx + dy * dy)
        if k > 1:
            inv_d = 1.0 / np.maximum(d[:, :, : k - 1], eps)
            cost = cost + q_ed * (inv_d * inv_d).sum(axis=(1, 2))
        if variant == MD_HARD:
            ixx = np.asarray(inv_xx, dtype=np.float64)[None, :, :]
            ixy = np.asarray(inv_xy, dtype=np.float64)[None, :, :]
            iyy = np.asarray(inv_yy, dtype=np.float64)[None, :, :]
            q = ixx * dx * dx + 2.0 * ixy * dx * dy + iyy * dy * dy
            md = np.sqrt(np.maximum(q, 0.0))
            floor = np.asarray(md_floor, dtype=np.float64)[None, :, :]
            md_short = np.maximum((floor - md).max(axis=(1, 2)), 0.0)
        else:
            need = np.maximum((keepout - d).max(axis=(1, 2)), 0.0)
            floor_violation = np.maximum((hard_floor - d).max(axis=(1, 2)), 0.0)

    slack = np.zeros(n)
    if variant == ED_HARD:
        violation = need
    elif variant == ED_SOFT:
        slack = np.minimum(need, slack_bound)
        cost = cost + slack * slack
        violation = np.maximum(need - slack_bound, floor_violation)
    elif variant == MD_HARD:
        violation = md_short
    else:
        raise ValueError(f"unknown variant code {variant}")
    return cost, violation, slack, px, py
