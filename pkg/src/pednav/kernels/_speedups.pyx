# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of kernels._reference. Keep the two in lockstep."""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, remainder

cnp.import_array()

ED_HARD = 0
ED_SOFT = 1
MD_HARD = 2

cdef double PI = 3.141592653589793
cdef double TWO_PI = 6.283185307179586


cdef inline double _wrap(double theta) noexcept nogil:
    cdef double w = remainder(theta, TWO_PI)
    if w <= -PI:
        w += TWO_PI
    return w


def rollout_positions(object actions, double x0, double y0, double theta0,
                      double dt):
    """Roll N action sequences through unicycle kinematics. See _reference."""
    cdef cnp.ndarray actions_arr = np.ascontiguousarray(actions, dtype=np.float64)
    cdef double[:, :, ::1] acts = actions_arr
    cdef Py_ssize_t n = acts.shape[0]
    cdef Py_ssize_t k = acts.shape[1]
    px_arr = np.empty((n, k))
    py_arr = np.empty((n, k))
    cdef double[:, ::1] px = px_arr
    cdef double[:, ::1] py = py_arr
    cdef Py_ssize_t i, s
    cdef double x, y, th
    with nogil:
        for i in range(n):
            x = x0
            y = y0
            th = theta0
            for s in range(k):
                th = _wrap(th + acts[i, s, 1])
                x = x + acts[i, s, 0] * cos(th) * dt
                y = y + acts[i, s, 0] * sin(th) * dt
                px[i, s] = x
                py[i, s] = y
    return px_arr, py_arr


def evaluate_samples(object actions, double x0, double y0, double theta0,
                     double dt, double goal_x, double goal_y, double p0_dist,
                     object ped_mx, object ped_my, object inv_xx,
                     object inv_xy, object inv_yy, object md_floor,
                     int variant, double q_v, double q_dtheta, double q_p,
                     double q_ed, double keepout, double hard_floor,
                     double slack_bound, double eps):
    """Score a batch of candidate action sequences. See _reference."""
    if variant < 0 or variant > 2:
        raise ValueError(f"unknown variant code {variant}")
    cdef cnp.ndarray actions_arr = np.ascontiguousarray(actions, dtype=np.float64)
    cdef double[:, :, ::1] acts = actions_arr
    cdef Py_ssize_t n = acts.shape[0]
    cdef Py_ssize_t k = acts.shape[1]
    cdef double[:, ::1] pmx = np.ascontiguousarray(ped_mx, dtype=np.float64)
    cdef double[:, ::1] pmy = np.ascontiguousarray(ped_my, dtype=np.float64)
    cdef double[:, ::1] ixx = np.ascontiguousarray(inv_xx, dtype=np.float64)
    cdef double[:, ::1] ixy = np.ascontiguousarray(inv_xy, dtype=np.float64)
    cdef double[:, ::1] iyy = np.ascontiguousarray(inv_yy, dtype=np.float64)
    cdef double[:, ::1] dfloor = np.ascontiguousarray(md_floor, dtype=np.float64)
    cdef Py_ssize_t n_peds = pmx.shape[0]

    cost_arr = np.empty(n)
    viol_arr = np.empty(n)
    slack_arr = np.empty(n)
    px_arr = np.empty((n, k))
    py_arr = np.empty((n, k))
    cdef double[::1] cost = cost_arr
    cdef double[::1] viol = viol_arr
    cdef double[::1] slack = slack_arr
    cdef double[:, ::1] px = px_arr
    cdef double[:, ::1] py = py_arr

    cdef Py_ssize_t i, s, j
    cdef double x, y, th, v, w, tx, ty, dg, dx, dy, d, dd, q, md, gap, f, sh
    cdef double c, need, floor_violation, md_short, sl

    with nogil:
        for i in range(n):
            x = x0
            y = y0
            th = theta0
            c = 0.0
            need = 0.0
            floor_violation = 0.0
            md_short = 0.0
            for s in range(k):
                v = acts[i, s, 0]
                w = acts[i, s, 1]
                c += q_v * v * v + q_dtheta * w * w
                th = _wrap(th + w)
                x = x + v * cos(th) * dt
                y = y + v * sin(th) * dt
                px[i, s] = x
                py[i, s] = y
                tx = x - goal_x
                ty = y - goal_y
                dg = sqrt(tx * tx + ty * ty) / p0_dist
                c += q_p * dg * dg
                for j in range(n_peds):
                    dx = x - pmx[j, s]
                    dy = y - pmy[j, s]
                    d = sqrt(dx * dx + dy * dy)
                    if s < k - 1:
                        dd = d if d > eps else eps
                        c += q_ed / (dd * dd)
                    if variant == 2:
                        q = (ixx[j, s] * dx * dx + 2.0 * ixy[j, s] * dx * dy
                             + iyy[j, s] * dy * dy)
                        md = sqrt(q) if q > 0.0 else 0.0
                        sh = dfloor[j, s] - md
                        if sh > md_short:
                            md_short = sh
                    else:
                        gap = keepout - d
                        if gap > need:
                            need = gap
                        f = hard_floor - d
                        if f > floor_violation:
                            floor_violation = f
            if variant == 0:
                viol[i] = need
                slack[i] = 0.0
            elif variant == 1:
                sl = need if need < slack_bound else slack_bound
                c += sl * sl
                slack[i] = sl
                gap = need - slack_bound
                if gap < 0.0:
                    gap = 0.0
                viol[i] = gap if gap > floor_violation else floor_violation
            else:
                viol[i] = md_short
                slack[i] = 0.0
            cost[i] = c
    return cost_arr, viol_arr, slack_arr, px_arr, py_arr
