"""Compare the compiled evaluation kernel against the numpy reference.

Times evaluate_samples on a planner-shaped batch for both backends, checks
they agree, and times a full solve with whichever backend the package
selected at import. Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --samples 512 --peds 8 --repeats 50
"""

import argparse
import math
import statistics
import time

import numpy as np

from pednav import kernels
from pednav.core import Config, VehicleState
from pednav.mpc import MpcProblem, MpcWeights, SolverParams, solve
from pednav.uncertainty import Gaussian2D, PredictedTrack


def build_batch(cfg, n_samples, n_peds, seed):
    rng = np.random.default_rng(seed)
    k = cfg.horizon
    lo = np.array([cfg.v_min, -cfg.dtheta_max])
    hi = np.array([cfg.v_max, cfg.dtheta_max])
    actions = rng.uniform(lo, hi, size=(n_samples, k, 2))

    mx = rng.uniform(2.0, 12.0, size=(n_peds, k))
    my = rng.uniform(-4.0, 4.0, size=(n_peds, k))
    var = rng.uniform(0.05, 0.5, size=(n_peds, k))
    inv_xx = 1.0 / var
    inv_xy = np.zeros_like(var)
    inv_yy = 1.0 / var
    # keep-out radius in Mahalanobis units for each step's Gaussian
    floor = np.sqrt(np.maximum(
        -2.0 * np.log(cfg.delta * 2.0 * math.pi * var
                      / (math.pi * cfg.combined_radius ** 2)), 0.0))
    return actions, (mx, my, inv_xx, inv_xy, inv_yy, floor)


def time_backend(impl, actions, tracks, cfg, weights, variant, repeats):
    mx, my, inv_xx, inv_xy, inv_yy, floor = tracks
    args = (actions, 0.0, 0.0, 0.0, cfg.dt, 15.0, 0.0, 15.0,
            mx, my, inv_xx, inv_xy, inv_yy, floor,
            variant, weights.q_v, weights.q_dtheta, weights.q_p, weights.q_ed,
            cfg.combined_radius, cfg.contact_radius, weights.slack_bound,
            1e-6)
    impl.evaluate_samples(*args)  # warm up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = impl.evaluate_samples(*args)
        times.append(time.perf_counter() - t0)
    return out, min(times), statistics.median(times)


def time_full_solve(cfg, n_peds, repeats):
    rng = np.random.default_rng(7)
    tracks = []
    for p in range(n_peds):
        x = rng.uniform(3.0, 10.0)
        y = rng.uniform(-3.0, 3.0)
        steps = tuple(Gaussian2D(mx=x, my=y + 0.1 * s, sxx=0.09, sxy=0.0,
                                 syy=0.09) for s in range(cfg.horizon))
        tracks.append(PredictedTrack(ped_id=f"p{p}", steps=steps))
    start = VehicleState(px=0.0, py=0.0, vx=0.0, vy=0.0, theta=0.0,
                         radius=cfg.av_radius, v_pref=cfg.v_max,
                         gx=15.0, gy=0.0)
    problem = MpcProblem(start=start, goal=(15.0, 0.0), tracks=tuple(tracks),
                         variant="md_hard", weights=MpcWeights(), cfg=cfg)
    solve(problem, SolverParams(seed=0))  # warm up
    times = []
    for i in range(repeats):
        t0 = time.perf_counter()
        solve(problem, SolverParams(seed=i))
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--samples", type=int, default=288,
                        help="batch size per call (solver default pool)")
    parser.add_argument("--peds", type=int, default=5)
    parser.add_argument("--repeats", type=int, default=100)
    args = parser.parse_args()

    cfg = Config()
    weights = MpcWeights()
    actions, tracks = build_batch(cfg, args.samples, args.peds, seed=0)

    backends = [("python", kernels.reference)]
    if kernels.compiled is not None:
        backends.append(("compiled", kernels.compiled))

    print(f"batch {args.samples} x horizon {cfg.horizon} x {args.peds} peds, "
          f"best/median of {args.repeats}")
    results = {}
    for variant_name, variant in (("ed_hard", kernels.ED_HARD),
                                  ("ed_soft", kernels.ED_SOFT),
                                  ("md_hard", kernels.MD_HARD)):
        for name, impl in backends:
            out, best, median = time_backend(impl, actions, tracks, cfg,
                                             weights, variant, args.repeats)
            results[(variant_name, name)] = (out, best)
            print(f"  {variant_name:8s} {name:9s} "
                  f"{best * 1e6:9.1f} us  {median * 1e6:9.1f} us")
        if kernels.compiled is not None:
            ref = results[(variant_name, "python")][0]
            fast = results[(variant_name, "compiled")][0]
            worst = max(float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
                        for a, b in zip(ref, fast))
            speedup = (results[(variant_name, "python")][1]
                       / results[(variant_name, "compiled")][1])
            print(f"  {variant_name:8s} agreement {worst:.3e}, "
                  f"speedup x{speedup:.1f}")

    best, median = time_full_solve(cfg, args.peds, max(args.repeats // 10, 3))
    print(f"full solve ({kernels.BACKEND} backend, {args.peds} peds): "
          f"best {best * 1e3:.2f} ms, median {median * 1e3:.2f} ms")


if __name__ == "__main__":
    main()
