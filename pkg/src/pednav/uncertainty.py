"""Bivariate Gaussian predictions and the probabilistic collision model.

Predicted pedestrian positions are bivariate Gaussians. Collision risk is
approximated by multiplying the density at the vehicle position by the area
of the keep-out disc, which is cheap, differentiable in the inputs, and a
good match to the exact disc integral whenever the disc is not huge relative
to the covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Fraction of probability mass of a bivariate standard normal within
# Mahalanobis distance 1, 2, 3. Chi-square with 2 dof: 1 - exp(-i^2 / 2).
ESV_IDEAL = (0.39, 0.86, 0.99)


@dataclass(frozen=True)
class Gaussian2D:
    """Bivariate Gaussian, covariance stored as its upper triangle."""

    mx: float  # mean x, m
    my: float  # mean y, m
    sxx: float  # var(x), m^2
    sxy: float  # cov(x, y), m^2
    syy: float  # var(y), m^2

    def __post_init__(self):
        if not (self.sxx > 0.0 and self.syy > 0.0 and self.det > 0.0):
            raise ValueError(
                "covariance must be positive definite, got "
                f"sxx={self.sxx} sxy={self.sxy} syy={self.syy}"
            )

    @property
    def det(self) -> float:
        return self.sxx * self.syy - self.sxy * self.sxy

    @property
    def mean(self) -> tuple[float, float]:
        return (self.mx, self.my)

    @classmethod
    def isotropic(cls, mx: float, my: float, sigma: float) -> "Gaussian2D":
        return cls(mx=mx, my=my, sxx=sigma * sigma, sxy=0.0, syy=sigma * sigma)


@dataclass(frozen=True)
class PredictedTrack:
    """One pedestrian's predicted positions for steps 1..K ahead."""

    ped_id: str
    steps: tuple[Gaussian2D, ...]

    def __post_init__(self):
        if len(self.steps) == 0:
            raise ValueError("a predicted track needs at least one step")


def mahalanobis(point, g: Gaussian2D) -> float:
    """Mahalanobis distance from a point to the Gaussian.

    Parameters
    ----------
    point : (x, y) pair
    g : Gaussian2D

    Returns
    -------
    float
        sqrt((p - mu)^T Sigma^{-1} (p - mu)), >= 0.
    """
    dx = point[0] - g.mx
    dy = point[1] - g.my
    # 2x2 inverse written out; g guarantees det > 0
    dsq = (g.syy * dx * dx - 2.0 * g.sxy * dx * dy + g.sxx * dy * dy) / g.det
    # dsq is a quadratic form of a PD matrix, but float cancellation can
    # leave a tiny negative for near-singular covariances
    return math.sqrt(dsq) if dsq > 0.0 else 0.0


def nll(point, g: Gaussian2D) -> float:
    """Negative log likelihood of a point under the Gaussian.

    log(2 pi) + 0.5 log det Sigma + 0.5 d_MD^2. At the mean of a unit-variance
    Gaussian this is exactly log(2 pi).
    """
    d = mahalanobis(point, g)
    return math.log(2.0 * math.pi) + 0.5 * math.log(g.det) + 0.5 * d * d


def combined_loss(gt_points, preds, weight: float = 1.0) -> float:
    """Sum of NLL plus a weighted sum of Mahalanobis distances.

    Used to score predicted tracks against ground truth positions. The
    Mahalanobis term keeps the loss honest when a predictor inflates its
    covariance to buy likelihood.

    Parameters
    ----------
    gt_points : sequence of (x, y)
    preds : sequence of Gaussian2D, same length
    weight : float, >= 0
    """
    if weight < 0:
        raise ValueError("weight must be non-negative")
    if len(gt_points) != len(preds):
        raise ValueError(
            f"length mismatch: {len(gt_points)} points vs {len(preds)} predictions"
        )
    total = 0.0
    for p, g in zip(gt_points, preds):
        total += nll(p, g) + weight * mahalanobis(p, g)
    return total


def collision_probability(p_av, g: Gaussian2D, combined_radius: float) -> float:
    """Approximate probability that the pedestrian is inside the keep-out disc.

    Density at the vehicle position times the disc area pi r^2, clamped to
    [0, 1]. The clamp engages when the disc dwarfs the covariance and the
    point sits near the mean.
    """
    if combined_radius <= 0:
        raise ValueError("combined_radius must be positive")
    d = mahalanobis(p_av, g)
    density = math.exp(-0.5 * d * d) / (2.0 * math.pi * math.sqrt(g.det))
    p = math.pi * combined_radius * combined_radius * density
    return min(p, 1.0)


def collision_probability_oracle(
    p_av,
    g: Gaussian2D,
    combined_radius: float,
    n_samples: int = 1_000_000,
    seed: int = 0,
) -> float:
    """Monte Carlo estimate of the exact disc integral.

    Samples pedestrian positions from the Gaussian and counts the fraction
    landing within combined_radius of the vehicle position. Slow but
    assumption-free; kept as the reference the closed form is checked against.
    """
    if combined_radius <= 0:
        raise ValueError("combined_radius must be positive")
    if n_samples < 10_000:
        raise ValueError("n_samples too small for a stable estimate")
    rng = np.random.default_rng(seed)
    cov = np.array([[g.sxx, g.sxy], [g.sxy, g.syy]])
    chol = np.linalg.cholesky(cov)
    pts = rng.standard_normal((n_samples, 2)) @ chol.T
    pts[:, 0] += g.mx
    pts[:, 1] += g.my
    dx = pts[:, 0] - p_av[0]
    dy = pts[:, 1] - p_av[1]
    hits = np.count_nonzero(dx * dx + dy * dy <= combined_radius * combined_radius)
    return hits / n_samples


def md_squared_threshold(g: Gaussian2D, combined_radius: float, delta: float) -> float:
    """Squared Mahalanobis distance at which the collision probability equals delta.

    Solving area * density(d) = delta for d^2 gives
    -2 ln(delta * sqrt(det(2 pi Sigma)) / (pi r^2)). Returns 0 when even the
    at-mean probability is at or below delta, meaning no separation is needed.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if combined_radius <= 0:
        raise ValueError("combined_radius must be positive")
    area = math.pi * combined_radius * combined_radius
    dsq = -2.0 * math.log(delta * 2.0 * math.pi * math.sqrt(g.det) / area)
    return max(dsq, 0.0)


@dataclass(frozen=True)
class CalibrationReport:
    """Accuracy and sharpness of a predictor against ground truth."""

    ade: float  # mean displacement error over all scored steps, m
    fde: float  # mean displacement error at the final step, m
    nll: float  # mean negative log likelihood
    desv1: float  # empirical minus ideal mass within MD <= 1
    desv2: float  # within MD <= 2
    desv3: float  # within MD <= 3
    n_pairs: int  # scored (pedestrian, step) pairs

    def __post_init__(self):
        for name in ("ade", "fde", "nll", "desv1", "desv2", "desv3"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"calibration metric {name} is not finite")


def calibration_metrics(gt_tracks, pred_tracks) -> CalibrationReport:
    """Score predicted tracks against ground truth future positions.

    Parameters
    ----------
    gt_tracks : sequence of sequences of (x, y) or None
        Ground truth per pedestrian, aligned step-for-step with the
        prediction; None marks steps where the pedestrian was absent.
    pred_tracks : sequence of PredictedTrack

    A (pedestrian, step) pair is scored when ground truth exists there. The
    final-step error averages over tracks whose last step has ground truth.
    """
    if len(gt_tracks) != len(pred_tracks):
        raise ValueError("ground truth and predictions must align one to one")
    disp, likes, mds = [], [], []
    final_disp = []
    for gt, track in zip(gt_tracks, pred_tracks):
        if len(gt) != len(track.steps):
            raise ValueError(
                f"track {track.ped_id}: {len(gt)} gt steps vs {len(track.steps)} predicted"
            )
        last = len(track.steps) - 1
        for k, (p, g) in enumerate(zip(gt, track.steps)):
            if p is None:
                continue
            err = math.hypot(p[0] - g.mx, p[1] - g.my)
            disp.append(err)
            likes.append(nll(p, g))
            mds.append(mahalanobis(p, g))
            if k == last:
                final_disp.append(err)
    if not disp:
        raise ValueError("no scorable (pedestrian, step) pairs")
    if not final_disp:
        raise ValueError("no track has ground truth at its final step")
    md = np.asarray(mds)
    n = float(len(md))
    return CalibrationReport(
        ade=float(np.mean(disp)),
        fde=float(np.mean(final_disp)),
        nll=float(np.mean(likes)),
        desv1=float(np.count_nonzero(md <= 1.0) / n - ESV_IDEAL[0]),
        desv2=float(np.count_nonzero(md <= 2.0) / n - ESV_IDEAL[1]),
        desv3=float(np.count_nonzero(md <= 3.0) / n - ESV_IDEAL[2]),
        n_pairs=len(disp),
    )
