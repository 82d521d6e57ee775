import numpy as np
import pytest

from pednav.core import Config, PedestrianState, VehicleState
from pednav.uncertainty import Gaussian2D


@pytest.fixture
def cfg():
    return Config()


@pytest.fixture
def av_at_origin():
    return VehicleState(px=0.0, py=0.0, vx=0.0, vy=0.0, theta=0.0,
                        radius=1.0, v_pref=4.167, gx=20.0, gy=0.0)


def random_pd_gaussian(rng: np.random.Generator, scale: float = 1.0) -> Gaussian2D:
    """Random positive definite 2x2 covariance via A A^T + eps I."""
    a = rng.normal(size=(2, 2)) * scale
    cov = a @ a.T + 0.05 * np.eye(2)
    mx, my = rng.normal(size=2) * 3.0
    return Gaussian2D(mx=float(mx), my=float(my), sxx=float(cov[0, 0]),
                      sxy=float(cov[0, 1]), syy=float(cov[1, 1]))


@pytest.fixture
def ped():
    def make(x, y, pid="p0", radius=0.3):
        return PedestrianState(id=pid, px=x, py=y, radius=radius)
    return make
