import numpy as np
import pytest

from moai.geometry import CameraPose


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_camera(rng: np.random.Generator, fx=100.0, fy=100.0, cx=32.0, cy=32.0):
    mat = np.eye(4)
    mat[:3, :3] = random_rotation(rng)
    mat[:3, 3] = rng.uniform(-1, 1, size=3)
    return CameraPose(mat, fx, fy, cx, cy)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
