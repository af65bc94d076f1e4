"""Synthetic data sets: noisy ellipse points and a three-camera scene."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .models.conic import theta_from_matrix
from .models.trilinear import tensor_from_cameras


def ellipse_points(
    n: int = 25,
    sigma: float = 0.05,
    seed=0,
    axes=(2.0, 1.0),
    center=(0.0, 0.0),
    angle: float = 0.0,
    arc=(0.0, 2 * np.pi),
):
    """``n`` points spread evenly in parameter over ``arc`` plus Gaussian noise.

    Returns ``(noisy, clean, theta_true)``.
    """
    rng = np.random.default_rng(seed)
    t0, t1 = arc
    closed = np.isclose((t1 - t0) % (2 * np.pi), 0.0) and t1 != t0
    t = np.linspace(t0, t1, n, endpoint=not closed)
    a, b = axes
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s], [s, c]])
    clean = np.column_stack([a * np.cos(t), b * np.sin(t)]) @ R.T + np.asarray(center, dtype=float)
    noisy = clean + sigma * rng.standard_normal(clean.shape)
    # x^T A x with A built from the centred, rotated ellipse
    H = np.eye(3)
    H[:2, :2] = R
    H[:2, 2] = center
    Hi = np.linalg.inv(H)
    A0 = np.diag([1 / a**2, 1 / b**2, -1.0])
    theta = theta_from_matrix(Hi.T @ A0 @ Hi)
    return noisy, clean, theta / np.linalg.norm(theta)


@dataclass(frozen=True)
class ThreeViewScene:
    cameras: tuple[np.ndarray, np.ndarray, np.ndarray]
    X: np.ndarray  # (n, 3) world points
    clean: tuple[np.ndarray, np.ndarray, np.ndarray]  # (n, 2) projections per view
    noisy: tuple[np.ndarray, np.ndarray, np.ndarray]
    sigma: float

    @property
    def tensor(self) -> np.ndarray:
        T = tensor_from_cameras(*self.cameras)
        return T / np.linalg.norm(T)

    def project(self, X) -> tuple[np.ndarray, ...]:
        X = np.atleast_2d(X)
        return tuple(_project(P, X) for P in self.cameras)

    def correspondences(self, noisy: bool = True) -> np.ndarray:
        """``(n, 6)`` rows ``x1, y1, x2, y2, x3, y3``."""
        return np.hstack(self.noisy if noisy else self.clean)


def _project(P, X):
    Xh = np.column_stack([X, np.ones(len(X))])
    x = Xh @ P.T
    return x[:, :2] / x[:, 2:3]


def three_view_scene(n: int = 50, sigma: float = 1.0, seed=0, focal: float = 800.0, size=(640, 480)) -> ThreeViewScene:
    """Points in a box about 10 units in front of three cameras on a short baseline."""
    rng = np.random.default_rng(seed)
    K = np.array([[focal, 0, size[0] / 2], [0, focal, size[1] / 2], [0, 0, 1.0]])
    cams = [K @ np.hstack([np.eye(3), np.zeros((3, 1))])]
    for _ in range(2):
        R = Rotation.from_rotvec(rng.normal(scale=0.08, size=3)).as_matrix()
        centre = np.array([rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5)])
        cams.append(K @ np.hstack([R, (-R @ centre)[:, None]]))
    X = np.column_stack([rng.uniform(-3, 3, n), rng.uniform(-2, 2, n), rng.uniform(8, 12, n)])
    clean = tuple(_project(P, X) for P in cams)
    noisy = tuple(x + sigma * rng.standard_normal(x.shape) for x in clean)
    return ThreeViewScene(tuple(cams), X, clean, noisy, float(sigma))
