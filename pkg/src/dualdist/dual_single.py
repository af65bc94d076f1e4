"""Dual density of a single-constraint model ``theta'^T y' = 0``.

In the whitened frame ``theta' = (t, 1)`` with ``t ~ N(0, I)``.  A reduced
feature ``y' = (y~, y_M)`` names the hyperplane ``y~ . t + y_M = 0``, which we
describe by its unit normal on the half-sphere (first component >= 0) and its
signed distance ``s`` from the origin.  The inhomogeneous feature point
``y~ / y_M`` has signed radius ``rho = -1/s`` along the same direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DegenerateHyperplaneError, InfinityLimitError, UnsupportedDimensionError
from .subspace import direction_angles, direction_from_angles

LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


@dataclass(frozen=True)
class HyperplaneParam:
    s: float
    phi: np.ndarray

    @property
    def normal(self) -> np.ndarray:
        return direction_from_angles(self.phi)


def _split(y_reduced):
    y = np.asarray(y_reduced, dtype=float)
    if y.shape[-1] < 3:
        raise UnsupportedDimensionError("reduced features need M >= 3")
    return y[..., :-1], y[..., -1]


def signed_distance(y_reduced) -> float:
    """Signed distance of the dual hyperplane ``y'^T theta' = 0`` from ``e_M``."""
    yt, ym = _split(y_reduced)
    nt = np.linalg.norm(yt)
    if nt < 1e-14 * np.linalg.norm(y_reduced):
        raise DegenerateHyperplaneError("feature is parallel to e_M; hyperplane at infinity")
    sgn = -1.0 if yt[0] < 0 else 1.0
    return float(-ym / (sgn * nt))


def hyperplane_params(y_reduced) -> HyperplaneParam:
    """``(s, phi)`` of the dual hyperplane, normal canonicalised to the half-sphere."""
    yt, _ = _split(y_reduced)
    s = signed_distance(y_reduced)
    v = yt / np.linalg.norm(yt)
    if v[0] < 0:
        v = -v
    return HyperplaneParam(s, direction_angles(v))


def feature_coords(y_reduced) -> tuple[float, np.ndarray]:
    """Modified spherical coordinates ``(rho, phi)`` of the feature point ``y~/y_M``.

    ``rho`` is infinite when ``y_M = 0`` (the dual hyperplane passes through
    the mean parameter).
    """
    h = hyperplane_params(y_reduced)
    with np.errstate(divide="ignore"):
        rho = -1.0 / h.s if h.s != 0 else np.inf
    return rho, h.phi


def reduced_feature(s: float, phi) -> np.ndarray:
    """A reduced feature vector with hyperplane parameters ``(s, phi)``."""
    return np.append(direction_from_angles(phi), -s)


def rho_from_s(s):
    s = np.asarray(s, dtype=float)
    if np.any(s == 0):
        raise InfinityLimitError("s = 0 corresponds to rho at infinity")
    out = -1.0 / s
    return out if out.ndim else float(out)


def s_from_rho(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho == 0):
        raise InfinityLimitError("rho = 0 corresponds to s at infinity")
    out = -1.0 / rho
    return out if out.ndim else float(out)


def marginal_s_density(s):
    """Standard normal density of the signed distance."""
    s = np.asarray(s, dtype=float)
    out = np.exp(-0.5 * s * s - LOG_SQRT_2PI)
    return out if out.ndim else float(out)


def log_direction_density(phi, M: int):
    phi = np.asarray(phi, dtype=float)
    if M < 3:
        raise UnsupportedDimensionError("M must be at least 3")
    if phi.shape[-1] != M - 2:
        raise ValueError(f"expected {M - 2} angles, got {phi.shape[-1]}")
    logc = gammaln((M - 1) / 2) - (M - 1) / 2 * np.log(np.pi)
    expo = M - 2 - np.arange(1, M - 2)
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(np.sin(phi[..., : M - 3])))
    return logc + np.sum(expo * logs, axis=-1)


def direction_density(phi, M: int):
    """Uniform density of hyperplane normals on the half-sphere, in angle coordinates."""
    out = np.exp(log_direction_density(phi, M))
    return out if np.ndim(out) else float(out)


def dual_density_single(rho, phi, M: int):
    """Closed-form dual density ``p(rho, phi)``; zero at ``rho = 0`` and ``|rho| = inf``."""
    rho = np.asarray(rho, dtype=float)
    pphi = np.exp(log_direction_density(phi, M))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv = 1.0 / rho
        prho = np.exp(-0.5 * inv * inv - LOG_SQRT_2PI) * inv * inv
    prho = np.where(np.isfinite(prho), prho, 0.0)
    out = prho * pphi
    return out if np.ndim(out) else float(out)


def dual_density_s(s, phi, M: int):
    """Same density expressed in the hyperplane coordinates ``(s, phi)``."""
    out = marginal_s_density(s) * np.exp(log_direction_density(phi, M))
    return out if np.ndim(out) else float(out)
