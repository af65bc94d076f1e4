"""Conic fitting with a tangent-space covariance and the conic dual chart.

Conics are stored as ``theta = (a11, a22, a33, 2 a12, 2 a23, 2 a13)`` so that
``theta . veronese_embed(x) = x^T A x``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from ..conditional import FeatureMap
from ..dual_single import log_direction_density, LOG_SQRT_2PI
from ..errors import DegeneracyError, DegenerateHyperplaneError, InsufficientDataError
from ..sphcoords import sph_from_cartesian_batch
from ..subspace import GaussianParam, ReducedFrame, canonical_sign, pseudoinverse, tangent_whitening

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12


def veronese_embed(x) -> np.ndarray:
    """``(x1^2, x2^2, x3^2, x1 x2, x2 x3, x1 x3)`` for homogeneous 3-vectors (last axis)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise ValueError("expected homogeneous 3-vectors")
    if np.any(np.all(x == 0, axis=-1)):
        raise ValueError("zero vector has no embedding")
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([x1 * x1, x2 * x2, x3 * x3, x1 * x2, x2 * x3, x1 * x3], axis=-1)


def _embed_uv(uv) -> np.ndarray:
    uv = np.asarray(uv, dtype=float)
    return veronese_embed(np.concatenate([uv, np.ones(uv.shape[:-1] + (1,))], axis=-1))


def _embed_uv_grad(uv) -> np.ndarray:
    """d y / d(u, v), shape ``(..., 6, 2)``."""
    uv = np.asarray(uv, dtype=float)
    u, v = uv[..., 0], uv[..., 1]
    z, o = np.zeros_like(u), np.ones_like(u)
    du = np.stack([2 * u, z, z, v, z, o], axis=-1)
    dv = np.stack([z, 2 * v, z, u, o, z], axis=-1)
    return np.stack([du, dv], axis=-1)


def conic_matrix(theta) -> np.ndarray:
    a11, a22, a33, b12, b23, b13 = np.asarray(theta, dtype=float)
    return np.array([[a11, b12 / 2, b13 / 2], [b12 / 2, a22, b23 / 2], [b13 / 2, b23 / 2, a33]])


def theta_from_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return np.array([A[0, 0], A[1, 1], A[2, 2], 2 * A[0, 1], 2 * A[1, 2], 2 * A[0, 2]])


@dataclass(frozen=True)
class ConicModel:
    theta: np.ndarray
    cov: np.ndarray
    sigma: float = float("nan")
    n_points: int = 0

    def __post_init__(self):
        # validation lives in GaussianParam
        g = GaussianParam(self.theta, self.cov)
        object.__setattr__(self, "theta", g.theta0)
        object.__setattr__(self, "cov", g.cov)

    @property
    def matrix(self) -> np.ndarray:
        return conic_matrix(self.theta)

    def gaussian(self) -> GaussianParam:
        return GaussianParam(self.theta, self.cov)

    def residuals(self, points) -> np.ndarray:
        """Sampson distances of 2-D points to the conic."""
        return sampson_residuals(self.theta, points)


def sampson_residuals(theta, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    y = _embed_uv(pts)
    r = y @ theta
    g = np.einsum("k,nkj->nj", theta, _embed_uv_grad(pts))
    return r / np.linalg.norm(g, axis=1)


def tangent_basis(theta) -> np.ndarray:
    """Orthonormal basis of the tangent plane of the unit sphere at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    Q, _ = np.linalg.qr(np.column_stack([theta, np.eye(theta.size)]))
    return Q[:, 1 : theta.size]


def fit_conic_ml(points, sigma: float | None = None) -> ConicModel:
    """Sampson-error ML conic and its tangent-space covariance.

    The covariance is ``sigma^2 (J^T J)^+`` in tangent coordinates, with
    ``sigma`` estimated from the residuals when not supplied.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array")
    n = pts.shape[0]
    if n < 5:
        raise InsufficientDataError(f"need at least 5 points, got {n}")
    D = _embed_uv(pts)
    sv_D = np.linalg.svd(D, compute_uv=False)
    if sv_D[4] <= sv_D[0] / COND_LIMIT:
        raise DegeneracyError("points do not determine a unique conic")
    theta = np.linalg.svd(D)[2][-1]

    B0 = tangent_basis(theta)

    def unpack(d):
        t = theta + B0 @ d
        return t / np.linalg.norm(t)

    def fun(d):
        return sampson_residuals(unpack(d), pts)

    if n > 5:
        res = least_squares(fun, np.zeros(5), method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        theta = unpack(res.x)
    theta = canonical_sign(theta)

    B = tangent_basis(theta)
    J = _sampson_jacobian(theta, pts) @ B
    e = sampson_residuals(theta, pts)
    if sigma is None:
        dof = max(n - 5, 1)
        sigma = float(np.sqrt(e @ e / dof))
    cov_t = sigma**2 * pseudoinverse(J.T @ J)
    cov = B @ cov_t @ B.T
    cov = 0.5 * (cov + cov.T)
    logger.debug("conic fit: n=%d rms Sampson %.3g", n, float(np.sqrt(np.mean(e * e))))
    return ConicModel(theta, cov, float(sigma), n)


def _sampson_jacobian(theta, pts) -> np.ndarray:
    """d(Sampson residual)/d theta, shape ``(n, 6)``."""
    y = _embed_uv(pts)
    G = _embed_uv_grad(pts)  # (n, 6, 2)
    r = y @ theta
    g = np.einsum("k,nkj->nj", theta, G)
    ng = np.linalg.norm(g, axis=1)
    dg = np.einsum("nj,nkj->nk", g, G)  # d(|g|^2 / 2) / d theta
    return y / ng[:, None] - (r / ng**3)[:, None] * dg


# ---------------------------------------------------------------------------
# Dual chart
# ---------------------------------------------------------------------------


def _chart_values(frame: ReducedFrame, uv, sign=None):
    y = _embed_uv(np.atleast_2d(uv))
    yr = frame.reduce(y.T).T
    yt, ym = yr[:, :-1], yr[:, -1]
    nt = np.linalg.norm(yt, axis=1)
    if np.any(nt < 1e-14 * np.linalg.norm(yr, axis=1)):
        raise DegenerateHyperplaneError("feature parallel to e_M")
    sgn = np.where(yt[:, 0] < 0, -1.0, 1.0) if sign is None else np.full(len(yt), float(sign))
    with np.errstate(divide="ignore"):
        rho = sgn * nt / ym
    if yt.shape[1] >= 3:
        _, phi = sph_from_cartesian_batch(yt, sign=sgn)
    else:
        phi = np.arctan2(sgn * yt[:, 1], sgn * yt[:, 0])[:, None]
    return np.column_stack([rho, phi])


def conic_dual_chart(model: ConicModel, frame: ReducedFrame | None = None) -> FeatureMap:
    """Chart ``(u, v) -> (rho, phi)`` of image points into the dual coordinates."""
    if frame is None:
        frame = tangent_whitening(model.gaussian())
    M = frame.M

    def func(uv):
        out = _chart_values(frame, uv)[0]
        if not np.isfinite(out[0]):
            raise DegenerateHyperplaneError("point lies exactly on the ML conic (rho infinite)")
        return out

    def localize(uv0):
        y0 = frame.reduce(_embed_uv(np.asarray(uv0, dtype=float)))
        sgn = -1.0 if y0[0] < 0 else 1.0

        def pinned(uv):
            out = _chart_values(frame, uv, sign=sgn)
            return out if np.ndim(uv) == 2 else out[0]

        return pinned

    def log_density(params):
        rho, phi = params[0], params[1:]
        inv = 1.0 / rho
        return -0.5 * inv * inv - LOG_SQRT_2PI - 2 * np.log(abs(rho)) + log_direction_density(phi, M)

    periods = [None] * (M - 2) + [2 * np.pi] if M >= 4 else [None, None]
    return FeatureMap(func, 2, log_density, periods, localize, name="conic-dual", vectorized=True)


def chart_inverse(frame: ReducedFrame, params) -> np.ndarray:
    """Image point ``(u, v)`` of chart coordinates (requires ``M = 6``)."""
    from ..sphcoords import cartesian_from_sph

    rho, phi = params[0], np.asarray(params[1:])
    yt = cartesian_from_sph(1.0, phi) if phi.size >= 2 else np.array([np.cos(phi[0]), np.sin(phi[0])])
    yr = np.append(yt, 1.0 / rho)
    y = frame.unreduce(yr)
    return np.array([y[5] / y[2], y[4] / y[2]])
