"""Trifocal tensor estimation with covariance, point transfer and the transfer chart.

The tensor is estimated in Hartley-normalised image coordinates (one
similarity per view, stored on the model).  The linear estimate from the
stacked point-point-point columns seeds a reprojection-error refinement
over the canonical cameras ``P1 = [I | 0]``, ``P2``, ``P3`` and the 3-D
points, so the refined tensor is always geometrically consistent.  Its
covariance is propagated from the camera block of the Gauss-Newton normal
matrix and spans the 18 directions of the consistent tensor manifold.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from ..conditional import FeatureMap
from ..dual_multi import log_dual_density_vector
from ..errors import (
    DegeneracyError,
    InsufficientDataError,
    TransferDegenerateError,
    UnexpectedRankWarning,
)
from ..subspace import (
    GaussianParam,
    ReducedFrame,
    block_periods,
    canonical_sign,
    k_tilde,
    numerical_rank,
    pseudoinverse,
    subspace_params,
    tangent_whitening,
)
from .trilinear import RELATION_DOF, POINT, ppp_columns, tensor_from_canonical, transfer_matrix

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12
DEFAULT_LAMBDA = 1e-8
GAUGE_DIM = 6  # P1 = [I | 0] leaves 4 projective dof plus the scales of P2, P3


def normalizing_transform(pts) -> np.ndarray:
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    pts = np.asarray(pts, dtype=float)
    c = pts.mean(axis=0)
    d = np.mean(np.linalg.norm(pts - c, axis=1))
    if d == 0:
        raise DegeneracyError("all points coincide")
    k = np.sqrt(2.0) / d
    return np.array([[k, 0, -k * c[0]], [0, k, -k * c[1]], [0, 0, 1.0]])


def _apply(H, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    h = np.concatenate([pts, np.ones(pts.shape[:-1] + (1,))], axis=-1) @ H.T
    return h[..., :2] / h[..., 2:3]


def _homog(H, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    return np.concatenate([pts, np.ones(pts.shape[:-1] + (1,))], axis=-1) @ H.T


@dataclass(frozen=True)
class TrifocalModel:
    """Unit-norm tensor ``theta`` (normalised coordinates) with its tangent covariance.

    ``transforms[k]`` maps pixel coordinates of view ``k`` to the
    normalised coordinates the tensor lives in.
    """

    theta: np.ndarray
    cov: np.ndarray
    transforms: np.ndarray = field(default_factory=lambda: np.stack([np.eye(3)] * 3))
    sigma: float = float("nan")
    n_points: int = 0

    def __post_init__(self):
        g = GaussianParam(self.theta, self.cov)
        object.__setattr__(self, "theta", g.theta0)
        object.__setattr__(self, "cov", g.cov)
        H = np.array(self.transforms, dtype=float)
        if H.shape != (3, 3, 3):
            raise ValueError("transforms must be three 3x3 matrices")
        H.flags.writeable = False
        object.__setattr__(self, "transforms", H)

    @property
    def tensor(self) -> np.ndarray:
        return self.theta.reshape(3, 3, 3)

    def gaussian(self) -> GaussianParam:
        return GaussianParam(self.theta, self.cov)

    def pixel_tensor(self) -> np.ndarray:
        """Unit-norm tensor acting on pixel coordinates."""
        H1, H2, H3 = self.transforms
        T = np.einsum("ai,qb,rc,abc->iqr", H1, np.linalg.inv(H2), np.linalg.inv(H3), self.tensor)
        return T / np.linalg.norm(T)

    def to_normalized(self, T_pixel) -> np.ndarray:
        """Express a pixel-coordinate tensor in this model's normalised frame (unit norm)."""
        H1, H2, H3 = self.transforms
        T = np.einsum("ia,bq,cr,iqr->abc", np.linalg.inv(H1), H2, H3, np.asarray(T_pixel, dtype=float).reshape(3, 3, 3))
        return T / np.linalg.norm(T)

    def normalize(self, view: int, pts) -> np.ndarray:
        """Homogeneous normalised coordinates of pixel points in ``view`` (0-based)."""
        return _homog(self.transforms[view], pts)


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------


def linear_tensor(x1, x2, x3) -> np.ndarray:
    """Smallest right singular vector of the stacked point-point-point constraints."""
    Y = ppp_columns(x1, x2, x3)  # (n, 27, 9)
    D = np.transpose(Y, (0, 2, 1)).reshape(-1, 27)
    _, sv, Vt = np.linalg.svd(D, full_matrices=False)
    if sv[-2] <= sv[0] / COND_LIMIT:
        raise DegeneracyError("correspondences do not determine a unique tensor")
    return Vt[-1].reshape(3, 3, 3)


def _null(M) -> np.ndarray:
    return np.linalg.svd(M)[2][-1]


def cameras_from_tensor(T):
    """Canonical ``P2, P3`` (with ``P1 = [I | 0]``) of a trifocal tensor."""
    T = np.asarray(T, dtype=float).reshape(3, 3, 3)
    u = np.array([_null(T[i].T) for i in range(3)])  # left null vectors
    v = np.array([_null(T[i]) for i in range(3)])  # right null vectors
    e2 = _null(u)
    e3 = _null(v)
    A = np.column_stack([T[i] @ e3 for i in range(3)])
    B = np.column_stack([(np.outer(e3, e3) - np.eye(3)) @ T[i].T @ e2 for i in range(3)])
    return np.column_stack([A, e2]), np.column_stack([B, e3])


def triangulate(cams, xs) -> np.ndarray:
    """Linear triangulation of matching points (each ``(n, 2)``) to ``(n, 3)``."""
    n = xs[0].shape[0]
    out = np.empty((n, 3))
    for j in range(n):
        rows = []
        for P, x in zip(cams, xs):
            rows.append(x[j, 0] * P[2] - P[0])
            rows.append(x[j, 1] * P[2] - P[1])
        X = _null(np.array(rows))
        if abs(X[3]) < 1e-12:
            raise DegeneracyError("point triangulates to infinity")
        out[j] = X[:3] / X[3]
    return out


def _unpack(p, n):
    P2 = p[:12].reshape(3, 4)
    P3 = p[12:24].reshape(3, 4)
    X = p[24:].reshape(n, 3)
    return P2, P3, X


def _project_with_grad(P, X):
    Xh = np.column_stack([X, np.ones(len(X))])
    h = Xh @ P.T
    uv = h[:, :2] / h[:, 2:3]
    # d(u, v)/dP, shape (n, 2, 12) and d(u, v)/dX, shape (n, 2, 3)
    n = len(X)
    dP = np.zeros((n, 2, 3, 4))
    inv = 1.0 / h[:, 2]
    dP[:, 0, 0, :] = Xh * inv[:, None]
    dP[:, 1, 1, :] = Xh * inv[:, None]
    dP[:, 0, 2, :] = -(uv[:, 0] * inv)[:, None] * Xh
    dP[:, 1, 2, :] = -(uv[:, 1] * inv)[:, None] * Xh
    dX = (P[None, :2, :3] - uv[:, :, None] * P[None, 2:3, :3]) * inv[:, None, None]
    return uv, dP.reshape(n, 2, 12), dX


class _Reprojection:
    """Pixel-scaled reprojection residuals over the canonical camera triple."""

    P1 = np.hstack([np.eye(3), np.zeros((3, 1))])

    def __init__(self, xs, scales):
        self.xs = xs
        self.scales = np.asarray(scales, dtype=float)
        self.n = xs[0].shape[0]

    def residuals(self, p):
        P2, P3, X = _unpack(p, self.n)
        out = []
        for P, x, k in zip((self.P1, P2, P3), self.xs, self.scales):
            uv = _project_with_grad(P, X)[0]
            out.append((uv - x) / k)
        return np.stack(out, axis=1).ravel()

    def jacobian(self, p):
        n = self.n
        P2, P3, X = _unpack(p, n)
        J = np.zeros((n, 3, 2, 24 + 3 * n))
        rows = np.arange(n)
        for view, (P, k) in enumerate(zip((self.P1, P2, P3), self.scales)):
            _, dP, dX = _project_with_grad(P, X)
            if view > 0:
                off = 12 * (view - 1)
                J[:, view, :, off : off + 12] = dP / k
            for c in range(3):
                J[rows, view, :, 24 + 3 * rows + c] = dX[:, :, c] / k
        return J.reshape(6 * n, -1)


def _tensor_jacobian(P2, P3) -> np.ndarray:
    """d theta / d(P2, P3) for the unit-norm tensor, shape ``(27, 24)``."""
    T = tensor_from_canonical(P2, P3).ravel()
    nT = np.linalg.norm(T)
    theta = T / nT
    D = np.empty((27, 24))
    for k in range(24):
        E = np.zeros(24)
        E[k] = 1.0
        # the tensor is linear in each camera separately, so this difference is exact
        Tk = tensor_from_canonical(P2 + E[:12].reshape(3, 4), P3 + E[12:].reshape(3, 4)).ravel()
        D[:, k] = Tk - T
    return (np.eye(27) - np.outer(theta, theta)) @ D / nT


def _split_correspondences(corrs):
    c = np.asarray(corrs, dtype=float)
    if c.ndim != 2 or c.shape[1] != 6:
        raise ValueError("correspondences must be an (n, 6) array")
    return c[:, 0:2], c[:, 2:4], c[:, 4:6]


def fit_trifocal(corrs, sigma: float | None = None) -> TrifocalModel:
    """ML trifocal tensor and covariance from point triples (rows ``x1,y1,x2,y2,x3,y3``)."""
    xs_pix = _split_correspondences(corrs)
    n = xs_pix[0].shape[0]
    if n < 7:
        raise InsufficientDataError(f"need at least 7 correspondences, got {n}")
    Hs = np.stack([normalizing_transform(x) for x in xs_pix])
    xs = tuple(_apply(H, x) for H, x in zip(Hs, xs_pix))
    xh = tuple(np.column_stack([x, np.ones(n)]) for x in xs)

    T0 = linear_tensor(*xh)
    P2, P3 = cameras_from_tensor(T0)
    X0 = triangulate((_Reprojection.P1, P2, P3), xs)
    cost = _Reprojection(xs, Hs[:, 0, 0])
    p0 = np.concatenate([P2.ravel(), P3.ravel(), X0.ravel()])
    res = least_squares(cost.residuals, p0, jac=cost.jacobian, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    P2, P3, X = _unpack(res.x, n)

    T = tensor_from_canonical(P2, P3)
    raw = T.ravel() / np.linalg.norm(T)
    theta = canonical_sign(raw)
    sign = float(np.sign(theta @ raw))

    J = cost.jacobian(res.x)
    r = cost.residuals(res.x)
    n_par = 24 + 3 * n - GAUGE_DIM
    if sigma is None:
        dof = max(6 * n - n_par, 1)
        sigma = float(np.sqrt(r @ r / dof))
    cov_p = sigma**2 * pseudoinverse(J.T @ J, rank=n_par)
    D = sign * _tensor_jacobian(P2, P3)
    cov = D @ cov_p[:24, :24] @ D.T
    cov = 0.5 * (cov + cov.T)
    logger.debug("trifocal fit: n=%d rms reprojection %.3g px", n, float(np.sqrt(np.mean(r * r))))
    return TrifocalModel(theta, cov, Hs, float(sigma), n)


# ---------------------------------------------------------------------------
# Transfer
# ---------------------------------------------------------------------------


def deterministic_transfer(model: TrifocalModel, m2, m3) -> np.ndarray:
    """View-1 pixel point minimising the algebraic point-point-point residual."""
    x2 = model.normalize(1, np.asarray(m2, dtype=float))
    x3 = model.normalize(2, np.asarray(m3, dtype=float))
    G = transfer_matrix(model.tensor, x2, x3)
    A, b = G[:, :2], -G[:, 2]
    sv = np.linalg.svd(A, compute_uv=False)
    scale = np.linalg.norm(x2) * np.linalg.norm(x3)  # |T| = 1
    if sv[-1] <= sv[0] / COND_LIMIT or sv[0] <= scale / COND_LIMIT:
        raise TransferDegenerateError("view-2/3 pair does not determine a view-1 point")
    uv = np.linalg.lstsq(A, b, rcond=None)[0]
    return _apply(np.linalg.inv(model.transforms[0]), uv)


def transfer_frame(model: TrifocalModel, lambda_reg: float = DEFAULT_LAMBDA) -> ReducedFrame:
    return tangent_whitening(model.gaussian(), lambda_reg=lambda_reg)


def transfer_density_chart(
    model: TrifocalModel,
    frame: ReducedFrame | None = None,
    m2=None,
    m3=None,
    rank: int = RELATION_DOF[(POINT, POINT, POINT)],
) -> FeatureMap:
    """Chart from view-1 pixels ``(u, v)`` to the dual parameters of the constraint subspace.

    The point-point-point columns always have rank 4 in exact arithmetic, so
    that rank is imposed; a different numerical rank triggers an
    :class:`UnexpectedRankWarning`.
    """
    if m2 is None or m3 is None:
        raise ValueError("view-2 and view-3 points are required")
    if frame is None:
        frame = transfer_frame(model)
    x2 = model.normalize(1, np.asarray(m2, dtype=float))
    x3 = model.normalize(2, np.asarray(m3, dtype=float))
    H1 = model.transforms[0]
    M = frame.M
    K = M - 1 - rank
    periods: list[float | None] = [None] * (M - K - 1)
    for k in range(1, k_tilde(M, K) + 1):
        periods += block_periods(M - 2 * k + 1)

    def func(uv):
        x1 = H1 @ np.append(uv, 1.0)
        Yr = frame.reduce(ppp_columns(x1, x2, x3))
        r = numerical_rank(Yr.T, rel_tol=1e-10)
        if r != rank:
            warnings.warn(f"constraint rank {r} differs from {rank}", UnexpectedRankWarning, stacklevel=2)
        return subspace_params(Yr, rank=rank).as_vector()

    def log_density(params):
        return float(log_dual_density_vector(params, M, K))

    return FeatureMap(func, 2, log_density, periods, name="trifocal-transfer")
