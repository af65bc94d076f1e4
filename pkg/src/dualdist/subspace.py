"""Linear-algebra substrate for the dual densities.

Covers the rank policy shared by every routine, the whitening transform of a
tangent-space Gaussian, reduction of joint feature vectors into the whitened
frame, Gram--Schmidt, the unique lower-triangular factor of an orthogonal
projector and the canonical ``(s, Phi)`` parameters of an affine subspace.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import sphcoords
from .errors import (
    DegenerateCovarianceError,
    DimensionError,
    InfeasibleConstraintsError,
    PivotDegeneracyError,
    RankDeficiencyError,
)

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps
DEFAULT_LAMBDA = 1e-8


def default_tol(shape, largest: float) -> float:
    """Absolute threshold ``max(dim) * eps * largest`` below which values vanish."""
    return max(shape) * EPS * largest


def _threshold(values, shape, rel_tol):
    largest = float(np.max(np.abs(values))) if np.size(values) else 0.0
    if rel_tol is None:
        return default_tol(shape, largest)
    return rel_tol * largest


def numerical_rank(A, rel_tol=None) -> int:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[0] == 0:
        return 0
    return int(np.sum(sv > _threshold(sv, A.shape, rel_tol)))


def pseudoinverse(A, rel_tol=None, rank=None) -> np.ndarray:
    """Moore--Penrose pseudoinverse with an explicit rank policy.

    Singular values at or below ``rel_tol * sigma_max`` (default
    ``max(m, n) * eps * sigma_max``) are treated as zero.  ``rank`` forces the
    number of retained singular values instead.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    if rank is None:
        rank = int(np.sum(sv > _threshold(sv, A.shape, rel_tol))) if sv.size and sv[0] > 0 else 0
    inv = np.zeros_like(sv)
    inv[:rank] = 1.0 / sv[:rank]
    return (Vt.T * inv) @ U.T


# ---------------------------------------------------------------------------
# Gaussian parameter model and whitening
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianParam:
    """Unit parameter vector ``theta0`` with a tangent-space covariance."""

    theta0: np.ndarray
    cov: np.ndarray
    rank_hint: int | None = None

    def __post_init__(self):
        theta0 = np.asarray(self.theta0, dtype=float).copy()
        cov = np.asarray(self.cov, dtype=float).copy()
        n = theta0.size
        if theta0.ndim != 1 or cov.shape != (n, n):
            raise DimensionError(f"theta0 {theta0.shape} and cov {cov.shape} disagree")
        if abs(np.linalg.norm(theta0) - 1.0) > 1e-12:
            raise ValueError("theta0 must have unit norm")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise ValueError("cov must be symmetric")
        cov = 0.5 * (cov + cov.T)
        if np.linalg.eigvalsh(cov)[0] < -1e-10 * scale:
            raise ValueError("cov must be positive semi-definite")
        if np.linalg.norm(cov @ theta0) > 1e-8 * scale:
            raise ValueError("theta0 must lie in the kernel of cov")
        theta0.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "theta0", theta0)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.theta0.size

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` tangent-plane samples ``theta0 + C^(1/2) z``."""
        w, U = np.linalg.eigh(self.cov)
        w = np.clip(w, 0.0, None)
        z = rng.standard_normal((n, self.dim))
        return self.theta0 + (z * np.sqrt(w)) @ U.T


def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip columns so that each one's largest-magnitude entry is positive."""
    v = np.array(v, dtype=float, copy=True)
    if v.ndim == 1:
        return v if v[np.argmax(np.abs(v))] >= 0 else -v
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.where(v[idx, np.arange(v.shape[1])] < 0, -1.0, 1.0)
    return v * signs


@dataclass(frozen=True)
class ReducedFrame:
    """Whitening frame: ``theta' = D^-1 U~^T theta`` and ``y' = D U~^T y``.

    ``D = diag(lambda_tilde^(1/2), 1)``.  The last column of ``U_tilde`` is
    ``theta0`` so that the mean maps to ``e_M``.
    """

    U_tilde: np.ndarray
    lambda_tilde: np.ndarray
    lambda_reg: float = 0.0

    @property
    def M(self) -> int:
        return self.U_tilde.shape[1]

    @property
    def N(self) -> int:
        return self.U_tilde.shape[0]

    @property
    def theta0(self) -> np.ndarray:
        return self.U_tilde[:, -1]

    @property
    def _scale(self) -> np.ndarray:
        return np.append(np.sqrt(self.lambda_tilde), 1.0)

    def reduce_theta(self, theta) -> np.ndarray:
        """Whitened parameter ``theta'`` (last component is ``theta0 . theta``)."""
        theta = np.asarray(theta, dtype=float)
        return (theta @ self.U_tilde) / self._scale

    def unreduce_theta(self, theta_r) -> np.ndarray:
        return (np.asarray(theta_r, dtype=float) * self._scale) @ self.U_tilde.T

    def reduce(self, Y) -> np.ndarray:
        """Reduced joint features ``Y' = D U~^T Y`` (vector or column matrix)."""
        Y = np.asarray(Y, dtype=float)
        if Y.shape[0] != self.N:
            raise DimensionError(f"feature rows {Y.shape[0]} != {self.N}")
        out = self.U_tilde.T @ Y
        if Y.ndim == 1:
            return out * self._scale
        return out * self._scale[:, None]

    def unreduce(self, y_r) -> np.ndarray:
        """Map a reduced feature back to the ambient frame (exact when M = N)."""
        y_r = np.asarray(y_r, dtype=float)
        inv = 1.0 / self._scale
        if y_r.ndim == 1:
            return self.U_tilde @ (y_r * inv)
        return self.U_tilde @ (y_r * inv[:, None])


def _canonical_eigenspaces(U, w, rel_tol=1e-10):
    """Replace the basis of each repeated eigenvalue by one seeded from ``e_1, e_2, ...``."""
    U = U.copy()
    start = 0
    scale = max(abs(w[0]), 1e-300) if len(w) else 1.0
    while start < len(w):
        stop = start + 1
        while stop < len(w) and abs(w[stop] - w[start]) <= rel_tol * scale:
            stop += 1
        if stop - start > 1:
            V = U[:, start:stop]
            U[:, start:stop], _ = _greedy_basis(V @ V.T, range(U.shape[0]), stop - start)
        start = stop
    return U


def tangent_whitening(g: GaussianParam, lambda_reg: float = 0.0, rel_tol=None) -> ReducedFrame:
    """Eigendecomposition-based whitening frame of a tangent Gaussian.

    Eigenvalues are kept when above the shared rank threshold; ``lambda_reg``
    is then added to each retained eigenvalue (Tikhonov regularisation).
    """
    w, U = np.linalg.eigh(g.cov)
    w = w[::-1]
    U = U[:, ::-1]
    # eigh returns ascending values; stable re-sort keeps index order on ties
    order = np.argsort(-w, kind="stable")
    w, U = w[order], U[:, order]
    tol = _threshold(w, g.cov.shape, rel_tol)
    keep = w > tol
    if not np.any(keep):
        raise DegenerateCovarianceError("covariance is numerically zero")
    U0 = _canonical_eigenspaces(U[:, keep], w[keep])
    Uk = U0.copy()
    # purge any theta0 component left by round-off before canonicalising
    Uk = Uk - np.outer(g.theta0, g.theta0 @ Uk)
    Uk, _ = np.linalg.qr(Uk)
    Uk = Uk * np.sign(np.sum(Uk * U0, axis=0))
    Uk = canonical_sign(Uk)
    lam = w[keep] + lambda_reg
    return ReducedFrame(np.column_stack([Uk, g.theta0]), lam, float(lambda_reg))


def reduce_features(frame: ReducedFrame, Y) -> np.ndarray:
    return frame.reduce(Y)


# ---------------------------------------------------------------------------
# Gram--Schmidt and the triangular projector factor
# ---------------------------------------------------------------------------


def gram_schmidt(vectors, rel_tol: float = 1e-10) -> np.ndarray:
    """Orthonormalise ``vectors`` (rows or a list) in order.

    Uses the classical recursion with one re-orthogonalisation pass.  Raises
    :class:`RankDeficiencyError` carrying the 1-based index of the first
    vector that is dependent on its predecessors.
    """
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    out = []
    for k, v in enumerate(V):
        r = v.copy()
        for _ in range(2):
            for u in out:
                r -= (u @ r) * u
        nv = np.linalg.norm(v)
        nr = np.linalg.norm(r)
        if nv == 0 or nr <= rel_tol * nv:
            raise RankDeficiencyError(f"vector {k + 1} is linearly dependent", index=k + 1)
        out.append(r / nr)
    return np.array(out)


def _greedy_basis(Q, seeds, count, rel_tol=1e-10):
    """Orthonormal basis of Ran(Q) from ``Q e_i`` over ``seeds``, skipping dependent ones."""
    seeds = list(seeds)
    if count == 0:
        return np.zeros((Q.shape[0], 0)), []
    if len(seeds) >= count:
        # fast path: the first ``count`` seeds are independent, so GS is a QR
        X = Q[:, seeds[:count]]
        Qf, R = np.linalg.qr(X)
        d = np.diag(R)
        norms = np.linalg.norm(X, axis=0)
        if np.all(np.abs(d) > rel_tol * np.maximum(1.0, norms)) and np.all(np.abs(d) > 1e-12):
            return Qf * np.sign(d), seeds[:count]
    out, used = [], []
    for i in seeds:
        if len(out) == count:
            break
        v = Q[:, i]
        r = v.copy()
        for _ in range(2):
            for u in out:
                r -= (u @ r) * u
        nr = np.linalg.norm(r)
        if nr > rel_tol * max(1.0, np.linalg.norm(v)) and nr > 1e-12:
            out.append(r / nr)
            used.append(i)
    if len(out) < count:
        raise RankDeficiencyError(f"projector range has dimension < {count}")
    return np.array(out).T, used


@dataclass(frozen=True)
class TriangularFactor:
    """``L L^T = P`` with ``L`` lower triangular (in ``perm`` row order)."""

    L_mat: np.ndarray
    perm: tuple[int, ...] | None = None

    @property
    def K(self) -> int:
        return self.L_mat.shape[1]

    def permuted(self) -> np.ndarray:
        """``L`` with rows reordered so the triangular pattern is explicit."""
        if self.perm is None:
            return self.L_mat
        return self.L_mat[list(self.perm), :]


def check_projector(P, tol=1e-8):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionError("projector must be square")
    if np.max(np.abs(P - P.T)) > tol or np.max(np.abs(P @ P - P)) > tol:
        raise ValueError("matrix is not a symmetric idempotent projector")
    return P


def triangular_factor(P, K: int, pivot: bool = False, rel_tol: float = 1e-10) -> TriangularFactor:
    """Unique lower-triangular ``L`` with orthonormal columns and ``L L^T = P``.

    ``L`` is ``(M-1) x K``.  Columns come from Gram--Schmidt on ``P e_1 ..
    P e_K``.  If these are dependent a :class:`PivotDegeneracyError` is
    raised unless ``pivot`` is set, in which case seeds are chosen greedily
    in index order and the row permutation is recorded.
    """
    P = check_projector(P)
    n = P.shape[0]
    if K < 1 or K > n:
        raise DimensionError(f"invalid subspace dimension {K} for size {n}")
    try:
        L = gram_schmidt(P[:, :K].T, rel_tol=rel_tol).T
        return TriangularFactor(_zero_upper(L, range(K)))
    except RankDeficiencyError as exc:
        if not pivot:
            raise PivotDegeneracyError(
                f"P e_{exc.index} depends on P e_1..P e_{exc.index - 1}"
            ) from exc
    L, used = _greedy_basis(P, range(n), K, rel_tol)
    perm = tuple(used) + tuple(i for i in range(n) if i not in used)
    logger.debug("triangular_factor pivoted seeds %s", used)
    return TriangularFactor(_zero_upper(L, used), perm)


def _zero_upper(L, rows):
    # entries above the diagonal vanish in exact arithmetic; drop the round-off
    rows = list(rows)
    for j in range(1, L.shape[1]):
        L[rows[:j], j] = 0.0
    return L


# ---------------------------------------------------------------------------
# Affine subspace parameters
# ---------------------------------------------------------------------------


def k_tilde(M: int, K: int) -> int:
    return K if K <= M / 2 else M - K - 1


def free_parameter_count(M: int, K: int) -> int:
    kt = k_tilde(M, K)
    return (M - 1) * kt - kt * kt


@dataclass(frozen=True)
class AffineSubspaceParams:
    """Canonical coordinates ``(s, Phi)`` of an affine subspace ``W = w + V``."""

    s: np.ndarray
    Phi: tuple[np.ndarray, ...]
    K: int
    M: int
    perm: tuple[int, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "s", np.asarray(self.s, dtype=float))
        object.__setattr__(self, "Phi", tuple(np.asarray(p, dtype=float) for p in self.Phi))
        if self.s.size != self.M - self.K - 1:
            raise DimensionError(f"offset has length {self.s.size}, expected {self.M - self.K - 1}")
        if len(self.Phi) != self.K_tilde:
            raise DimensionError(f"{len(self.Phi)} angle blocks, expected {self.K_tilde}")
        for k, blk in enumerate(self.Phi, start=1):
            if blk.size != self.M - 2 * k:
                raise DimensionError(f"block {k} has {blk.size} angles, expected {self.M - 2 * k}")

    @property
    def K_tilde(self) -> int:
        return k_tilde(self.M, self.K)

    @property
    def n_free(self) -> int:
        return sum(b.size for b in self.Phi)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.s, *self.Phi])

    def periods(self) -> list[float | None]:
        """Periodicity of each entry of :meth:`as_vector`."""
        out: list[float | None] = [None] * self.s.size
        for blk in self.Phi:
            out += block_periods(blk.size + 1)
        return out


def block_periods(d: int) -> list[float | None]:
    """Periods of the direction angles of a unit vector in R^d."""
    if d == 1:
        return []
    if d == 2:
        return [None]
    return sphcoords.angle_periods(d)


def direction_angles(c) -> np.ndarray:
    """Half-sphere angles of a unit vector ``c`` in R^d, d >= 2 (``c_1 >= 0`` assumed)."""
    c = np.asarray(c, dtype=float)
    if c.size == 1:
        return np.zeros(0)
    if c.size == 2:
        sgn = -1.0 if c[0] < 0 else 1.0
        return np.array([np.arctan2(sgn * c[1], sgn * c[0])])
    return sphcoords.sph_from_cartesian(c).phi


def direction_from_angles(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.size == 0:
        return np.ones(1)
    if phi.size == 1:
        return np.array([np.cos(phi[0]), np.sin(phi[0])])
    return sphcoords.cartesian_from_sph(1.0, phi)


def _block_basis(prev: list[np.ndarray], order: list[int], k: int, n: int):
    """Orthonormal basis of the space allowed for column ``k`` (0-based) of ``L``.

    The space consists of vectors that vanish on the first ``k`` rows (in
    ``order``) and are orthogonal to the previous columns.  Seeds are the
    remaining coordinate vectors in order.
    """
    C = [np.eye(n)[r] for r in order[:k]] + list(prev)
    if C:
        Cm = np.array(C)
        # rows and previous columns coincide when the factor was pivoted
        Q = np.eye(n) - pseudoinverse(Cm, rel_tol=1e-10) @ Cm
    else:
        Q = np.eye(n)
    d = n - 2 * k
    B, _ = _greedy_basis(Q, order[k:], d)
    return B


def _factor_angles(L: TriangularFactor, n: int) -> tuple[np.ndarray, ...]:
    order = list(L.perm) if L.perm is not None else list(range(n))
    blocks, prev = [], []
    for k in range(L.K):
        u = L.L_mat[:, k]
        B = _block_basis(prev, order, k, n)
        c = B.T @ u
        if np.linalg.norm(c) < 1 - 1e-8:
            raise PivotDegeneracyError(f"column {k + 1} of the pivoted factor leaves its canonical block")
        c /= np.linalg.norm(c)
        blocks.append(direction_angles(c))
        prev.append(u)
    return tuple(blocks)


def factor_from_angles(Phi, n: int, perm=None) -> np.ndarray:
    """Rebuild the triangular factor from its per-column angle blocks."""
    order = list(perm) if perm is not None else list(range(n))
    cols: list[np.ndarray] = []
    for k, phi in enumerate(Phi):
        B = _block_basis(cols, order, k, n)
        cols.append(B @ direction_from_angles(phi))
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def _complement_basis(Pc, K: int, n: int):
    """Orthonormal basis of V-perp seeded by ``(I - P) e_i``, i = K+1..M-1 first."""
    d = n - K
    seeds = list(range(K, n)) + list(range(K))
    B, _ = _greedy_basis(Pc, seeds, d)
    return B


@dataclass(frozen=True)
class KernelGeometry:
    """Offset point, projector and dimension of ``W = {A t = b}``."""

    w: np.ndarray
    P: np.ndarray
    K: int
    M: int


def kernel_geometry(Y_reduced, rel_tol=None, rank=None) -> KernelGeometry:
    """Split ``Y'^T = (A  -b)`` and return the nearest point and projector of W."""
    Yr = np.atleast_2d(np.asarray(Y_reduced, dtype=float))
    if Yr.shape[0] < 3:
        raise DimensionError("reduced features need M >= 3 rows")
    if Yr.ndim == 2 and Yr.shape[1] == 0:
        raise DimensionError("no constraints")
    M = Yr.shape[0]
    A = Yr[:-1, :].T
    b = -Yr[-1, :]
    r_full = numerical_rank(Yr.T, rel_tol) if rank is None else rank
    U, sv, Vt = np.linalg.svd(A, full_matrices=True)
    if rank is None:
        r = int(np.sum(sv > _threshold(np.concatenate([sv, [np.linalg.norm(b)]]), Yr.shape, rel_tol)))
    else:
        r = rank
    if r < r_full or r == 0:
        raise InfeasibleConstraintsError("constraints admit no finite solution")
    R = Vt[:r].T
    w = R @ ((U[:, :r].T @ b) / sv[:r])
    P = np.eye(M - 1) - R @ R.T
    K = M - 1 - r
    if K < 1:
        raise DimensionError(f"affine subspace is a point (K = {K})")
    return KernelGeometry(w, P, K, M)


def subspace_params(Y_reduced, frame: ReducedFrame | None = None, rel_tol=None, rank=None) -> AffineSubspaceParams:
    """Canonical ``(s, Phi)`` of ``W = Ker Y'^T`` in the whitened frame."""
    geo = kernel_geometry(Y_reduced, rel_tol=rel_tol, rank=rank)
    if frame is not None and frame.M != geo.M:
        raise DimensionError(f"frame has M = {frame.M}, features have {geo.M}")
    return params_from_geometry(geo.w, geo.P, geo.K, geo.M)


def params_from_geometry(w, P, K: int, M: int) -> AffineSubspaceParams:
    n = M - 1
    Pc = np.eye(n) - P
    B = _complement_basis(Pc, K, n)
    s = B.T @ w
    kt = k_tilde(M, K)
    target = P if K <= M / 2 else Pc
    L = triangular_factor(target, kt, pivot=True)
    return AffineSubspaceParams(s, _factor_angles(L, n), K, M, L.perm)


def _qr_basis_batch(X, rel_tol=1e-10):
    """Batched Gram-Schmidt of the columns of ``X``; flags rows with dependent columns."""
    Q, R = np.linalg.qr(X)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    norms = np.linalg.norm(X, axis=-2)
    ok = np.all((np.abs(d) > rel_tol * np.maximum(1.0, norms)) & (np.abs(d) > 1e-12), axis=-1)
    return Q * np.where(d < 0, -1.0, 1.0)[..., None, :], ok


def _angles_batch(c) -> np.ndarray:
    d = c.shape[-1]
    if d == 1:
        return np.zeros(c.shape[:-1] + (0,))
    if d == 2:
        sgn = np.where(c[..., 0] < 0, -1.0, 1.0)
        return np.arctan2(sgn * c[..., 1], sgn * c[..., 0])[..., None]
    return sphcoords.sph_from_cartesian_batch(c)[1]


def params_vector_batch(w, P, K: int, M: int) -> np.ndarray:
    """Rows of :meth:`AffineSubspaceParams.as_vector` for a stack of subspaces.

    ``w`` is ``(B, M-1)`` and ``P`` is ``(B, M-1, M-1)``.  Generic rows are
    handled with batched QR; rows needing a pivoted factor go through
    :func:`params_from_geometry` one at a time.
    """
    w = np.asarray(w, dtype=float)
    P = np.asarray(P, dtype=float)
    n = M - 1
    eye = np.eye(n)
    Pc = eye - P
    seeds = list(range(K, n)) + list(range(K))
    Bc, ok = _qr_basis_batch(Pc[:, :, seeds[: n - K]])
    parts = [np.einsum("bnd,bn->bd", Bc, w)]
    kt = k_tilde(M, K)
    target = P if K <= M / 2 else Pc
    L, ok_l = _qr_basis_batch(target[:, :, :kt])
    ok &= ok_l
    for k in range(kt):
        if k == 0:
            Q = np.broadcast_to(eye, P.shape)
        else:
            C = np.concatenate([np.broadcast_to(eye[:, :k], (len(P), n, k)), L[:, :, :k]], axis=-1)
            Qc, ok_c = _qr_basis_batch(C)
            ok &= ok_c
            Q = eye - Qc @ np.swapaxes(Qc, -1, -2)
        Bk, ok_k = _qr_basis_batch(Q[:, :, k : n - k])
        ok &= ok_k
        c = np.einsum("bnd,bn->bd", Bk, L[:, :, k])
        c /= np.linalg.norm(c, axis=-1, keepdims=True)
        parts.append(_angles_batch(c))
    out = np.concatenate(parts, axis=-1)
    for i in np.flatnonzero(~ok):
        out[i] = params_from_geometry(w[i], P[i], K, M).as_vector()
    return out


def reconstruct(params: AffineSubspaceParams):
    """Return ``(w, P)`` for the affine subspace named by ``params``."""
    n = params.M - 1
    L = factor_from_angles(params.Phi, n, params.perm)
    LL = L @ L.T
    P = LL if params.K <= params.M / 2 else np.eye(n) - LL
    B = _complement_basis(np.eye(n) - P, params.K, n)
    return B @ params.s, P


def constraints_from_subspace(w, P, rel_tol=1e-10) -> np.ndarray:
    """A reduced constraint matrix ``Y'`` whose kernel is ``W = w + Ran P``."""
    n = P.shape[0]
    Pc = np.eye(n) - P
    U, sv, _ = np.linalg.svd(Pc)
    R = U[:, sv > 0.5]
    A = R.T
    b = A @ w
    return np.vstack([A.T, -b[None, :]])
