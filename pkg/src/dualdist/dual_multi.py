"""Dual density of the affine subspace cut out by several constraints.

The density factors into a standard normal on the offset coordinates ``s``
and, for each column of the triangular projector factor, a uniform density
on a half-sphere whose dimension drops by two per column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DimensionError
from .subspace import AffineSubspaceParams, k_tilde, subspace_params


@dataclass(frozen=True)
class MultiDualContext:
    M: int
    K: int

    def __post_init__(self):
        if not 1 <= self.K <= self.M - 2:
            raise DimensionError(f"need 1 <= K <= M-2, got K={self.K}, M={self.M}")

    @property
    def K_tilde(self) -> int:
        return k_tilde(self.M, self.K)

    @property
    def offset_dim(self) -> int:
        return self.M - self.K - 1


def log_offset_density(s, ctx: MultiDualContext | None = None):
    s = np.atleast_1d(np.asarray(s, dtype=float))
    d = s.shape[-1]
    if ctx is not None and d != ctx.offset_dim:
        raise DimensionError(f"offset has length {d}, context expects {ctx.offset_dim}")
    return -0.5 * np.sum(s * s, axis=-1) - 0.5 * d * np.log(2 * np.pi)


def offset_density(s, ctx: MultiDualContext | None = None):
    out = np.exp(log_offset_density(s, ctx))
    return out if np.ndim(out) else float(out)


def log_direction_block_density(Phi_k, k: int, M: int, allow_empty: bool = False):
    """Log of the conditional density of the ``k``-th (1-based) angle block."""
    n = M - 2 * k
    if n < 1 and not (allow_empty and n == 0):
        raise DimensionError(f"block {k} has no angles for M={M}")
    Phi_k = np.asarray(Phi_k, dtype=float)
    if Phi_k.shape[-1] != n:
        raise DimensionError(f"block {k} needs {n} angles, got {Phi_k.shape[-1]}")
    a = (M - 2 * k + 1) / 2
    logc = gammaln(a) - a * np.log(np.pi)
    expo = n - np.arange(1, n)
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(np.sin(Phi_k[..., : n - 1]))) if n > 1 else np.zeros(Phi_k.shape[:-1] + (0,))
    return logc + np.sum(expo * logs, axis=-1)


def direction_block_density(Phi_k, k: int, M: int):
    out = np.exp(log_direction_block_density(Phi_k, k, M))
    return out if np.ndim(out) else float(out)


def log_dual_density_multi(p: AffineSubspaceParams) -> float:
    out = float(log_offset_density(p.s))
    for k, blk in enumerate(p.Phi, start=1):
        # a block with no angles is a single point of the half 0-sphere
        out += float(log_direction_block_density(blk, k, p.M, allow_empty=True))
    return out


def dual_density_multi(p: AffineSubspaceParams) -> float:
    return float(np.exp(log_dual_density_multi(p)))


def log_dual_density_vector(x, M: int, K: int):
    """Log density for parameters packed as ``AffineSubspaceParams.as_vector()``.

    Vectorised over leading axes of ``x``.
    """
    x = np.asarray(x, dtype=float)
    d = M - K - 1
    out = log_offset_density(x[..., :d])
    pos = d
    for k in range(1, k_tilde(M, K) + 1):
        n = M - 2 * k
        out = out + log_direction_block_density(x[..., pos : pos + n], k, M, allow_empty=True)
        pos += n
    return out


def params_from_kernel(Y_reduced, ctx: MultiDualContext | None = None, rel_tol=None, rank=None) -> AffineSubspaceParams:
    """Canonical parameters of ``Ker Y'^T``; independent of how the constraints are presented."""
    p = subspace_params(Y_reduced, rel_tol=rel_tol, rank=rank)
    if ctx is not None and (p.M, p.K) != (ctx.M, ctx.K):
        raise DimensionError(f"kernel has (M, K) = ({p.M}, {p.K}), context expects ({ctx.M}, {ctx.K})")
    return p
