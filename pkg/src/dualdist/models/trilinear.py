"""Trilinear incidence relations of three views as constraint columns.

The trifocal tensor ``T[i, q, r] = T_i^{qr}`` is flattened with ``i``
slowest, then ``q``, then ``r``: ``theta[9 i + 3 q + r]``.  Every relation is
linear in ``theta``; the functions here return the coefficient columns
``y_l`` with ``theta . y_l = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import UnsupportedRelationError

EPS3 = np.zeros((3, 3, 3))
for _a, _b, _c in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
    EPS3[_a, _b, _c] = 1.0
    EPS3[_a, _c, _b] = -1.0

POINT, LINE = "point", "line"

# rank of each relation for generic consistent data
RELATION_DOF = {
    (POINT, POINT, POINT): 4,
    (POINT, POINT, LINE): 2,
    (POINT, LINE, LINE): 1,
    (LINE, LINE, LINE): 2,
}


@dataclass(frozen=True)
class Correspondence:
    """Features in views 1-3, each a homogeneous 3-vector tagged point or line."""

    features: tuple[np.ndarray, ...]
    tags: tuple[str, ...]

    def __post_init__(self):
        feats = tuple(np.asarray(f, dtype=float) for f in self.features)
        if len(feats) != len(self.tags) or not 1 <= len(feats) <= 3:
            raise ValueError("need 1-3 features with matching tags")
        out = []
        for f, t in zip(feats, self.tags):
            if f.shape != (3,) or not np.any(f):
                raise ValueError("features must be nonzero homogeneous 3-vectors")
            if t not in (POINT, LINE):
                raise ValueError(f"unknown tag {t!r}")
            if t == POINT and f[2] != 0:
                f = f / f[2]
            out.append(f)
        object.__setattr__(self, "features", tuple(out))

    @classmethod
    def points(cls, x1, x2, x3) -> "Correspondence":
        return cls(tuple(_homog(p) for p in (x1, x2, x3)), (POINT,) * 3)

    @property
    def relation(self) -> tuple[str, ...]:
        return tuple(self.tags)


def _homog(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.append(p, 1.0) if p.shape == (2,) else p


def ppp_columns(x, x2, x3) -> np.ndarray:
    """Nine point-point-point columns; vectorised over leading axes of the inputs.

    Returns shape ``(..., 27, 9)`` with column index ``3 s + t``.
    """
    x, x2, x3 = (np.asarray(a, dtype=float) for a in (x, x2, x3))
    X2 = np.einsum("...j,jqs->...qs", x2, EPS3)
    X3 = np.einsum("...k,krt->...rt", x3, EPS3)
    Y = np.einsum("...i,...qs,...rt->...iqrst", x, X2, X3)
    return Y.reshape(Y.shape[:-5] + (27, 9))


def trilinearity_columns(c: Correspondence, T_basis=None) -> np.ndarray:
    """Constraint columns (27 x L) for a correspondence matching a trilinear relation.

    ``L`` is 9, 3, 1 and 3 for point-point-point, point-point-line,
    point-line-line and line-line-line respectively.
    """
    rel = c.relation
    f = c.features
    if rel == (POINT, POINT, POINT):
        return ppp_columns(*f)
    if rel == (POINT, POINT, LINE):
        x, x2, l3 = f
        X2 = np.einsum("j,jqs->qs", x2, EPS3)
        Y = np.einsum("i,qs,r->iqrs", x, X2, l3)
        return Y.reshape(27, 3)
    if rel == (POINT, LINE, LINE):
        x, l2, l3 = f
        return np.einsum("i,q,r->iqr", x, l2, l3).reshape(27, 1)
    if rel == (LINE, LINE, LINE):
        l1, l2, l3 = f
        Li = np.einsum("p,piw->iw", l1, EPS3)
        Y = np.einsum("iw,q,r->iqrw", Li, l2, l3)
        return Y.reshape(27, 3)
    raise UnsupportedRelationError(f"no trilinear relation for tags {rel}")


def tensor_from_cameras(P1, P2, P3) -> np.ndarray:
    """Trifocal tensor ``T[i, q, r]`` of three 3x4 cameras.

    ``T_i^{qr} = (-1)^(i+1) det([P1 without row i; P2 row q; P3 row r])``.
    """
    P1, P2, P3 = (np.asarray(P, dtype=float) for P in (P1, P2, P3))
    T = np.empty((3, 3, 3))
    for i in range(3):
        rows = np.delete(P1, i, axis=0)
        for q in range(3):
            for r in range(3):
                T[i, q, r] = (-1) ** i * np.linalg.det(np.vstack([rows, P2[q], P3[r]]))
    return T


def tensor_from_canonical(P2, P3) -> np.ndarray:
    """``T_i = a_i b4^T - a4 b_i^T`` for ``P1 = [I | 0]``, ``P2 = [A | a4]``, ``P3 = [B | b4]``."""
    P2, P3 = np.asarray(P2, dtype=float), np.asarray(P3, dtype=float)
    a, b = P2[:, :3], P3[:, :3]
    a4, b4 = P2[:, 3], P3[:, 3]
    return np.einsum("qi,r->iqr", a, b4) - np.einsum("q,ri->iqr", a4, b)


def transfer_matrix(T, x2, x3) -> np.ndarray:
    """Matrix ``G`` (9 x 3) with ``G x = 0`` the point-point-point relations in view-1 point ``x``."""
    T = np.asarray(T, dtype=float).reshape(3, 3, 3)
    X2 = np.einsum("j,jqs->qs", np.asarray(x2, dtype=float), EPS3)
    X3 = np.einsum("k,krt->rt", np.asarray(x3, dtype=float), EPS3)
    return np.einsum("qs,rt,iqr->sti", X2, X3, T).reshape(9, 3)
