"""Modified hyperspherical coordinates with a signed radius.

Directions are restricted to the half-sphere ``x_1 >= 0`` and the sign of the
line's position is carried by the radius, so that every line through the
origin has a unique direction (almost everywhere).

Angle ranges, for ambient dimension ``N >= 3``::

    phi_1          in [0, pi/2]
    phi_2..phi_N-2 in [0, pi]
    phi_N-1        in [0, 2 pi)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedDirectionError, UnsupportedDimensionError

__all__ = [
    "SphCoords",
    "cartesian_from_sph",
    "sph_from_cartesian",
    "volume_element",
    "angle_periods",
]


@dataclass(frozen=True)
class SphCoords:
    rho: float
    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        object.__setattr__(self, "phi", phi)
        if phi.ndim != 1 or phi.size + 1 < 3:
            raise UnsupportedDimensionError(
                f"need at least 2 angles (N >= 3), got {phi.size}"
            )

    @property
    def dim(self) -> int:
        return self.phi.size + 1


def _sign(x):
    # sign(0) := +1
    return np.where(x < 0, -1.0, 1.0)


def cartesian_from_sph(c: SphCoords | float, phi=None) -> np.ndarray:
    """Map ``(rho, phi)`` to Cartesian coordinates in R^N.

    Accepts either a :class:`SphCoords` or ``rho, phi`` directly.  Arrays of
    shape ``(..., N-1)`` for ``phi`` (with matching ``rho``) are evaluated
    elementwise.
    """
    if isinstance(c, SphCoords):
        rho, phi = c.rho, c.phi
    else:
        rho = c
    phi = np.asarray(phi, dtype=float)
    rho = np.asarray(rho, dtype=float)
    n = phi.shape[-1] + 1
    if n < 3:
        raise UnsupportedDimensionError(f"dimension {n} < 3 is not supported")
    s = np.sin(phi)
    # running products of sines: sprod[..., i] = prod_{k<i} sin(phi_k)
    sprod = np.concatenate(
        [np.ones(phi.shape[:-1] + (1,)), np.cumprod(s, axis=-1)], axis=-1
    )
    x = np.empty(phi.shape[:-1] + (n,))
    x[..., :-1] = np.cos(phi) * sprod[..., :-1]
    x[..., -1] = sprod[..., -1]
    return rho[..., None] * x


def sph_from_cartesian(x) -> SphCoords:
    """Inverse of :func:`cartesian_from_sph` for a single vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a 1-D vector")
    rho, phi = sph_from_cartesian_batch(x[None, :])
    return SphCoords(float(rho[0]), phi[0])


def sph_from_cartesian_batch(x, sign=None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised inverse transform for rows of ``x`` (shape ``(n, N)``).

    ``sign`` overrides ``sign(x_1)`` as the orientation of the direction; with
    a fixed sign the map is continuous across ``x_1 = 0`` (``phi_1`` then
    leaves ``[0, pi/2]``).
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n < 3:
        raise UnsupportedDimensionError(f"dimension {n} < 3 is not supported")
    norm = np.linalg.norm(x, axis=-1)
    if np.any(norm == 0):
        raise UndefinedDirectionError("direction of the zero vector is undefined")
    sgn = _sign(x[..., 0]) if sign is None else np.broadcast_to(np.asarray(sign, dtype=float), norm.shape)
    z = x * sgn[..., None] + 0.0  # + 0.0 turns -0.0 into 0.0 for arctan2
    # tail[..., i] = ||z[i+1:]||
    sq = z[..., ::-1] ** 2
    tail = np.sqrt(np.cumsum(sq, axis=-1)[..., ::-1])
    tail = np.concatenate([tail[..., 1:], np.zeros(z.shape[:-1] + (1,))], axis=-1)
    phi = np.empty(x.shape[:-1] + (n - 1,))
    # arctan2(0, 0) = 0, which is the documented choice for vanishing tails
    phi[..., : n - 2] = np.arctan2(tail[..., : n - 2], z[..., : n - 2])
    phi[..., n - 2] = np.mod(np.arctan2(z[..., n - 1], z[..., n - 2]), 2 * np.pi)
    return sgn * norm, phi


def volume_element(c: SphCoords | float, phi=None) -> np.ndarray | float:
    """``|det d(x)/d(rho, phi)| = |rho|^(N-1) prod_k sin^(N-k-1)(phi_k)``."""
    if isinstance(c, SphCoords):
        rho, phi = c.rho, c.phi
    else:
        rho = c
    phi = np.asarray(phi, dtype=float)
    n = phi.shape[-1] + 1
    if n < 3:
        raise UnsupportedDimensionError(f"dimension {n} < 3 is not supported")
    expo = n - 1 - np.arange(1, n - 1)
    out = np.abs(rho) ** (n - 1) * np.prod(np.abs(np.sin(phi[..., : n - 2])) ** expo, axis=-1)
    return out if np.ndim(out) else float(out)


def angle_periods(n: int) -> list[float | None]:
    """Period of each angle for ambient dimension ``n`` (None if not periodic)."""
    return [None] * (n - 2) + [2 * np.pi]
