"""Conditional feature densities and sampling from them.

A :class:`FeatureMap` is a chart ``x -> (s, Phi)`` from a low-dimensional
feature parameterisation into the dual parameter space together with the
log dual density there.  The conditional density of ``x`` is the dual
density magnified by ``sqrt(det(J^T J))`` of the chart's Jacobian.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DualDistError, EmptyGridError, EvaluationError, InvalidStartError

logger = logging.getLogger(__name__)

FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)
JUMP_RATIO = 0.5
JUMP_SIZE = 1e-6


@dataclass(frozen=True)
class FeatureMap:
    """Chart from features ``x`` (length ``dim_in``) to dual parameters.

    ``periods[i]`` gives the period of output ``i`` (``None`` if not an
    angle that wraps).  ``localize(x0)`` may return a variant of ``func``
    pinned to the branch at ``x0``; it is used for differentiation across
    canonicalisation seams (e.g. half-sphere sign flips).  With
    ``vectorized`` set, ``func`` and the localized maps also accept a stack
    of points ``(k, dim_in)`` and return ``(k, dim_out)``.
    """

    func: Callable[[np.ndarray], np.ndarray]
    dim_in: int
    log_density: Callable[[np.ndarray], float]
    periods: Sequence[float | None] | None = None
    localize: Callable[[np.ndarray], Callable[[np.ndarray], np.ndarray]] | None = None
    name: str = ""
    vectorized: bool = False

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)


def identity_map(log_density, dim: int) -> FeatureMap:
    return FeatureMap(lambda x: np.asarray(x, dtype=float), dim, log_density, name="identity")


def _wrap(diff, periods):
    if periods is None:
        return diff
    out = diff.copy()
    for i, p in enumerate(periods):
        if p is not None:
            out[i] = (out[i] + 0.5 * p) % p - 0.5 * p
    return out


def _fd_column(f0, fp, fm, hi, periods):
    if fp is not None and fm is not None:
        fwd = _wrap(fp - f0, periods) / hi
        bwd = _wrap(f0 - fm, periods) / hi
        col = 0.5 * (fwd + bwd)
        # a component jumping within the stencil (a chart seam) takes its smooth side
        gap = np.abs(fwd - bwd)
        jump = (gap > JUMP_RATIO * np.maximum(np.abs(fwd), np.abs(bwd))) & (
            gap * hi > JUMP_SIZE * np.maximum(1.0, np.abs(f0))
        )
        if np.any(jump):
            col[jump] = np.where(np.abs(fwd) < np.abs(bwd), fwd, bwd)[jump]
        return col
    if fp is not None:
        return _wrap(fp - f0, periods) / hi
    if fm is not None:
        return _wrap(f0 - fm, periods) / hi
    return None


def _stencil_values(func, x, h):
    """All ``2 d + 1`` stencil values in one call of a vectorised map, or None."""
    d = x.size
    pts = np.repeat(x[None, :], 2 * d + 1, axis=0)
    pts[1 : d + 1] += np.diag(h)
    pts[d + 1 :] -= np.diag(h)
    try:
        v = np.asarray(func(pts), dtype=float)
    except DualDistError:
        return None
    return v if v.ndim == 2 and np.all(np.isfinite(v)) else None


def numerical_jacobian(f: FeatureMap | Callable, x, h=None) -> np.ndarray:
    """Central-difference Jacobian ``d f / d x``.

    Components whose forward and backward differences disagree by more than
    ``JUMP_RATIO`` relative to their size, with a second difference above
    ``JUMP_SIZE`` (a seam of the chart inside the stencil, not curvature),
    fall back to the smaller one-sided difference.  So do points where ``f``
    fails on one side.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    periods = getattr(f, "periods", None)
    func = f.localize(x) if getattr(f, "localize", None) is not None else f
    if h is None:
        h = FD_STEP * np.maximum(1.0, np.abs(x))
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    d = x.size

    if getattr(f, "vectorized", False):
        v = _stencil_values(func, x, h)
        if v is not None:
            return np.column_stack([_fd_column(v[0], v[1 + i], v[1 + d + i], h[i], periods) for i in range(d)])

    def ev(z):
        try:
            v = np.atleast_1d(np.asarray(func(z), dtype=float))
        except DualDistError:
            return None
        return v if np.all(np.isfinite(v)) else None

    f0 = ev(x)
    if f0 is None:
        raise EvaluationError(f"map is not finite at {x}")
    cols = []
    for i in range(d):
        e = np.zeros_like(x)
        e[i] = h[i]
        col = _fd_column(f0, ev(x + e), ev(x - e), h[i], periods)
        if col is None:
            raise EvaluationError(f"map is not finite near {x}")
        cols.append(col)
    return np.column_stack(cols)


@dataclass(frozen=True)
class ConditionalValue:
    value: float
    log_value: float
    degenerate: bool = False


def conditional_log_density(f: FeatureMap, x) -> ConditionalValue:
    """``log sqrt(det J^T J) + log p(f(x))`` with a degenerate-point flag."""
    try:
        params = f(x)
        J = numerical_jacobian(f, x)
    except DualDistError:
        return ConditionalValue(0.0, -np.inf, True)
    if not np.all(np.isfinite(params)):
        return ConditionalValue(0.0, -np.inf, True)
    sign, logdet = np.linalg.slogdet(J.T @ J)
    if sign <= 0 or not np.isfinite(logdet):
        return ConditionalValue(0.0, -np.inf, True)
    lp = float(f.log_density(params)) + 0.5 * logdet
    return ConditionalValue(float(np.exp(lp)), lp, False)


def conditional_density(f: FeatureMap, x) -> float:
    """Unnormalised conditional density of the feature parameters ``x``."""
    return conditional_log_density(f, x).value


# ---------------------------------------------------------------------------
# Density grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned grid of ``nx x ny`` cells; values live at cell centres."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs nx, ny >= 2")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("grid bounds must be increasing")

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 6:
            raise ValueError("grid spec must be 'xmin,xmax,ymin,ymax,nx,ny'")
        a = [float(p) for p in parts[:4]]
        return cls(*a, int(parts[4]), int(parts[5]))

    @property
    def dx(self) -> float:
        return (self.xmax - self.xmin) / self.nx

    @property
    def dy(self) -> float:
        return (self.ymax - self.ymin) / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.xmin + (np.arange(self.nx) + 0.5) * self.dx
        ys = self.ymin + (np.arange(self.ny) + 0.5) * self.dy
        return xs, ys

    def cell_index(self, pts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cell indices of points and a mask of points inside the grid."""
        pts = np.asarray(pts, dtype=float)
        i = np.floor((pts[..., 0] - self.xmin) / self.dx).astype(np.int64)
        j = np.floor((pts[..., 1] - self.ymin) / self.dy).astype(np.int64)
        inside = (i >= 0) & (i < self.nx) & (j >= 0) & (j < self.ny)
        return i, j, inside


@dataclass
class DensityGrid:
    """Density values on a :class:`GridSpec`; ``values[i, j]`` is at ``(x_i, y_j)``."""

    spec: GridSpec
    values: np.ndarray
    normalized: bool = False
    norm_const: float = 1.0
    counts: np.ndarray | None = None
    flags: np.ndarray | None = field(default=None, repr=False)

    def normalize(self) -> "DensityGrid":
        total = float(self.values.sum()) * self.spec.cell_area
        if not total > 0:
            raise EmptyGridError("grid holds no positive mass")
        return DensityGrid(self.spec, self.values / total, True, total, self.counts, self.flags)

    def mass(self) -> float:
        return float(self.values.sum()) * self.spec.cell_area

    def argmax_point(self) -> np.ndarray:
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        xs, ys = self.spec.centers()
        return np.array([xs[i], ys[j]])


def evaluate_grid(f: FeatureMap, spec: GridSpec, threads: int = 1, normalize: bool = True) -> DensityGrid:
    """Conditional density at every cell centre (rows split across threads)."""
    xs, ys = spec.centers()

    def row(i):
        vals = np.empty(spec.ny)
        flags = np.zeros(spec.ny, dtype=bool)
        for j, y in enumerate(ys):
            cv = conditional_log_density(f, np.array([xs[i], y]))
            vals[j] = cv.value
            flags[j] = cv.degenerate
        return vals, flags

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(row, range(spec.nx)))
    else:
        rows = [row(i) for i in range(spec.nx)]
    values = np.array([r[0] for r in rows])
    flags = np.array([r[1] for r in rows])
    if flags.any():
        logger.info("%d degenerate grid points", int(flags.sum()))
    grid = DensityGrid(spec, values, flags=flags)
    return grid.normalize() if normalize else grid


# ---------------------------------------------------------------------------
# Metropolis--Hastings
# ---------------------------------------------------------------------------


@dataclass
class Chain:
    samples: np.ndarray
    step: float
    acceptance: float


def _as_log_target(target):
    if isinstance(target, FeatureMap):
        return lambda x: conditional_log_density(target, x).log_value
    return target


def mh_chain(target, x0, n: int, seed, step: float | None = None, burn_in: int | None = None) -> Chain:
    """Random-walk Metropolis chain of ``n`` post-burn-in states.

    ``target`` is a :class:`FeatureMap` (sampling its conditional density) or a
    callable returning a log density.  The isotropic Gaussian step is adapted
    during burn-in (20% of the whole run by default) towards a 30% acceptance
    rate, then frozen.
    """
    log_p = _as_log_target(target)
    rng = np.random.default_rng(seed)
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    lp = log_p(x)
    if not np.isfinite(lp):
        raise InvalidStartError("target density is zero at the starting point")
    d = x.size
    if step is None:
        step = 2.38 / np.sqrt(d) * 0.1 * max(1.0, float(np.max(np.abs(x))))
    if burn_in is None:
        burn_in = max(n // 4, 100)
    log_step = np.log(step)
    batch_acc = 0
    for t in range(1, burn_in + 1):
        prop = x + np.exp(log_step) * rng.standard_normal(d)
        lq = log_p(prop)
        if np.log(rng.random()) < lq - lp:
            x, lp = prop, lq
            batch_acc += 1
        if t % 50 == 0:
            rate = batch_acc / 50
            log_step += 2.0 * (rate - 0.3) / np.sqrt(t / 50)
            batch_acc = 0
    step = float(np.exp(log_step))
    out = np.empty((n, d))
    accepted = 0
    for t in range(n):
        prop = x + step * rng.standard_normal(d)
        lq = log_p(prop)
        if np.log(rng.random()) < lq - lp:
            x, lp = prop, lq
            accepted += 1
        out[t] = x
    acc = accepted / max(n, 1)
    logger.debug("MH step %.4g acceptance %.3f", step, acc)
    return Chain(out, step, acc)


def mh_sample(target, x0, n: int, seed, **kw) -> np.ndarray:
    return mh_chain(target, x0, n, seed, **kw).samples


def split_rhat(chains) -> np.ndarray:
    """Split-chain potential scale reduction factor per dimension."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 2:
        chains = chains[..., None]
    m, n, d = chains.shape
    half = n // 2
    parts = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    n = half
    means = parts.mean(axis=1)
    W = parts.var(axis=1, ddof=1).mean(axis=0)
    B = n * means.var(axis=0, ddof=1)
    var = (n - 1) / n * W + B / n
    return np.sqrt(var / W)
