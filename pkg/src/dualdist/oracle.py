"""Monte-Carlo oracles for the dual densities.

``mc_oracle_grid`` draws parameters from the Gaussian model and deposits the
zero-set of every sampled model on a grid with arc-length weights, so the
normalised grid estimates the point density of random model curves.  The
direct conic sampler draws feature points from the one-constraint dual
density and maps them to the image plane.
"""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from .conditional import DensityGrid, GridSpec
from .subspace import GaussianParam, tangent_whitening

logger = logging.getLogger(__name__)

N_TRACE = 4096
BATCH = 64


def _conic_pieces(thetas):
    """Centre, rotation and signed squared semi-axes of each conic."""
    a11, a22, a33, b12, b23, b13 = thetas.T
    A2 = np.stack([np.stack([a11, b12 / 2], -1), np.stack([b12 / 2, a22], -1)], -2)
    a = np.stack([b13 / 2, b23 / 2], -1)
    det = a11 * a22 - b12 * b12 / 4
    with np.errstate(divide="ignore", invalid="ignore"):
        x0 = -np.linalg.solve(A2, a[..., None])[..., 0]
    k = a33 + np.einsum("ni,ni->n", a, x0)
    lam, R = np.linalg.eigh(A2)
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = -k[:, None] / lam
    return x0, R, sq, det


class _Accumulator:
    """Mass and passage counts on a grid padded with one overflow row and column."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.size = (spec.nx + 1) * (spec.ny + 1)
        self.mass = np.zeros(self.size)
        self.counts = np.zeros(self.size, dtype=np.int64)

    def cells(self, fi, fj):
        # fractional cell coordinates -> padded flat index; outside points land in the overflow
        nx, ny = self.spec.nx, self.spec.ny
        i = np.minimum((fi + 1).astype(np.int32).view(np.uint32) - np.uint32(1), np.uint32(nx))
        j = np.minimum((fj + 1).astype(np.int32).view(np.uint32) - np.uint32(1), np.uint32(ny))
        return i * np.uint32(ny + 1) + j

    def add(self, cell, weights, closed: bool):
        self.mass += np.bincount(cell.ravel(), weights=weights.ravel(), minlength=self.size)
        enter = np.empty(cell.shape, dtype=bool)
        enter[:, 1:] = cell[:, 1:] != cell[:, :-1]
        enter[:, 0] = cell[:, 0] != cell[:, -1] if closed else True
        self.counts += np.bincount(cell[enter], minlength=self.size)

    def result(self):
        nx, ny = self.spec.nx, self.spec.ny
        mass = self.mass.reshape(nx + 1, ny + 1)[:nx, :ny]
        counts = self.counts.reshape(nx + 1, ny + 1)[:nx, :ny]
        return mass, counts


def _deposit_ellipses(acc: _Accumulator, x0, R, axes, n_trace):
    spec = acc.spec
    t = np.linspace(0.0, 2 * np.pi, n_trace, endpoint=False) + np.pi / n_trace
    basis = np.stack([np.ones_like(t), np.cos(t), np.sin(t)]).astype(np.float32)
    basis2 = np.stack([np.ones_like(t), np.cos(2 * t), np.sin(2 * t)])
    # point(t) = x0 + a cos t + b sin t
    a = axes[:, 0, None] * R[:, :, 0]
    b = axes[:, 1, None] * R[:, :, 1]
    cx = np.stack([(x0[:, 0] - spec.xmin) / spec.dx, a[:, 0] / spec.dx, b[:, 0] / spec.dx], 1)
    cy = np.stack([(x0[:, 1] - spec.ymin) / spec.dy, a[:, 1] / spec.dy, b[:, 1] / spec.dy], 1)
    cell = acc.cells(cx.astype(np.float32) @ basis, cy.astype(np.float32) @ basis)
    # |point'(t)|^2 written in double angles
    aa, bb, ab = (a * a).sum(1), (b * b).sum(1), (a * b).sum(1)
    sp2 = np.stack([(aa + bb) / 2, (bb - aa) / 2, -ab], 1) @ basis2
    acc.add(cell, np.sqrt(np.maximum(sp2, 0.0)) * (2 * np.pi / n_trace), closed=True)


def _deposit_hyperbolas(acc: _Accumulator, x0, R, sq, n_trace):
    spec = acc.spec
    centre = np.array([(spec.xmin + spec.xmax) / 2, (spec.ymin + spec.ymax) / 2])
    span = np.hypot(spec.xmax - spec.xmin, spec.ymax - spec.ymin)
    ia = (sq[:, 0] <= 0).astype(int)  # real axis has positive -k/lambda
    rows = np.arange(len(sq))
    a1 = np.sqrt(sq[rows, ia])
    a2 = np.sqrt(-sq[rows, 1 - ia])
    ea = R[rows, :, ia]
    eb = R[rows, :, 1 - ia]
    dist = np.linalg.norm(x0 - centre, axis=1)
    tmax = np.arcsinh((span + dist) / np.minimum(a1, a2))
    t = np.linspace(-1.0, 1.0, n_trace)[None, :] * tmax[:, None]
    dt = 2 * tmax / (n_trace - 1)
    ch, sh = np.cosh(t), np.sinh(t)
    w = np.sqrt((a1[:, None] * sh) ** 2 + (a2[:, None] * ch) ** 2) * dt[:, None]
    for branch in (1.0, -1.0):
        pa = branch * a1[:, None] * ch
        pb = a2[:, None] * sh
        px = x0[:, 0, None] + pa * ea[:, 0, None] + pb * eb[:, 0, None]
        py = x0[:, 1, None] + pa * ea[:, 1, None] + pb * eb[:, 1, None]
        cell = acc.cells((px - spec.xmin) / spec.dx, (py - spec.ymin) / spec.dy)
        acc.add(cell, w, closed=False)


def deposit_conics(acc: _Accumulator, thetas, n_trace: int = N_TRACE) -> int:
    """Trace every conic's real zero set onto the accumulator.

    Ellipses are sampled uniformly in their angle parameter and hyperbola
    branches in their hyperbolic parameter out to beyond the grid; each
    point carries its arc-length weight.  Returns the number of conics
    without a traceable real curve.
    """
    thetas = np.atleast_2d(thetas)
    x0, R, sq, det = _conic_pieces(thetas)
    finite = np.all(np.isfinite(x0), axis=1) & np.all(np.isfinite(sq), axis=1)
    ell = finite & (det > 0) & np.all(sq > 0, axis=1)
    hyp = finite & (det < 0)
    if np.any(ell):
        _deposit_ellipses(acc, x0[ell], R[ell], np.sqrt(sq[ell]), n_trace)
    if np.any(hyp):
        _deposit_hyperbolas(acc, x0[hyp], R[hyp], sq[hyp], n_trace)
    return int(np.sum(~(ell | hyp)))


def _sample_thetas(g: GaussianParam, n, rng):
    return g.sample(n, rng)


def mc_oracle_grid(
    g: GaussianParam,
    model: str | Callable = "conic",
    spec: GridSpec | None = None,
    n: int = 100_000,
    seed=0,
    n_trace: int = N_TRACE,
    batch: int = BATCH,
) -> DensityGrid:
    """Monte-Carlo point density of random model zero-sets.

    ``model="conic"`` traces each sampled conic analytically.  Any other
    model is given as an embedding ``y(u, v)`` (callable on ``(..., 2)``
    arrays) and its zero-set is traced on a supersampled grid.
    ``counts`` on the result holds the number of curve passages per cell.
    """
    if spec is None:
        raise ValueError("a grid spec is required")
    rng = np.random.default_rng(seed)
    acc = _Accumulator(spec)
    skipped = 0
    done = 0
    while done < n:
        b = min(batch, n - done)
        thetas = _sample_thetas(g, b, rng)
        if model == "conic":
            skipped += deposit_conics(acc, thetas, n_trace)
        else:
            for th in thetas:
                for pts, w in _trace_generic(model, th, spec):
                    fi = (pts[:, 0] - spec.xmin) / spec.dx
                    fj = (pts[:, 1] - spec.ymin) / spec.dy
                    acc.add(acc.cells(fi, fj)[None], w[None], closed=False)
        done += b
    if skipped:
        logger.info("mc_oracle_grid: %d of %d samples had no real zero set", skipped, n)
    values, counts = acc.result()
    grid = DensityGrid(spec, values.copy(), counts=counts.copy())
    return grid.normalize() if grid.mass() > 0 else grid


def _trace_generic(embed, theta, spec: GridSpec, oversample: int = 4):
    from skimage.measure import find_contours

    nx, ny = spec.nx * oversample, spec.ny * oversample
    xs = np.linspace(spec.xmin, spec.xmax, nx)
    ys = np.linspace(spec.ymin, spec.ymax, ny)
    U, V = np.meshgrid(xs, ys, indexing="ij")
    f = embed(np.stack([U, V], -1)) @ theta
    out = []
    for c in find_contours(f, 0.0):
        pts = np.column_stack([np.interp(c[:, 0], np.arange(nx), xs), np.interp(c[:, 1], np.arange(ny), ys)])
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if seg.size == 0:
            continue
        out.append((0.5 * (pts[1:] + pts[:-1]), seg))
    return out


def direct_conic_sample(g: GaussianParam, n: int, seed=0, min_denominator: float = 1e-12) -> np.ndarray:
    """Image points drawn from the one-constraint dual density of a conic model.

    A normal direction comes from a whitened parameter sample, its signed
    distance from the unit 1-D Gaussian, and the resulting feature vector is
    mapped back to the image through ``(u, v) = (y4 / y5, y4 / y6)``.
    Draws with a near-zero denominator are redrawn.
    """
    if g.dim != 6:
        raise ValueError("direct sampling needs a 6-parameter conic model")
    rng = np.random.default_rng(seed)
    cov_scale = float(np.max(np.abs(g.cov)))
    if cov_scale == 0:
        return _degenerate_conic_points(g.theta0, n, rng)
    frame = tangent_whitening(g)
    out = np.empty((0, 2))
    rejected = 0
    while len(out) < n:
        m = n - len(out)
        t = rng.standard_normal((m, frame.M - 1))
        nrm = t / np.linalg.norm(t, axis=1, keepdims=True)
        lam = rng.standard_normal(m)
        yr = np.column_stack([nrm, lam])
        y = frame.unreduce(yr.T).T
        ok = (np.abs(y[:, 4]) > min_denominator * np.abs(y[:, 3])) & (np.abs(y[:, 5]) > min_denominator * np.abs(y[:, 3]))
        ok &= (np.abs(y[:, 4]) > 0) & (np.abs(y[:, 5]) > 0)
        rejected += int(np.sum(~ok))
        y = y[ok]
        out = np.vstack([out, np.column_stack([y[:, 3] / y[:, 4], y[:, 3] / y[:, 5]])])
    if rejected:
        logger.info("direct_conic_sample: redrew %d samples", rejected)
    return out[:n]


def _degenerate_conic_points(theta, n, rng):
    """Zero-variance limit: points uniform in arc length on the conic itself."""
    x0, R, sq, det = _conic_pieces(np.asarray(theta, dtype=float)[None])
    x0, R, sq = x0[0], R[0], sq[0]
    m = max(4 * n, N_TRACE)
    if det[0] > 0 and np.all(sq > 0):
        t = rng.uniform(0.0, 2 * np.pi, m)
        local = np.column_stack([np.sqrt(sq[0]) * np.cos(t), np.sqrt(sq[1]) * np.sin(t)])
        speed = np.hypot(np.sqrt(sq[0]) * np.sin(t), np.sqrt(sq[1]) * np.cos(t))
    elif det[0] < 0:
        ia = 0 if sq[0] > 0 else 1
        a1, a2 = np.sqrt(sq[ia]), np.sqrt(-sq[1 - ia])
        t = rng.uniform(-5.0, 5.0, m)
        branch = rng.choice([-1.0, 1.0], m)
        local = np.zeros((m, 2))
        local[:, ia] = branch * a1 * np.cosh(t)
        local[:, 1 - ia] = a2 * np.sinh(t)
        speed = np.hypot(a1 * np.sinh(t), a2 * np.cosh(t))
    else:
        raise ValueError("conic has no traceable real zero set")
    pts = x0 + local @ R.T
    idx = rng.choice(m, size=n, p=speed / speed.sum())
    return pts[idx]


def compare_grids(analytic: DensityGrid, oracle: DensityGrid, min_count: int = 500, tol: float = 0.1) -> dict:
    """Per-cell relative deviation of an analytic grid from an MC oracle grid.

    Only cells with at least ``min_count`` oracle passages enter the mean;
    the verdict is ``"pass"`` when that mean is below ``tol``.
    """
    if analytic.spec != oracle.spec:
        raise ValueError("grids differ in layout")
    if oracle.counts is None:
        raise ValueError("oracle grid carries no counts")
    a = analytic.normalize().values if not analytic.normalized else analytic.values
    o = oracle.values
    sel = (oracle.counts >= min_count) & (o > 0)
    idx = np.argwhere(sel)
    rel = np.abs(a[sel] - o[sel]) / o[sel]
    mean = float(rel.mean()) if rel.size else float("nan")
    return {
        "min_count": int(min_count),
        "tolerance": float(tol),
        "cells": int(sel.sum()),
        "mean_relative_deviation": mean,
        "median_relative_deviation": float(np.median(rel)) if rel.size else float("nan"),
        "verdict": "pass" if rel.size and mean < tol else "fail",
        "per_cell": [
            {"i": int(i), "j": int(j), "analytic": float(a[i, j]), "mc": float(o[i, j]), "count": int(oracle.counts[i, j])}
            for i, j in idx
        ],
    }
