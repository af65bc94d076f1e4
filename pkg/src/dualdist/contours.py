"""Iso-density contours of grids and their topology checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.measure import find_contours, points_in_poly

from .conditional import DensityGrid

DEFAULT_LEVELS = (1e-1, 1e-2, 1e-3)


@dataclass(frozen=True)
class Polyline:
    points: np.ndarray  # (n, 2) in grid coordinates (x, y)
    closed: bool


def extract_contours(grid: DensityGrid, levels=DEFAULT_LEVELS) -> dict[float, list[Polyline]]:
    """Marching-squares contours at ``levels`` times the grid maximum.

    A polyline is closed when its end points lie within one cell diagonal of
    each other.
    """
    spec = grid.spec
    v = np.asarray(grid.values, dtype=float)
    vmax = float(v.max())
    xs = spec.xmin + (np.arange(spec.nx) + 0.5) * spec.dx
    ys = spec.ymin + (np.arange(spec.ny) + 0.5) * spec.dy
    diag = np.hypot(spec.dx, spec.dy)
    out: dict[float, list[Polyline]] = {}
    for lev in levels:
        lines = []
        if vmax > 0:
            for c in find_contours(v, lev * vmax):
                pts = np.column_stack([np.interp(c[:, 0], np.arange(spec.nx), xs), np.interp(c[:, 1], np.arange(spec.ny), ys)])
                closed = len(pts) > 2 and np.linalg.norm(pts[0] - pts[-1]) <= diag
                lines.append(Polyline(pts, bool(closed)))
        out[float(lev)] = lines
    return out


def _inside(inner: Polyline, outer: Polyline) -> bool:
    return bool(np.all(points_in_poly(inner.points, outer.points)))


def nesting_report(contours: dict[float, list[Polyline]]) -> dict:
    """Closure and nesting of contour families ordered from high to low level.

    The families are nested when every level has at least one polyline, all
    polylines are closed, and each polyline of a level lies inside some
    polyline of the next lower level.
    """
    levels = sorted(contours, reverse=True)
    empty = [lev for lev in levels if not contours[lev]]
    open_ = [lev for lev in levels if any(not p.closed for p in contours[lev])]
    orphans = []
    for hi, lo in zip(levels, levels[1:]):
        for p in contours[hi]:
            if not any(q.closed and _inside(p, q) for q in contours[lo]):
                orphans.append(hi)
                break
    ok = not empty and not open_ and not orphans
    return {
        "levels": levels,
        "counts": [len(contours[lev]) for lev in levels],
        "empty_levels": empty,
        "open_levels": open_,
        "unnested_levels": orphans,
        "nested_closed": ok,
    }


def nested_closed(contours: dict[float, list[Polyline]]) -> bool:
    return nesting_report(contours)["nested_closed"]


def point_inside(contours: dict[float, list[Polyline]], level: float, pt) -> bool:
    """True if ``pt`` lies inside some closed polyline of ``level``."""
    pt = np.asarray(pt, dtype=float)[None, :]
    return any(p.closed and bool(points_in_poly(pt, p.points)[0]) for p in contours[float(level)])
