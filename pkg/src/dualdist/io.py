"""Plain-text file formats: point CSVs, model and contour JSON, density-grid CSV.

Floats are written with ``repr`` so every file parses back to the exact
values that were written.
"""

from __future__ import annotations

import io
import json
import sys
from pathlib import Path

import numpy as np

from .conditional import DensityGrid, GridSpec
from .contours import Polyline, nesting_report
from .errors import InputParseError
from .models.conic import ConicModel
from .models.trifocal import TrifocalModel

FORMAT_VERSION = 1
CONIC_HEADER = ("x", "y")
TRIFOCAL_HEADER = ("x1", "y1", "x2", "y2", "x3", "y3")


def _read_text(source) -> str:
    if source == "-" or source is None:
        return sys.stdin.read()
    if isinstance(source, io.TextIOBase):
        return source.read()
    try:
        return Path(source).read_text()
    except OSError as exc:
        raise InputParseError(f"cannot read {source}: {exc}") from exc


def _write_text(dest, text: str) -> None:
    if dest == "-":
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text)


def _fmt(v) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# Points
# ---------------------------------------------------------------------------


def parse_points(text: str, ncols: int) -> np.ndarray:
    """Rows of ``ncols`` floats after a mandatory header line."""
    lines = text.splitlines()
    rows = []
    header_seen = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if not header_seen:
            header_seen = True
            try:
                [float(f) for f in fields]
            except ValueError:
                continue
            raise InputParseError(f"line {lineno}: header line required", lineno)
        if len(fields) != ncols:
            raise InputParseError(f"line {lineno}: expected {ncols} fields, got {len(fields)}", lineno)
        try:
            vals = [float(f) for f in fields]
        except ValueError as exc:
            raise InputParseError(f"line {lineno}: {exc}", lineno) from exc
        if not all(np.isfinite(vals)):
            raise InputParseError(f"line {lineno}: non-finite value", lineno)
        rows.append(vals)
    if not header_seen:
        raise InputParseError("empty input: header line required", 1)
    return np.array(rows, dtype=float).reshape(-1, ncols)


def read_points(source, ncols: int = 2) -> np.ndarray:
    return parse_points(_read_text(source), ncols)


def format_points(pts, header=CONIC_HEADER) -> str:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = [",".join(header)]
    out += [",".join(_fmt(v) for v in row) for row in pts]
    return "\n".join(out) + "\n"


def write_points(dest, pts, header=CONIC_HEADER) -> None:
    _write_text(dest, format_points(pts, header))


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


def model_to_dict(model) -> dict:
    if isinstance(model, ConicModel):
        d = {"format_version": FORMAT_VERSION, "kind": "conic"}
    elif isinstance(model, TrifocalModel):
        d = {"format_version": FORMAT_VERSION, "kind": "trifocal", "transforms": model.transforms.tolist()}
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    d.update(
        theta=model.theta.tolist(),
        cov=model.cov.tolist(),
        sigma=float(model.sigma),
        n_points=int(model.n_points),
    )
    return d


def format_model(model) -> str:
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n"


def write_model(dest, model) -> None:
    _write_text(dest, format_model(model))


def parse_model(text: str):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputParseError(f"line {exc.lineno}: {exc.msg}", exc.lineno) from exc
    if not isinstance(d, dict) or d.get("format_version") != FORMAT_VERSION:
        raise InputParseError(f"unsupported model format (need format_version {FORMAT_VERSION})")
    try:
        theta = np.array(d["theta"], dtype=float)
        cov = np.array(d["cov"], dtype=float)
        sigma = float(d.get("sigma", float("nan")))
        n = int(d.get("n_points", 0))
        kind = d["kind"]
        if kind == "conic":
            return ConicModel(theta, cov, sigma, n)
        if kind == "trifocal":
            return TrifocalModel(theta, cov, np.array(d["transforms"], dtype=float), sigma, n)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputParseError(f"invalid model file: {exc}") from exc
    raise InputParseError(f"unknown model kind {kind!r}")


def read_model(source):
    return parse_model(_read_text(source))


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


def format_grid(grid: DensityGrid) -> str:
    s = grid.spec
    out = [
        f"# bounds,{_fmt(s.xmin)},{_fmt(s.xmax)},{_fmt(s.ymin)},{_fmt(s.ymax)}",
        f"# resolution,{s.nx},{s.ny}",
        f"# normalization,{_fmt(grid.norm_const)}",
    ]
    out += [",".join(_fmt(v) for v in row) for row in grid.values]
    return "\n".join(out) + "\n"


def write_grid(dest, grid: DensityGrid) -> None:
    _write_text(dest, format_grid(grid))


def parse_grid(text: str) -> DensityGrid:
    lines = text.splitlines()
    if len(lines) < 3:
        raise InputParseError("grid file needs a 3-line header", len(lines) + 1)
    try:
        b = lines[0].split(",")
        r = lines[1].split(",")
        c = lines[2].split(",")
        if b[0] != "# bounds" or r[0] != "# resolution" or c[0] != "# normalization":
            raise ValueError("bad header")
        spec = GridSpec(*[float(v) for v in b[1:5]], int(r[1]), int(r[2]))
        norm = float(c[1])
    except (IndexError, ValueError) as exc:
        raise InputParseError(f"invalid grid header: {exc}", 1) from exc
    rows = []
    for lineno, line in enumerate(lines[3:], start=4):
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise InputParseError(f"line {lineno}: {exc}", lineno) from exc
    values = np.array(rows, dtype=float)
    if values.shape != (spec.nx, spec.ny):
        raise InputParseError(f"grid body has shape {values.shape}, header says {(spec.nx, spec.ny)}")
    return DensityGrid(spec, values, True, norm)


def read_grid(source) -> DensityGrid:
    return parse_grid(_read_text(source))


# ---------------------------------------------------------------------------
# Contours
# ---------------------------------------------------------------------------


def format_contours(contours: dict[float, list[Polyline]]) -> str:
    d = {
        "format_version": FORMAT_VERSION,
        "levels": [
            {
                "level": float(lev),
                "polylines": [{"closed": p.closed, "points": p.points.tolist()} for p in contours[lev]],
            }
            for lev in sorted(contours, reverse=True)
        ],
        "topology": nesting_report(contours),
    }
    return json.dumps(d, indent=1) + "\n"


def write_contours(dest, contours) -> None:
    _write_text(dest, format_contours(contours))


def parse_contours(text: str) -> dict[float, list[Polyline]]:
    try:
        d = json.loads(text)
        return {
            float(e["level"]): [Polyline(np.array(p["points"], dtype=float).reshape(-1, 2), bool(p["closed"])) for p in e["polylines"]]
            for e in d["levels"]
        }
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputParseError(f"invalid contour file: {exc}") from exc


def read_contours(source):
    return parse_contours(_read_text(source))


def write_json(dest, obj) -> None:
    _write_text(dest, json.dumps(obj, indent=1, sort_keys=True) + "\n")
