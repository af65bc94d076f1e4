"""Command-line front end.

Every flag can also be set through an environment variable named
``DUALDIST_<FLAG>`` (e.g. ``DUALDIST_SEED``, ``DUALDIST_REL_TOL``); explicit
flags win.  Exit codes: 0 success, 1 unexpected failure, 2 input parse
error, 3 numerical degeneracy, 4 empty result.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .conditional import GridSpec, conditional_density, evaluate_grid, mh_sample
from .contours import DEFAULT_LEVELS, extract_contours, nesting_report
from .errors import DualDistError, EmptyGridError, InputParseError
from .models.conic import ConicModel, conic_dual_chart, fit_conic_ml
from .models.trifocal import TrifocalModel, deterministic_transfer, fit_trifocal, transfer_density_chart
from .oracle import _degenerate_conic_points, compare_grids, direct_conic_sample, mc_oracle_grid
from .subspace import tangent_whitening
from .synth import ellipse_points, three_view_scene

logger = logging.getLogger(__name__)

ENV_PREFIX = "DUALDIST_"
EXIT_OK, EXIT_UNEXPECTED, EXIT_PARSE, EXIT_DEGENERATE, EXIT_EMPTY = 0, 1, 2, 3, 4
DEFAULT_LAMBDA = 1e-8
NOVEL_POINT = (0.5, 0.3, 9.0)  # held-out world point of the synthetic three-view scene


class UsageError(InputParseError):
    pass


def _env(name, default):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _parse_levels(text) -> tuple[float, ...]:
    try:
        levels = tuple(float(v) for v in str(text).split(","))
    except ValueError as exc:
        raise UsageError(f"invalid --levels: {text}") from exc
    if not levels or any(not 0 < v < 1 for v in levels) or any(a <= b for a, b in zip(levels, levels[1:])):
        raise UsageError("levels must be strictly decreasing in (0, 1)")
    return levels


def _parse_grid(text) -> GridSpec | None:
    if text in (None, ""):
        return None
    try:
        return GridSpec.parse(str(text))
    except ValueError as exc:
        raise UsageError(f"invalid --grid: {exc}") from exc


def _parse_pair(text, name) -> np.ndarray:
    try:
        v = np.array([float(p) for p in str(text).split(",")])
    except ValueError as exc:
        raise UsageError(f"invalid --{name}: {text}") from exc
    if v.shape != (2,):
        raise UsageError(f"--{name} needs 'x,y'")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=_env("seed", 0))
    p.add_argument("--rel-tol", type=float, default=_env("rel_tol", None))
    p.add_argument("--lambda", dest="lambda_reg", type=float, default=_env("lambda", DEFAULT_LAMBDA))
    p.add_argument("--grid", default=_env("grid", None), help="xmin,xmax,ymin,ymax,nx,ny")
    p.add_argument("--levels", default=_env("levels", ",".join(str(v) for v in DEFAULT_LEVELS)))
    p.add_argument("--threads", type=int, default=_env("threads", 1))
    p.add_argument("--out", default=_env("out", None))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dualdist", description="Dual distributions of multilinear geometric models.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("fit-conic", help="ML conic and covariance from a points CSV")
    p.add_argument("points", help="CSV with header 'x,y' ('-' for stdin)")
    p.add_argument("--sigma", type=float, default=_env("sigma", None))
    _common(p)

    p = sub.add_parser("dual-grid", help="conic point density grid and contours")
    p.add_argument("model")
    p.add_argument("--contours", default=_env("contours", None))
    _common(p)

    p = sub.add_parser("fit-trifocal", help="trifocal tensor and covariance from a correspondence CSV")
    p.add_argument("corrs", help="CSV with header 'x1,y1,x2,y2,x3,y3' ('-' for stdin)")
    p.add_argument("--sigma", type=float, default=_env("sigma", None))
    _common(p)

    p = sub.add_parser("transfer", help="probabilistic point transfer into view 1")
    p.add_argument("model")
    p.add_argument("--m2", required=_env("m2", None) is None, default=_env("m2", None))
    p.add_argument("--m3", required=_env("m3", None) is None, default=_env("m3", None))
    p.add_argument("--contours", default=_env("contours", None))
    _common(p)

    p = sub.add_parser("sample", help="draw image points from a model's point density")
    p.add_argument("model")
    p.add_argument("--mode", choices=("mh", "direct"), default=_env("mode", "mh"))
    p.add_argument("--n", type=int, default=_env("n", 10000))
    p.add_argument("--x0", default=_env("x0", None), help="MH start 'x,y'")
    p.add_argument("--m2", default=_env("m2", None))
    p.add_argument("--m3", default=_env("m3", None))
    _common(p)

    p = sub.add_parser("verify-mc", help="compare the analytic conic grid with the Monte-Carlo oracle")
    p.add_argument("model")
    p.add_argument("--n", type=int, default=_env("n", 1_000_000))
    p.add_argument("--min-count", type=int, default=_env("min_count", 500))
    p.add_argument("--tolerance", type=float, default=_env("tolerance", 0.1))
    _common(p)

    p = sub.add_parser("synth", help=argparse.SUPPRESS)
    p.add_argument("kind", choices=("conic", "trifocal"))
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--arc", default="0,6.283185307179586", help="conic parameter range 'start,stop'")
    p.add_argument("--truth", default=None, help="write ground truth JSON here")
    _common(p)
    return ap


def _require_out(args) -> str:
    if not args.out:
        raise UsageError("--out is required")
    return args.out


def _contours_path(args) -> str | None:
    if args.contours:
        return args.contours
    if args.out and args.out != "-":
        return str(Path(args.out).with_suffix("")) + ".contours.json"
    return None


def _frame(model, args):
    return tangent_whitening(model.gaussian(), lambda_reg=args.lambda_reg, rel_tol=args.rel_tol)


def _write_grid_and_contours(args, grid, levels):
    fio.write_grid(_require_out(args), grid)
    contours = extract_contours(grid, levels)
    path = _contours_path(args)
    if path:
        fio.write_contours(path, contours)
    rep = nesting_report(contours)
    print(f"grid mass {grid.mass():.9f}; contours per level {rep['counts']}; nested_closed={rep['nested_closed']}")
    return contours


def cmd_fit_conic(args) -> int:
    pts = fio.read_points(args.points, 2)
    model = fit_conic_ml(pts, args.sigma)
    fio.write_model(_require_out(args), model)
    res = model.residuals(pts)
    print(f"conic fit: n={len(pts)} sigma={model.sigma:.6g} rms_sampson={np.sqrt(np.mean(res**2)):.6g}")
    return EXIT_OK


def _load(path, kind):
    model = fio.read_model(path)
    if not isinstance(model, kind):
        raise UsageError(f"{path} does not hold a {kind.__name__}")
    return model


def cmd_dual_grid(args) -> int:
    model = _load(args.model, ConicModel)
    spec = _parse_grid(args.grid)
    if spec is None:
        raise UsageError("--grid is required")
    levels = _parse_levels(args.levels)
    grid = evaluate_grid(conic_dual_chart(model, _frame(model, args)), spec, threads=args.threads)
    _write_grid_and_contours(args, grid, levels)
    return EXIT_OK


def cmd_fit_trifocal(args) -> int:
    corrs = fio.read_points(args.corrs, 6)
    model = fit_trifocal(corrs, args.sigma)
    fio.write_model(_require_out(args), model)
    print(f"trifocal fit: n={len(corrs)} sigma={model.sigma:.6g}")
    return EXIT_OK


def cmd_transfer(args) -> int:
    model = _load(args.model, TrifocalModel)
    m2, m3 = _parse_pair(args.m2, "m2"), _parse_pair(args.m3, "m3")
    levels = _parse_levels(args.levels)
    base = deterministic_transfer(model, m2, m3)
    print(f"baseline transfer {float(base[0])!r} {float(base[1])!r}")
    spec = _parse_grid(args.grid)
    if spec is None:
        h = 2.5
        spec = GridSpec(base[0] - h, base[0] + h, base[1] - h, base[1] + h, 50, 50)
    chart = transfer_density_chart(model, _frame(model, args), m2, m3)
    grid = evaluate_grid(chart, spec, threads=args.threads)
    _write_grid_and_contours(args, grid, levels)
    return EXIT_OK


def _conic_start(model: ConicModel, seed) -> np.ndarray:
    # a point just off the ML conic; on it the chart radius is infinite
    rng = np.random.default_rng(seed)
    p = _degenerate_conic_points(model.theta, 1, rng)[0]
    return p + 1e-3 * max(1.0, float(np.max(np.abs(p))))


def cmd_sample(args) -> int:
    model = fio.read_model(args.model)
    out = _require_out(args)
    if args.mode == "direct":
        if not isinstance(model, ConicModel):
            raise UsageError("direct sampling needs a conic model")
        pts = direct_conic_sample(model.gaussian(), args.n, seed=args.seed)
    else:
        if isinstance(model, ConicModel):
            chart = conic_dual_chart(model, _frame(model, args))
            x0 = _parse_pair(args.x0, "x0") if args.x0 else _conic_start(model, args.seed)
        else:
            if args.m2 is None or args.m3 is None:
                raise UsageError("MH transfer sampling needs --m2 and --m3")
            m2, m3 = _parse_pair(args.m2, "m2"), _parse_pair(args.m3, "m3")
            chart = transfer_density_chart(model, _frame(model, args), m2, m3)
            x0 = _parse_pair(args.x0, "x0") if args.x0 else deterministic_transfer(model, m2, m3)
        pts = mh_sample(chart, x0, args.n, seed=args.seed)
    fio.write_points(out, pts)
    print(f"wrote {len(pts)} samples")
    return EXIT_OK


def cmd_verify_mc(args) -> int:
    model = _load(args.model, ConicModel)
    spec = _parse_grid(args.grid)
    if spec is None:
        raise UsageError("--grid is required")
    analytic = evaluate_grid(conic_dual_chart(model, _frame(model, args)), spec, threads=args.threads)
    oracle = mc_oracle_grid(model.gaussian(), "conic", spec, n=args.n, seed=args.seed)
    report = compare_grids(analytic, oracle, args.min_count, args.tolerance)
    report["n_samples"] = int(args.n)
    fio.write_json(_require_out(args), report)
    print(
        f"verify-mc: {report['cells']} cells, mean relative deviation "
        f"{report['mean_relative_deviation']:.4f} -> {report['verdict']}"
    )
    return EXIT_OK


def cmd_synth(args) -> int:
    out = _require_out(args)
    if args.kind == "conic":
        arc = _parse_pair(args.arc, "arc")
        n = 25 if args.n is None else args.n
        sigma = 0.05 if args.sigma is None else args.sigma
        noisy, _, theta = ellipse_points(n, sigma, seed=args.seed, arc=tuple(arc))
        fio.write_points(out, noisy)
        truth = {"theta": theta.tolist(), "sigma": sigma}
    else:
        n = 50 if args.n is None else args.n
        sigma = 1.0 if args.sigma is None else args.sigma
        scene = three_view_scene(n, sigma, seed=args.seed)
        fio.write_points(out, scene.correspondences(), fio.TRIFOCAL_HEADER)
        m1, m2, m3 = (x[0] for x in scene.project(np.array([NOVEL_POINT])))
        truth = {
            "tensor": scene.tensor.ravel().tolist(),
            "sigma": sigma,
            "novel_point": {"m1": m1.tolist(), "m2": m2.tolist(), "m3": m3.tolist()},
        }
    if args.truth:
        fio.write_json(args.truth, truth)
    return EXIT_OK


COMMANDS = {
    "fit-conic": cmd_fit_conic,
    "dual-grid": cmd_dual_grid,
    "fit-trifocal": cmd_fit_trifocal,
    "transfer": cmd_transfer,
    "sample": cmd_sample,
    "verify-mc": cmd_verify_mc,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InputParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except EmptyGridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except DualDistError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except Exception as exc:  # noqa: BLE001
        logger.debug("unexpected failure", exc_info=True)
        print(f"error: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
