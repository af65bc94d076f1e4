"""Point density of an ML ellipse fit, printed as a coarse character map.

Run with ``python demos/conic_point_density.py [outdir]``; with an output
directory the grid and contours are also written in the CLI file formats.
"""

import sys
from pathlib import Path

import numpy as np

from dualdist import io as fio
from dualdist.conditional import GridSpec, evaluate_grid
from dualdist.contours import extract_contours, nesting_report
from dualdist.models.conic import conic_dual_chart, fit_conic_ml
from dualdist.synth import ellipse_points

SHADES = " .:-=+*#%@"


def main(outdir=None):
    noisy, _, truth = ellipse_points(25, 0.05, seed=11)
    model = fit_conic_ml(noisy, 0.05)
    print("true conic  ", np.round(truth, 4))
    print("fitted conic", np.round(model.theta * np.sign(model.theta @ truth), 4))

    spec = GridSpec(-3, 3, -2, 2, 60, 40)
    grid = evaluate_grid(conic_dual_chart(model), spec)
    contours = extract_contours(grid)
    rep = nesting_report(contours)
    print(f"grid mass {grid.mass():.6f}; polylines per level {rep['counts']}; nested and closed: {rep['nested_closed']}")

    # log-scaled map over three decades, y increasing upwards
    v = np.log10(np.maximum(grid.values / grid.values.max(), 1e-3)) / 3 + 1
    for j in reversed(range(spec.ny)):
        print("".join(SHADES[min(int(x * (len(SHADES) - 1) + 0.5), len(SHADES) - 1)] for x in v[:, j]))

    if outdir:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        fio.write_grid(out / "conic_grid.csv", grid)
        fio.write_contours(out / "conic_contours.json", contours)
        print(f"wrote {out / 'conic_grid.csv'} and {out / 'conic_contours.json'}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)
