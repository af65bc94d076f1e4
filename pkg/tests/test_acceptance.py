"""Acceptance criteria, one test each.

Every test records a pass/fail line through ``acceptance_log``; the lines are
repeated in the terminal summary.  Runtime limits are part of the criteria and
are checked alongside the numerical tolerances.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from conftest import column_uniform_subspaces
from dualdist.calibration import CONIC_DOF, TRIFOCAL_DOF, chi2_calibration, conic_study, trifocal_study
from dualdist.cli import EXIT_OK
from dualdist.conditional import GridSpec, conditional_density, evaluate_grid
from dualdist.contours import extract_contours, nesting_report
from dualdist.dual_multi import log_dual_density_multi, log_dual_density_vector
from dualdist.dual_single import direction_density, dual_density_s, dual_density_single, hyperplane_params
from dualdist.models.conic import conic_dual_chart, fit_conic_ml
from dualdist.models.trifocal import deterministic_transfer, fit_trifocal, transfer_density_chart, transfer_frame
from dualdist.models.trilinear import ppp_columns
from dualdist.oracle import compare_grids, mc_oracle_grid
from dualdist.sphcoords import cartesian_from_sph, sph_from_cartesian_batch, volume_element
from dualdist.subspace import GaussianParam, kernel_geometry, params_vector_batch, subspace_params, tangent_whitening, triangular_factor
from dualdist.synth import ellipse_points, three_view_scene

pytestmark = pytest.mark.acceptance

NOVEL_POINT = np.array([[0.5, 0.3, 9.0]])


def _gl(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _product_rule(bounds, n):
    """Tensor Gauss-Legendre nodes ``(m, d)`` and weights over a box."""
    nodes, weights = zip(*(_gl(a, b, n) for a, b in bounds))
    X = np.stack(np.meshgrid(*nodes, indexing="ij"), axis=-1).reshape(-1, len(bounds))
    W = np.ones(1)
    for w in weights:
        W = np.multiply.outer(W, w).ravel()
    return X, W


def _direction_box(d):
    """Half-sphere angle ranges of a unit vector in R^d."""
    if d == 2:
        return [(-np.pi / 2, np.pi / 2)]
    return [(0.0, np.pi / 2)] + [(0.0, np.pi)] * (d - 3) + [(0.0, 2 * np.pi)]


def _within_3se(observed, expected_p, n):
    se = np.sqrt(n * expected_p * (1 - expected_p))
    ok = np.abs(observed - n * expected_p) <= 3 * se
    return float(ok.mean())


# 1 -------------------------------------------------------------------------


def test_c01_coordinate_round_trip(rng, acceptance_log):
    X = {N: rng.standard_normal((1000, N)) for N in range(3, 10)}
    t0 = time.perf_counter()
    worst = 0.0
    for N, x in X.items():
        rho, phi = sph_from_cartesian_batch(x)
        back = cartesian_from_sph(rho, phi)
        err = np.linalg.norm(back - x, axis=1) / np.linalg.norm(x, axis=1)
        worst = max(worst, float(err.max()))
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and dt < 1.0
    assert acceptance_log(1, "coordinate round trip", ok, f"max rel err {worst:.2e}, {dt:.3f} s")


# 2 -------------------------------------------------------------------------


def _fd_jacobian_det(rho, phi, h=1e-6):
    z = np.append(rho, phi)
    n = z.size
    J = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h * max(1.0, abs(z[i]))
        fp = cartesian_from_sph(z[0] + e[0], z[1:] + e[1:])
        fm = cartesian_from_sph(z[0] - e[0], z[1:] - e[1:])
        J[:, i] = (fp - fm) / (2 * e[i])
    return abs(np.linalg.det(J))


def test_c02_volume_element(rng, acceptance_log):
    t0 = time.perf_counter()
    worst = 0.0
    for N in range(3, 7):
        for _ in range(100):
            rho = rng.choice([-1, 1]) * rng.uniform(0.5, 2.0)
            box = _direction_box(N)
            phi = np.array([rng.uniform(a + 0.05, b - 0.05) for a, b in box])
            ref = _fd_jacobian_det(rho, phi)
            worst = max(worst, abs(volume_element(rho, phi) - ref) / ref)
    dt = time.perf_counter() - t0
    ok = worst < 1e-5 and dt < 5.0
    assert acceptance_log(2, "volume element vs FD Jacobian", ok, f"max rel err {worst:.2e}, {dt:.2f} s")


# 3 -------------------------------------------------------------------------


def test_c03_triangular_factor(rng, acceptance_log):
    t0 = time.perf_counter()
    err_fact = err_unique = 0.0
    exact = True
    for _ in range(200):
        n = int(rng.integers(3, 10))
        K = int(rng.integers(1, n))
        Q = np.linalg.qr(rng.standard_normal((n, K)))[0]
        P = Q @ Q.T
        L = triangular_factor(P, K).L_mat
        err_fact = max(err_fact, float(np.linalg.norm(L @ L.T - P)))
        # same subspace through a non-orthonormal spanning set
        B = Q @ rng.standard_normal((K, K))
        P2 = B @ np.linalg.solve(B.T @ B, B.T)
        L2 = triangular_factor(0.5 * (P2 + P2.T), K).L_mat
        err_unique = max(err_unique, float(np.abs(L2 - L).max()))
        exact &= bool(np.all(L[np.triu_indices(K, 1)] == 0) and np.all(np.diag(L) > 0))
        exact &= bool(np.allclose(L.T @ L, np.eye(K), atol=1e-12))
    dt = time.perf_counter() - t0
    ok = err_fact < 1e-9 and err_unique < 1e-9 and exact and dt < 10.0
    detail = f"|LL^T-P| {err_fact:.1e}, re-based {err_unique:.1e}, structure exact={exact}, {dt:.2f} s"
    assert acceptance_log(3, "triangular projector factor", ok, detail)


# 4 -------------------------------------------------------------------------


def _total_mass(M):
    # rho = tan(t) maps the real line onto (-pi/2, pi/2); split at rho = 0
    t, wt = zip(_gl(-np.pi / 2, 0.0, 200), _gl(0.0, np.pi / 2, 200))
    t, wt = np.concatenate(t), np.concatenate(wt)
    rho = np.tan(t)
    wrho = wt / np.cos(t) ** 2
    phi, wphi = _product_rule(_direction_box(M - 1), 24)
    p = dual_density_single(rho[:, None], phi[None, :, :], M)
    return float(wrho @ p @ wphi)


def test_c04_single_normalisation(rng, acceptance_log):
    t0 = time.perf_counter()
    masses = {M: _total_mass(M) for M in (3, 4, 5)}
    worst_id = 0.0
    for M in (3, 4, 5):
        for _ in range(200):
            rho = rng.choice([-1, 1]) * np.exp(rng.uniform(-2, 3))
            phi = np.array([rng.uniform(a, b) for a, b in _direction_box(M - 1)])
            joint = dual_density_single(rho, phi, M)
            cond = stats.norm.pdf(1 / rho) / rho**2
            worst_id = max(worst_id, abs(joint - cond * direction_density(phi, M)) / joint)
    dt = time.perf_counter() - t0
    ok = all(abs(m - 1) < 1e-3 for m in masses.values()) and worst_id < 1e-12 and dt < 30.0
    detail = ", ".join(f"M={M}: {m:.6f}" for M, m in masses.items()) + f"; factorisation {worst_id:.1e}; {dt:.2f} s"
    assert acceptance_log(4, "single-constraint normalisation", ok, detail)


# 5 -------------------------------------------------------------------------


def test_c05_single_constraint_mc(acceptance_log):
    rng = np.random.default_rng(5)
    n = 1_000_000
    t0 = time.perf_counter()
    theta0 = np.array([0.3, -0.4, 0.8])
    theta0 /= np.linalg.norm(theta0)
    B = np.linalg.qr(np.column_stack([theta0, rng.standard_normal((3, 2))]))[0][:, 1:]
    A = B @ np.array([[0.02, 0.0], [0.01, 0.005]])
    g = GaussianParam(theta0, A @ A.T)
    frame = tangent_whitening(g)
    # whitened parameter samples, each paired with a uniformly drawn normal
    t = frame.reduce_theta(g.sample(n, rng))
    a = rng.uniform(-np.pi / 2, np.pi / 2, n)
    normals = np.column_stack([np.cos(a), np.sin(a)])
    Y = np.column_stack([normals, -np.sum(normals * t[:, :2], axis=1) / t[:, 2]])
    sp = np.array([(h.s, h.phi[0]) for h in map(hyperplane_params, Y)])
    s_edges = np.linspace(-3, 3, 21)
    p_edges = np.linspace(-np.pi / 2, np.pi / 2, 21)
    H = np.histogram2d(sp[:, 0], sp[:, 1], [s_edges, p_edges])[0]
    expected = np.empty((20, 20))
    for i in range(20):
        for j in range(20):
            X, W = _product_rule([(s_edges[i], s_edges[i + 1]), (p_edges[j], p_edges[j + 1])], 8)
            expected[i, j] = W @ dual_density_s(X[:, 0], X[:, 1:], 3)
    frac = _within_3se(H, expected, n)
    dt = time.perf_counter() - t0
    ok = frac >= 0.95 and dt < 60.0
    assert acceptance_log(5, "single-constraint MC (M=3)", ok, f"{frac:.1%} of 400 bins within 3 SE, {dt:.1f} s")


# 6 -------------------------------------------------------------------------


def test_c06_multi_constraint_mc(acceptance_log):
    rng = np.random.default_rng(6)
    n = 1_000_000
    M, K = 5, 2
    t0 = time.perf_counter()
    V = np.concatenate([params_vector_batch(*column_uniform_subspaces(rng, n // 4, M, K), K, M) for _ in range(4)])
    s = V[:, :2]
    mu = np.abs(s.mean(axis=0)).max()
    var = np.abs(s.var(axis=0) - 1).max()

    # coarse 6-D histogram: 3 bins per coordinate
    boxes = [(-3.0, 3.0)] * 2 + _direction_box(4) + _direction_box(2)
    edges = [np.linspace(a, b, 4) for a, b in boxes]
    H = np.histogramdd(V, bins=edges)[0]
    expected = np.empty(H.shape)
    for idx in np.ndindex(H.shape):
        X, W = _product_rule([(e[i], e[i + 1]) for e, i in zip(edges, idx)], 5)
        expected[idx] = W @ np.exp(log_dual_density_vector(X, M, K))
    frac = _within_3se(H, expected, n)

    # a single constraint reproduces the single-constraint density
    worst = 0.0
    for Mi in (3, 5, 6, 7):
        for _ in range(50):
            y = rng.standard_normal(Mi)
            h = hyperplane_params(y)
            multi = log_dual_density_multi(subspace_params(y[:, None]))
            worst = max(worst, abs(multi - np.log(dual_density_s(h.s, h.phi, Mi))))
    dt = time.perf_counter() - t0
    ok = mu < 0.01 and var < 0.02 and frac >= 0.95 and worst < 1e-10 and dt < 90.0
    detail = f"|mu| {mu:.4f}, |var-1| {var:.4f}, {frac:.1%} of {H.size} bins within 3 SE, degeneration {worst:.1e}, {dt:.1f} s"
    assert acceptance_log(6, "multi-constraint MC (M=5, K=2)", ok, detail)


# 7 -------------------------------------------------------------------------


def test_c07_conic_pipeline(acceptance_log):
    t0 = time.perf_counter()
    noisy, _, _ = ellipse_points(25, 0.05, seed=11)
    model = fit_conic_ml(noisy, 0.05)
    spec = GridSpec(-3, 3, -2, 2, 60, 40)
    analytic = evaluate_grid(conic_dual_chart(model), spec)
    oracle = mc_oracle_grid(model.gaussian(), "conic", spec, n=1_000_000, seed=0)
    report = compare_grids(analytic, oracle, min_count=500, tol=0.1)
    topo = nesting_report(extract_contours(analytic, (1e-1, 1e-2, 1e-3)))
    dt = time.perf_counter() - t0
    ok = report["verdict"] == "pass" and topo["nested_closed"] and dt < 120.0
    detail = (
        f"mean rel dev {report['mean_relative_deviation']:.3f} over {report['cells']} cells, "
        f"contours nested_closed={topo['nested_closed']}, {dt:.0f} s"
    )
    assert acceptance_log(7, "conic pipeline vs MC oracle", ok, detail)


# 8 -------------------------------------------------------------------------


def test_c08_trifocal_pipeline(acceptance_log):
    t0 = time.perf_counter()
    scene = three_view_scene(50, 1.0, seed=0)
    model = fit_trifocal(scene.correspondences(), 1.0)
    m1, m2, m3 = (x[0] for x in scene.project(NOVEL_POINT))
    base = deterministic_transfer(model, m2, m3)

    frame = transfer_frame(model)
    x1 = model.transforms[0] @ np.append(base, 1.0)
    Yr = frame.reduce(ppp_columns(x1, model.normalize(1, m2), model.normalize(2, m3)))
    K = kernel_geometry(Yr, rel_tol=1e-10).K

    chart = transfer_density_chart(model, frame, m2, m3)
    h = 2.5
    spec = GridSpec(base[0] - h, base[0] + h, base[1] - h, base[1] + h, 50, 50)
    grid = evaluate_grid(chart, spec, normalize=False)
    xs, ys = spec.centers()
    i, j = np.unravel_index(np.argmax(grid.values), grid.values.shape)
    mode_err = float(np.hypot(xs[i] - m1[0], ys[j] - m1[1]))
    ratio = conditional_density(chart, base) / grid.values.max()
    topo = nesting_report(extract_contours(grid, (1e-1, 1e-2, 1e-3)))
    dt = time.perf_counter() - t0
    ok = K == frame.M - 1 - 4 and mode_err < 3.0 and ratio >= 0.1 and topo["nested_closed"] and dt < 180.0
    detail = (
        f"M={frame.M} K={K}, mode {mode_err:.2f} px from truth, "
        f"transfer density {ratio:.2f} x max, nested_closed={topo['nested_closed']}, {dt:.0f} s"
    )
    assert acceptance_log(8, "trifocal transfer pipeline", ok, detail)


# 9 -------------------------------------------------------------------------


def test_c09_covariance_calibration(acceptance_log):
    conic = chi2_calibration(conic_study(200), CONIC_DOF)
    tri = chi2_calibration(trifocal_study(200), TRIFOCAL_DOF)
    ok = conic["consistent"] and tri["consistent"]
    detail = (
        f"conic KS p={conic['p_value']:.3f} mean {conic['mean']:.2f} (dof {CONIC_DOF}); "
        f"trifocal KS p={tri['p_value']:.3f} mean {tri['mean']:.2f} (dof {TRIFOCAL_DOF})"
    )
    assert acceptance_log(9, "covariance calibration", ok, detail)


# 10 ------------------------------------------------------------------------


def _run_all_commands(d):
    """Run every CLI command once, each in a fresh process inside ``d``; returns their stdout."""
    p = str
    runs = [
        ["synth", "conic", "--seed", "11", "--out", p("ellipse.csv"), "--truth", p("ellipse_truth.json")],
        ["synth", "trifocal", "--seed", "0", "--out", p("corrs.csv"), "--truth", p("truth.json")],
        ["fit-conic", p("ellipse.csv"), "--out", p("conic.json")],
        ["fit-trifocal", p("corrs.csv"), "--out", p("tri.json")],
        ["dual-grid", p("conic.json"), "--grid=-3,3,-2,2,30,20", "--out", p("grid.csv")],
        ["sample", p("conic.json"), "--n", "500", "--seed", "3", "--out", p("mh.csv")],
        ["sample", p("conic.json"), "--mode", "direct", "--n", "500", "--seed", "3", "--out", p("direct.csv")],
        ["verify-mc", p("conic.json"), "--n", "2000", "--min-count", "10", "--grid=-3,3,-2,2,30,20", "--out", p("report.json")],
    ]
    truth_runs = [
        ["transfer", p("tri.json"), "--m2", "M2", "--m3", "M3", "--grid", "GRID", "--out", p("transfer.csv")],
        ["sample", p("tri.json"), "--m2", "M2", "--m3", "M3", "--n", "200", "--seed", "4", "--out", p("tri_mh.csv")],
    ]
    out = []
    for argv in runs + truth_runs:
        if "M2" in argv:
            truth = json.loads((d / "truth.json").read_text())["novel_point"]
            x, y = truth["m1"]
            sub = {
                "M2": ",".join(repr(v) for v in truth["m2"]),
                "M3": ",".join(repr(v) for v in truth["m3"]),
                "GRID": f"{x - 2.5},{x + 2.5},{y - 2.5},{y + 2.5},12,12",
            }
            argv = [sub.get(a, a) for a in argv]
        res = subprocess.run([sys.executable, "-m", "dualdist", *argv], cwd=d, capture_output=True, text=True)
        assert res.returncode == EXIT_OK, (argv, res.stderr)
        out.append(res.stdout)
    return out


def test_c10_cli_determinism(tmp_path, acceptance_log):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    out_a = _run_all_commands(a)
    out_b = _run_all_commands(b)
    files = sorted(f.name for f in a.iterdir())
    differing = [f for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    same_stdout = out_a == out_b
    ok = not differing and same_stdout and files == sorted(f.name for f in b.iterdir())
    detail = f"{len(files)} output files, differing {differing or 'none'}, stdout identical={same_stdout}"
    assert acceptance_log(10, "CLI determinism", ok, detail)
