import numpy as np
import pytest
from scipy import stats

from dualdist.calibration import chi2_calibration, conic_study, standardized_error


def test_standardized_error_sign_invariant():
    theta = np.array([0.0, 0.0, 1.0])
    cov = np.diag([0.04, 0.01, 0.0])
    truth = np.array([0.2, 0.1, 1.0])
    a = standardized_error(theta, cov, truth)
    assert a == pytest.approx(standardized_error(theta, cov, -truth))
    t = truth / np.linalg.norm(truth)
    assert a == pytest.approx(t[0] ** 2 / 0.04 + t[1] ** 2 / 0.01)


def test_standardized_error_zero_at_truth():
    theta = np.array([0.6, 0.8, 0.0])
    assert standardized_error(theta, np.eye(3) - np.outer(theta, theta), 3 * theta) == pytest.approx(0.0)


def test_gaussian_draws_are_calibrated(rng):
    n = 4
    theta = np.eye(n)[-1]
    A = rng.standard_normal((n - 1, n - 1))
    cov = np.zeros((n, n))
    cov[:-1, :-1] = 1e-4 * A @ A.T
    eps = rng.multivariate_normal(np.zeros(n), cov, size=2000)
    d2 = [standardized_error(theta, cov, theta + e, rank=n - 1) for e in eps]
    # curvature of the sphere biases d2 by O(|eps|^2) only
    assert chi2_calibration(d2, n - 1)["consistent"]


def test_chi2_calibration_rejects_wrong_dof(rng):
    d2 = stats.chi2(8).rvs(500, random_state=rng)
    assert chi2_calibration(d2, 8)["consistent"]
    assert not chi2_calibration(d2, 5)["consistent"]


def test_conic_study_small():
    d2 = conic_study(40)
    assert d2.shape == (40,)
    assert np.all(d2 >= 0)
    assert 3.0 < d2.mean() < 7.5


def test_ellipse_within_three_sigma():
    from dualdist.models.conic import fit_conic_ml, tangent_basis
    from dualdist.synth import ellipse_points

    hits = 0
    for k in range(200):
        noisy, _, truth = ellipse_points(25, 0.05, seed=2000 + k)
        m = fit_conic_ml(noisy, 0.05)
        t = truth if truth @ m.theta > 0 else -truth
        B = tangent_basis(m.theta)
        err = B.T @ (t - (m.theta @ t) * m.theta)
        sd = np.sqrt(np.diag(B.T @ m.cov @ B))
        hits += bool(np.all(np.abs(err) <= 3 * sd))
    assert hits >= 190
