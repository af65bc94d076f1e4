"""Standardised estimation errors for checking covariance calibration."""

from __future__ import annotations

import numpy as np
from scipy import stats

from .models.conic import fit_conic_ml
from .models.trifocal import fit_trifocal
from .subspace import pseudoinverse
from .synth import ellipse_points, three_view_scene

CONIC_DOF = 5
TRIFOCAL_DOF = 18


def standardized_error(theta_hat, cov, theta_true, rank: int | None = None) -> float:
    """Squared Mahalanobis distance of the truth from the estimate in the tangent metric.

    The truth is sign-aligned with the estimate and projected onto the
    tangent plane at ``theta_hat`` before the distance is taken.
    """
    th = np.asarray(theta_hat, dtype=float)
    tt = np.asarray(theta_true, dtype=float).ravel()
    tt = tt / np.linalg.norm(tt)
    if th @ tt < 0:
        tt = -tt
    e = tt - (th @ tt) * th
    return float(e @ pseudoinverse(cov, rank=rank) @ e)


def chi2_calibration(d2, dof: int, alpha: float = 0.05) -> dict:
    """Kolmogorov-Smirnov test of squared distances against chi-square(``dof``)."""
    d2 = np.asarray(d2, dtype=float)
    res = stats.kstest(d2, stats.chi2(dof).cdf)
    return {
        "n": int(d2.size),
        "dof": int(dof),
        "mean": float(d2.mean()),
        "ks_statistic": float(res.statistic),
        "p_value": float(res.pvalue),
        "consistent": bool(res.pvalue >= alpha),
    }


def conic_study(n_trials: int = 200, n_points: int = 25, sigma: float = 0.05, seed: int = 1000) -> np.ndarray:
    """Squared standardised errors of ML conics, one fresh ellipse per trial."""
    d2 = np.empty(n_trials)
    for k in range(n_trials):
        noisy, _, theta = ellipse_points(n_points, sigma, seed=seed + k)
        model = fit_conic_ml(noisy, sigma)
        d2[k] = standardized_error(model.theta, model.cov, theta, rank=CONIC_DOF)
    return d2


def trifocal_study(n_trials: int = 200, n_points: int = 50, sigma: float = 1.0, scene_seed: int = 0, noise_seed: int = 7) -> np.ndarray:
    """Squared standardised errors of trifocal fits on one scene with fresh pixel noise."""
    scene = three_view_scene(n_points, sigma, seed=scene_seed)
    clean = scene.correspondences(noisy=False)
    rng = np.random.default_rng(noise_seed)
    d2 = np.empty(n_trials)
    for k in range(n_trials):
        model = fit_trifocal(clean + sigma * rng.standard_normal(clean.shape), sigma)
        truth = model.to_normalized(scene.tensor).ravel()
        d2[k] = standardized_error(model.theta, model.cov, truth, rank=TRIFOCAL_DOF)
    return d2
