import numpy as np
import pytest
from scipy import stats

from dualdist.conditional import (
    DensityGrid,
    FeatureMap,
    GridSpec,
    conditional_density,
    conditional_log_density,
    evaluate_grid,
    identity_map,
    mh_chain,
    mh_sample,
    numerical_jacobian,
    split_rhat,
)
from dualdist.dual_single import dual_density_s
from dualdist.errors import EmptyGridError, EvaluationError, InvalidStartError


def gauss_logpdf(x):
    x = np.asarray(x, dtype=float)
    return float(-0.5 * x @ x - 0.5 * x.size * np.log(2 * np.pi))


# --- Jacobian ---------------------------------------------------------------


def test_jacobian_of_smooth_map():
    f = lambda x: np.array([np.sin(x[0]) * x[1], x[0] ** 2, np.exp(x[1])])
    x = np.array([0.3, -1.2])
    J = np.array([[np.cos(0.3) * -1.2, np.sin(0.3)], [0.6, 0.0], [0.0, np.exp(-1.2)]])
    np.testing.assert_allclose(numerical_jacobian(f, x), J, atol=1e-9)


def test_jacobian_wraps_periodic_outputs():
    # the angle output wraps from 2 pi - small to small across the stencil
    f = FeatureMap(lambda x: np.array([np.mod(x[0], 2 * np.pi)]), 1, gauss_logpdf, periods=[2 * np.pi])
    np.testing.assert_allclose(numerical_jacobian(f, np.array([2 * np.pi - 1e-7])), [[1.0]], rtol=1e-6)


def test_jacobian_one_sided_at_seam():
    # a pi jump exactly at 0 (not a wrap) leaves the smooth side
    f = lambda x: np.array([2.0 * x[0] + (np.pi if x[0] > 0 else 0.0)])
    np.testing.assert_allclose(numerical_jacobian(f, np.array([1e-9])), [[2.0]], rtol=1e-6)


def test_jacobian_one_sided_at_domain_edge():
    from dualdist.errors import DualDistError

    def f(x):
        if x[0] < 1.0:
            raise DualDistError("outside")
        return np.array([x[0] ** 2])

    np.testing.assert_allclose(numerical_jacobian(f, np.array([1.0])), [[2.0]], rtol=1e-5)
    with pytest.raises(EvaluationError):
        numerical_jacobian(f, np.array([0.5]))


# --- conditional density ----------------------------------------------------


def test_identity_chart_is_dual_density(rng):
    f = identity_map(gauss_logpdf, 3)
    for x in rng.standard_normal((20, 3)):
        assert conditional_density(f, x) == pytest.approx(np.exp(gauss_logpdf(x)), rel=1e-12)


def _embedding(x):
    # a smooth 2-D surface inside the (s, phi_1, phi_2) space of M = 4
    return np.array([x[0], 0.8 + 0.1 * np.sin(x[1]), 1.0 + x[1] + 0.2 * x[0] * x[1]])


def _log_dual4(p):
    return np.log(dual_density_s(p[0], p[1:], 4))


def test_chart_invariance(rng):
    f_x = FeatureMap(_embedding, 2, _log_dual4)
    # u = (log r, a) polar reparameterisation of the x chart
    h = lambda u: np.array([np.exp(u[0]) * np.cos(u[1]), np.exp(u[0]) * np.sin(u[1])])
    f_u = FeatureMap(lambda u: _embedding(h(u)), 2, _log_dual4)
    for u in rng.uniform([-1.0, 0.2], [0.5, 1.3], size=(30, 2)):
        det = np.exp(2 * u[0])  # |dh/du|
        pushed = conditional_density(f_u, u) / det
        assert pushed == pytest.approx(conditional_density(f_x, h(u)), rel=1e-6)


def test_degenerate_point_flag():
    f = FeatureMap(lambda x: np.array([x[0] ** 2, 0.0]), 1, gauss_logpdf)
    cv = conditional_log_density(f, np.array([0.0]))
    assert cv.degenerate and cv.value == 0.0
    assert not conditional_log_density(f, np.array([1.0])).degenerate


# --- grids --------------------------------------------------------------------


def test_grid_spec_parse_and_indexing():
    spec = GridSpec.parse("-1,1,0,2,4,2")
    assert (spec.dx, spec.dy, spec.cell_area) == (0.5, 1.0, 0.5)
    np.testing.assert_allclose(spec.centers()[0], [-0.75, -0.25, 0.25, 0.75])
    i, j, inside = spec.cell_index(np.array([[-0.9, 0.1], [0.99, 1.99], [1.5, 0.5]]))
    assert list(inside) == [True, True, False]
    assert (i[1], j[1]) == (3, 1)
    for bad in ("0,1,0,1,4", "1,0,0,1,4,4", "0,1,0,1,1,4"):
        with pytest.raises(ValueError):
            GridSpec.parse(bad)


def test_grid_normalisation_and_threads():
    f = identity_map(gauss_logpdf, 2)
    spec = GridSpec(-4, 4, -4, 4, 40, 30)
    g1 = evaluate_grid(f, spec)
    g3 = evaluate_grid(f, spec, threads=3)
    assert g1.mass() == pytest.approx(1.0, abs=1e-12)
    assert g1.norm_const == pytest.approx(1.0, abs=1e-3)
    np.testing.assert_array_equal(g1.values, g3.values)
    np.testing.assert_allclose(g1.argmax_point(), [-0.1, -0.1333333333], atol=1e-9)


def test_empty_grid():
    g = DensityGrid(GridSpec(0, 1, 0, 1, 2, 2), np.zeros((2, 2)))
    with pytest.raises(EmptyGridError):
        g.normalize()


# --- Metropolis-Hastings --------------------------------------------------


def _batch_se(x, nb=50):
    means = x[: len(x) // nb * nb].reshape(nb, -1, *x.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(nb)


def test_mh_gaussian_target():
    chain = mh_chain(gauss_logpdf, np.zeros(2), 100_000, seed=5)
    x = chain.samples
    assert 0.15 < chain.acceptance < 0.5
    assert np.all(np.abs(x.mean(axis=0)) < 3 * _batch_se(x))
    se_var = _batch_se((x - x.mean(axis=0)) ** 2)
    assert np.all(np.abs(x.var(axis=0) - 1.0) < 3 * se_var)
    c01 = (x[:, 0] - x[:, 0].mean()) * (x[:, 1] - x[:, 1].mean())
    assert abs(c01.mean()) < 3 * _batch_se(c01)


def test_mh_deterministic():
    a = mh_sample(gauss_logpdf, np.ones(3), 2000, seed=9)
    b = mh_sample(gauss_logpdf, np.ones(3), 2000, seed=9)
    c = mh_sample(gauss_logpdf, np.ones(3), 2000, seed=10)
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != c.tobytes()


def test_mh_feature_map_target():
    x = mh_sample(identity_map(gauss_logpdf, 1), [0.0], 20_000, seed=2)
    assert stats.kstest(x[::10, 0], "norm").pvalue > 1e-3


def test_mh_invalid_start():
    logp = lambda x: 0.0 if np.all(x > 0) else -np.inf
    with pytest.raises(InvalidStartError):
        mh_chain(logp, [-1.0], 10, seed=0)


def test_split_rhat(rng):
    iid = rng.standard_normal((4, 2000, 2))
    assert np.all(split_rhat(iid) < 1.01)
    shifted = iid + np.arange(4)[:, None, None]
    assert np.all(split_rhat(shifted) > 1.5)
    chains = [mh_sample(gauss_logpdf, [2.0], 5000, seed=s) for s in range(4)]
    assert split_rhat(chains)[0] < 1.05
