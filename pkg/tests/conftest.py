import numpy as np
import pytest

from dualdist.models.conic import fit_conic_ml
from dualdist.models.trifocal import fit_trifocal
from dualdist.subspace import GaussianParam
from dualdist.synth import ellipse_points, three_view_scene


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line[1])


@pytest.fixture
def acceptance_log(request):
    """Record ``(number, ok, detail)`` for the end-of-run acceptance summary."""
    store = request.config.stash[ACCEPTANCE_KEY]

    def record(number: int, name: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        print(line)
        store.append((number, line))
        return ok

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_gaussian(rng, n, rank=None, scale=1e-2):
    """Unit theta0 with a random PSD covariance on its tangent plane."""
    theta = rng.standard_normal(n)
    theta /= np.linalg.norm(theta)
    rank = n - 1 if rank is None else rank
    B = np.linalg.qr(np.column_stack([theta, rng.standard_normal((n, n - 1))]))[0][:, 1:]
    A = B @ rng.standard_normal((n - 1, rank))
    cov = scale * A @ A.T
    return GaussianParam(theta, 0.5 * (cov + cov.T))


@pytest.fixture(scope="session")
def ellipse_data():
    noisy, clean, theta = ellipse_points(25, 0.05, seed=11)
    return noisy, theta


@pytest.fixture(scope="session")
def conic_model(ellipse_data):
    return fit_conic_ml(ellipse_data[0], 0.05)


@pytest.fixture(scope="session")
def half_arc_model():
    noisy, _, _ = ellipse_points(25, 0.05, seed=3, arc=(0.0, np.pi))
    return fit_conic_ml(noisy, 0.05)


@pytest.fixture(scope="session")
def scene():
    return three_view_scene(50, 1.0, seed=0)


@pytest.fixture(scope="session")
def trifocal_model(scene):
    return fit_trifocal(scene.correspondences(), 1.0)


def haar_subspaces(rng, n_samples, n, K):
    """Uniformly random K-dim subspaces of R^n through whitened points ``t ~ N(0, I)``.

    Returns ``(w, P)`` with ``w`` the point of ``t + Ran P`` closest to the origin.
    """
    Q = np.linalg.qr(rng.standard_normal((n_samples, n, K)))[0]
    P = Q @ np.swapaxes(Q, 1, 2)
    t = rng.standard_normal((n_samples, n))
    w = t - np.einsum("bij,bj->bi", P, t)
    return w, P


def column_uniform_subspaces(rng, n_samples, M, K):
    """Subspaces whose triangular-factor columns are uniform on their half-spheres.

    Column k is a Gaussian vector projected onto the vectors that vanish on
    the first k coordinates and are orthogonal to the earlier columns, then
    normalised with a positive diagonal entry.  Returns ``(w, P)`` with
    ``w`` the foot point of ``t + Ran P`` for ``t ~ N(0, I)``.
    """
    n = M - 1
    kt = K if K <= M / 2 else M - K - 1
    eye = np.eye(n)
    cols = []
    for k in range(kt):
        g = rng.standard_normal((n_samples, n))
        if k:
            C = np.concatenate([np.broadcast_to(eye[:, :k], (n_samples, n, k)), np.stack(cols, axis=-1)], axis=-1)
            Qc = np.linalg.qr(C)[0]
            g = g - np.einsum("bij,bj->bi", Qc, np.einsum("bji,bj->bi", Qc, g))
        u = g / np.linalg.norm(g, axis=1, keepdims=True)
        cols.append(u * np.where(u[:, k] < 0, -1.0, 1.0)[:, None])
    L = np.stack(cols, axis=-1)
    LL = L @ np.swapaxes(L, 1, 2)
    P = LL if K <= M / 2 else eye - LL
    t = rng.standard_normal((n_samples, n))
    w = t - np.einsum("bij,bj->bi", P, t)
    return w, P
