"""Monte-Carlo check of the single-constraint dual density for M = 3.

Whitened parameter samples are paired with uniformly drawn normals; the
resulting hyperplane offsets should be standard normal and independent of
the direction.
"""

import numpy as np
from scipy import stats

from dualdist.dual_single import hyperplane_params
from dualdist.subspace import GaussianParam, tangent_whitening


def main(n=100_000, seed=0):
    rng = np.random.default_rng(seed)
    theta0 = np.array([0.3, -0.4, 0.8]) / np.linalg.norm([0.3, -0.4, 0.8])
    B = np.linalg.qr(np.column_stack([theta0, rng.standard_normal((3, 2))]))[0][:, 1:]
    A = B @ np.array([[0.02, 0.0], [0.01, 0.005]])
    g = GaussianParam(theta0, A @ A.T)
    t = tangent_whitening(g).reduce_theta(g.sample(n, rng))
    a = rng.uniform(-np.pi / 2, np.pi / 2, n)
    normals = np.column_stack([np.cos(a), np.sin(a)])
    Y = np.column_stack([normals, -np.sum(normals * t[:, :2], axis=1) / t[:, 2]])
    s, phi = np.array([(h.s, h.phi[0]) for h in map(hyperplane_params, Y)]).T

    print(f"offset mean {s.mean():+.4f}, variance {s.var():.4f}")
    print(f"KS vs N(0,1): p = {stats.kstest(s, 'norm').pvalue:.3f}")
    print(f"KS of directions vs uniform: p = {stats.kstest(phi, stats.uniform(-np.pi / 2, np.pi).cdf).pvalue:.3f}")
    print(f"offset/direction rank correlation: {stats.spearmanr(s, np.abs(phi))[0]:+.4f}")


if __name__ == "__main__":
    main()
