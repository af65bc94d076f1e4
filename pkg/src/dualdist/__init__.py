"""Dual distributions of Gaussian parameter estimates for multilinear geometric models.

A feature vector ``y`` is incident to a model ``theta`` when ``theta . y = 0``.
Given a Gaussian estimate of ``theta``, each feature inherits the density
of the hyperplane (or affine subspace, for several constraints) of models
it is incident to.  The package provides the closed-form densities, charts
that pull them back to image coordinates, samplers, Monte-Carlo oracles and
two concrete models (conics and the trifocal tensor).
"""

from .conditional import (
    DensityGrid,
    FeatureMap,
    GridSpec,
    conditional_density,
    conditional_log_density,
    evaluate_grid,
    mh_chain,
    mh_sample,
    numerical_jacobian,
    split_rhat,
)
from .dual_multi import MultiDualContext, dual_density_multi, params_from_kernel
from .dual_single import dual_density_single, feature_coords, signed_distance
from .errors import DualDistError
from .oracle import direct_conic_sample, mc_oracle_grid
from .sphcoords import SphCoords, cartesian_from_sph, sph_from_cartesian, volume_element
from .subspace import (
    AffineSubspaceParams,
    GaussianParam,
    ReducedFrame,
    reduce_features,
    subspace_params,
    tangent_whitening,
    triangular_factor,
)

__version__ = "0.1.0"

__all__ = [
    "AffineSubspaceParams",
    "DensityGrid",
    "DualDistError",
    "FeatureMap",
    "GaussianParam",
    "GridSpec",
    "MultiDualContext",
    "ReducedFrame",
    "SphCoords",
    "cartesian_from_sph",
    "conditional_density",
    "conditional_log_density",
    "direct_conic_sample",
    "dual_density_multi",
    "dual_density_single",
    "evaluate_grid",
    "feature_coords",
    "mc_oracle_grid",
    "mh_chain",
    "mh_sample",
    "numerical_jacobian",
    "params_from_kernel",
    "reduce_features",
    "signed_distance",
    "sph_from_cartesian",
    "split_rhat",
    "subspace_params",
    "tangent_whitening",
    "triangular_factor",
    "volume_element",
]
