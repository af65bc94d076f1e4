"""Concrete multilinear models: conics and the trifocal tensor."""

from .conic import ConicModel, conic_dual_chart, fit_conic_ml, veronese_embed
from .trilinear import Correspondence, trilinearity_columns
from .trifocal import (
    TrifocalModel,
    deterministic_transfer,
    fit_trifocal,
    transfer_density_chart,
)

__all__ = [
    "ConicModel",
    "conic_dual_chart",
    "fit_conic_ml",
    "veronese_embed",
    "Correspondence",
    "trilinearity_columns",
    "TrifocalModel",
    "deterministic_transfer",
    "fit_trifocal",
    "transfer_density_chart",
]
