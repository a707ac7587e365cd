"""Theta-functional Ernst potentials on hyperelliptic curves."""

from .ernst import (
    ErnstEvaluation,
    ErnstOptions,
    MetricFields,
    SolutionSpec,
    WorldPoint,
    build_characteristics,
    conjugate_via_formula,
    ernst_potential,
    metric_quadratures,
    pde_residual,
    real_part_via_fay,
)
from .riemann_surface import BranchPair, SpectralData, abel_to_infinity, riemann_matrix
from .theta import Characteristics, ThetaContext, theta

__all__ = [
    "BranchPair",
    "Characteristics",
    "ErnstEvaluation",
    "ErnstOptions",
    "MetricFields",
    "SolutionSpec",
    "SpectralData",
    "ThetaContext",
    "WorldPoint",
    "abel_to_infinity",
    "build_characteristics",
    "conjugate_via_formula",
    "ernst_potential",
    "metric_quadratures",
    "pde_residual",
    "real_part_via_fay",
    "riemann_matrix",
    "theta",
]
