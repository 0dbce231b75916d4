"""Diffeomorphic image registration and variational grid generation toolkit.

Non-folding spatial transformations with controlled Jacobian determinant and
curl, inverse-map construction inside the group of diffeomorphisms, and the
full registration-quality metric battery.
"""

from ._kernels import BACKEND
from .field import (
    Domain,
    LabelVolume,
    ScalarField,
    Transform,
    VectorField,
    displacement,
    field_stats,
    make_identity,
)
from .diffops import (
    BcMode,
    PoissonSolver,
    compose,
    curl,
    divergence,
    gradient,
    jacobian_determinant,
    laplacian,
    poisson_solve,
    small_displacement_residual,
    warp,
)
from .metrics import MetricRecord, cohort_summary, dice, inverse_consistency, jd_stats
from .register import Engine, RegOptions, RegResult, vpreg_pipeline, zscore
from .vpgrid import GridGenOptions, GridTargets, invert, lm_target_grid, vp_generate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BcMode",
    "Domain",
    "Engine",
    "GridGenOptions",
    "GridTargets",
    "LabelVolume",
    "MetricRecord",
    "PoissonSolver",
    "RegOptions",
    "RegResult",
    "ScalarField",
    "Transform",
    "VectorField",
    "cohort_summary",
    "compose",
    "curl",
    "dice",
    "displacement",
    "divergence",
    "field_stats",
    "gradient",
    "inverse_consistency",
    "invert",
    "jacobian_determinant",
    "jd_stats",
    "laplacian",
    "lm_target_grid",
    "make_identity",
    "poisson_solve",
    "small_displacement_residual",
    "vp_generate",
    "vpreg_pipeline",
    "warp",
    "zscore",
]
