"""Masked two-component signal decomposition by ADMM.

Each sample of an observed signal is modeled as coming from exactly one
of two subspace components, selected by a binary mask.  The package
provides basis constructors, the difference/proximal operators, the ADMM
solver and an additive baseline, a robust homography motion segmenter,
synthetic generators with an exhaustive oracle, and a command line tool.
"""
from .admm import (
    IMAGE_BLOCK_CONFIG,
    TOY_1D_CONFIG,
    AdmmConfig,
    Decomposition,
    additive_solve,
    admm_solve,
    loss,
)
from .bases import (
    Subspace,
    make_basis,
    make_custom_basis,
    make_dct2_basis,
    make_hadamard_basis,
    make_sinusoid_basis,
)
from .errors import (
    ConvergenceError,
    DegenerateFitError,
    DegenerateMappingError,
    DivergenceError,
    InvalidArgumentError,
    MaskDecompError,
    SingularSystemError,
    SizeLimitError,
)
from .motion import (
    FlowField,
    Homography,
    MotionConfig,
    MotionSegResult,
    flow_from_homography,
    homography_apply,
    ls_global_motion,
    motion_segment,
)
from .operators import DiffOperator, diff_1d, diff_2d, soft_threshold, tv
from .testkit import gen_masked_1d, gen_masked_2d, gen_outlier_flow, metrics, oracle_solve

__version__ = "0.1.0"
