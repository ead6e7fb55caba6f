"""Numerical laboratory for curvature and positivity of Bergman-space bundles.

Truncated weighted Bergman spaces over a parameter domain form a Hermitian
bundle; this package assembles its Chern curvature by two independent
routes, certifies Nakano/Griffiths positivity bounds, checks the weighted
minimal-solution estimate and the pointwise Schur-complement lower bound,
certifies plurisubharmonicity of kernel values on parameter grids, and
runs a rank-two projectivized-bundle instance over a one-dimensional
fiber chart.
"""

__version__ = "0.1.0"

from .backend import BACKEND, backend_info, pair_integrals, set_threads, weighted_sum
from .bergman import (
    Basis,
    GramError,
    GramFamily,
    complement_pairing,
    density,
    fock_gram_oracle,
    gram,
    kernel_diag,
    kernel_pair,
    project,
)
from .curvature import (
    BoundReport,
    CurvatureAssembly,
    DualityReport,
    PositivityReport,
    curvature_direct,
    curvature_subbundle,
    dual_assembly,
    dual_curvature_check,
    export_blocks,
    griffiths_delta,
    hermiticity_residual,
    hormander_check,
    nakano_delta,
    positivity_report,
    route_deviation,
    sample_tuples,
    schur_lower_bound_check,
)
from .fibration import (
    DecayError,
    FibrationModel,
    builtin_fibration,
    chart_grid,
    det_transform_check,
    fiber_basis,
    fiber_gram,
    fibration_nakano,
    fubini_study_gram_oracle,
    rank_check,
)
from .numerics import (
    ConditioningError,
    DomainSpec,
    GridError,
    NotPositiveDefiniteError,
    QuadGrid,
    build_grid,
    integrate,
    min_eigenvalue,
    min_eigenvalue_metric,
    solve_hpd,
    symmetrize,
    truncation_decay_bound,
)
from .pshcheck import (
    GridFunction,
    HoloMap,
    fd_complex_hessian,
    grid_function_from_callable,
    kernel_along_map,
    poly_map,
    psh_report,
)
from .weights import (
    DegenerateHessianError,
    DerivativeCheckError,
    HessianBlocks,
    WeightModel,
    add_conformal,
    builtin,
    check_psh,
    default_probes,
    schur_D,
    validate_derivatives,
)
