"""vphawkes: per-event (variable) productivity estimation for Hawkes processes.

The package provides the closed-form maximum-likelihood solve for per-event
productivities (two triangular solves against the triggering matrix), the
windowed empirical estimator, stabilization by truncation / rescaling /
Gaussian smoothing, branching simulation of the processes needed to validate
the estimators, and goodness-of-fit via super-thinned residuals.
"""

from .core import (
    EtasPowerLawKernel,
    EventCatalog,
    ExponentialKernel,
    HawkesParams,
    ProductivityEstimate,
    TriggeringKernel,
    conditional_intensity,
    intensity_function,
)
from .diagnostics import (
    SuperThinResult,
    UniformityBand,
    normalized_cumsum,
    path_in_band,
    rmse,
    standardized_interevent,
    super_thin,
    uniformity_band,
)
from .estimate import (
    FitResult,
    IllConditionedWarning,
    SingularMatrixError,
    TriggeringMatrix,
    build_triggering_matrix,
    empirical_productivities,
    fit_constant_hawkes,
    log_likelihood,
    mle_productivities,
    score_residual,
    solve_inverse_intensities,
)
from .simulate import (
    CascadeError,
    ConstantProductivity,
    MagnitudeDistribution,
    MagnitudeProductivity,
    RenewalProductivity,
    TimeProductivity,
    simulate_etas,
    simulate_poisson,
    simulate_variable_hawkes,
)
from .stabilize import (
    DegenerateSpreadError,
    MarkProductivityCurve,
    SmootherConfig,
    ZeroSumError,
    kernel_smooth,
    rescale_total,
    silverman_bandwidth,
    smooth_by_mark,
    stabilize_pipeline,
    truncate_nonneg,
)

__version__ = "0.1.0"
