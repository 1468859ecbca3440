"""Exact L0-penalised multiple-changepoint detection and verification tools.

Segment models: change in mean, continuous change in slope, and spike
plus exponential decay.  The solvers minimise cost-of-fit plus a
per-change penalty exactly; the theory module evaluates the detectability
formulas that justify the default penalty; simlab verifies them by
simulation.
"""

__version__ = "0.1.0"

from .core import (
    Kind,
    ModelSpec,
    PenalizedFit,
    Segmentation,
    TimeSeries,
    TruthSpec,
    fit_params,
    segment_cost_mean,
    segment_cost_slope,
    segment_cost_spike,
    slope_segment_quadratic,
    true_cost,
)
from .solver import (
    PiecewiseQuadratic,
    SolverOptions,
    brute_force_detect,
    detect_partition,
    detect_slope,
)
from .theory import default_penalty, mad_sigma
from .simlab import McConfig, McReport, generate, run_mc

__all__ = [
    "__version__",
    "Kind",
    "ModelSpec",
    "TimeSeries",
    "Segmentation",
    "PenalizedFit",
    "TruthSpec",
    "segment_cost_mean",
    "segment_cost_slope",
    "segment_cost_spike",
    "slope_segment_quadratic",
    "true_cost",
    "fit_params",
    "SolverOptions",
    "PiecewiseQuadratic",
    "detect_partition",
    "detect_slope",
    "brute_force_detect",
    "default_penalty",
    "mad_sigma",
    "McConfig",
    "McReport",
    "generate",
    "run_mc",
]
