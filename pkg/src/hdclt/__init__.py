"""hdclt: a numerical laboratory for high-dimensional central limit theorems.

Exact heavy-tail laws for the four moment classes, scaling-sequence solvers,
zone-wise Berry-Esseen envelope evaluators, a deterministic Monte Carlo engine
for max/product-set Gaussian approximation discrepancies, and a config-driven
experiment CLI.
"""

__version__ = "0.1.0"

from .errors import (
    DomainError,
    EstimationError,
    HdcltError,
    SolverError,
    SpecificationError,
)
from .gaussian import (
    log_std_normal_cdf,
    log_std_normal_tail,
    mills_envelope,
    mills_ratio,
    normal_quantile,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_tail,
)
from .tails import (
    StandardizedDist,
    TailSpec,
    example_truncated_moment,
    example_v_from_loglog,
    g_function,
    h_function,
    make_distribution,
    tail_bar,
    truncated_second_moment,
)
from .scaling import (
    DimensionSchedule,
    ScalingSolution,
    schedule,
    solve_bn,
    solve_lambda,
    solve_lambda_for_spec,
    solve_log_bn,
)
from .bounds import (
    EnvelopePair,
    NecessityProbe,
    PartitionBound,
    ZoneBoundProfile,
    calibrate_max_threshold,
    envelope_pair,
    necessity_probe,
    necessity_threshold,
    partition_bound,
    rectangle_bound,
    zone_bound_profile,
    zone_ratio_threshold,
)
from .montecarlo import (
    BCoeffEstimate,
    DiscrepancyEstimate,
    EmpiricalCDF,
    ExactStepCDF,
    b_coeff_estimate,
    estimate_b_coeff,
    rho_dist,
    rho_max,
    sample,
    set_workers,
    simulate_marginal,
    zone_ratio,
)

__all__ = [name for name in dir() if not name.startswith("_")]
