"""Two-boundary harvesting policies on an Ornstein-Uhlenbeck resource
process: closed-form hitting probability and expected exit time, the
renewal-reward harvest ratio, boundary-limit sign analysis, and a Monte
Carlo simulator that cross-checks every closed form."""

__version__ = "0.1.0"

from .functionals import FunctionalContext, psi, psi_prime_at_boundary, rho, rho_prime
from .numerics import (
    DEFAULT_QUADRATURE,
    NonConvergenceError,
    QuadratureSpec,
    RngStream,
    central_diff,
    integrate,
    next_gaussian,
    std_normal_cdf,
    std_normal_pdf,
)
from .ou_model import (
    Boundary,
    Corridor,
    FirstPassageOutcome,
    OUParams,
    StepCapExceededError,
    alpha_beta,
    cov_X,
    cov_Y,
    first_passage,
    first_passage_batch,
    mean_X,
    mean_Y,
    step_exact,
    step_recursion,
)
from .renewal import (
    HarvestPolicy,
    InsufficientCyclesError,
    RenewalCheck,
    RenewalRunStats,
    expected_ratio,
    level_reset_policy,
    pool_runs,
    renewal_theorem_check,
    simulate_renewal,
)
from .sign_analysis import (
    LimitCase,
    LimitDivergesError,
    SignVerdict,
    estimate_gamma_limit,
    gamma_closed_form,
    gamma_numeric_limit,
    proposition_report,
    surrogate_A,
    surrogate_B,
)

__all__ = [
    "Boundary",
    "Corridor",
    "DEFAULT_QUADRATURE",
    "FirstPassageOutcome",
    "FunctionalContext",
    "HarvestPolicy",
    "InsufficientCyclesError",
    "LimitCase",
    "LimitDivergesError",
    "NonConvergenceError",
    "OUParams",
    "QuadratureSpec",
    "RenewalCheck",
    "RenewalRunStats",
    "RngStream",
    "SignVerdict",
    "StepCapExceededError",
    "__version__",
    "alpha_beta",
    "central_diff",
    "cov_X",
    "cov_Y",
    "estimate_gamma_limit",
    "expected_ratio",
    "first_passage",
    "first_passage_batch",
    "gamma_closed_form",
    "gamma_numeric_limit",
    "integrate",
    "level_reset_policy",
    "mean_X",
    "mean_Y",
    "next_gaussian",
    "pool_runs",
    "proposition_report",
    "psi",
    "psi_prime_at_boundary",
    "renewal_theorem_check",
    "rho",
    "rho_prime",
    "simulate_renewal",
    "step_exact",
    "step_recursion",
    "std_normal_cdf",
    "std_normal_pdf",
    "surrogate_A",
    "surrogate_B",
]
