"""Boundary limits of the harvest ratio and their sign diagnosis.

Under the level-reset policy Q(y) = y - x, both E[Q] and E[T] vanish as the
reset level x approaches a boundary, and their ratio has a finite limit
gamma.  One application of l'Hopital gives the closed forms

    lower case:  gamma = (-1 - (theta - eta) rho'(eta)) /   psi'(eta)
    upper case:  gamma = ( 1 + (theta - eta) rho'(theta)) / (-psi'(theta))

with psi'(eta) > 0 and psi'(theta) < 0 always.  Multiplying each numerator
by the (positive) CDF gap across the corridor produces a tangent-line
expression in the scale coordinate z(u) = alpha + beta*u:

    S_lower = Phi(z(eta))   + beta phi(z(eta))  (theta - eta) - Phi(z(theta))
    S_upper = Phi(z(theta)) + beta phi(z(theta))(eta - theta) - Phi(z(eta))

each the value of the tangent to Phi(z(.)) at one boundary, evaluated at the
other, minus the curve there.  Each surrogate shares gamma's sign, and
S_lower > 0 whenever eta >= -alpha/beta = -a/b (the drift equilibrium),
because Phi(z(.)) is concave to the right of the equilibrium so the tangent
sits above the curve.

gamma is also computable with no calculus at all, by evaluating the plain
ratio at reset levels marching toward the boundary and extrapolating; the
two routes agreeing is the module's self-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .functionals import psi_prime_at_boundary, rho_prime
from .numerics import NonConvergenceError, richardson_extrapolate, std_normal_cdf, std_normal_pdf
from .ou_model import Boundary
from .renewal import expected_ratio, level_reset_policy

__all__ = [
    "LimitCase",
    "LimitDivergesError",
    "SIGN_DEAD_BAND",
    "SignVerdict",
    "estimate_gamma_limit",
    "gamma_closed_form",
    "gamma_numeric_limit",
    "proposition_report",
    "surrogate_A",
    "surrogate_B",
    "surrogate_B_printed",
    "surrogate_a_value",
    "surrogate_b_printed_value",
    "surrogate_b_value",
]

# |surrogate| below this is treated as "at the zero set": the sign comparison
# is vacuous there, since near the surrogate's root the numerically
# differentiated gamma can land on either side of zero.
SIGN_DEAD_BAND = 1e-9

_LIMIT_LEVELS = 5
_LIMIT_START_FRACTION = 1e-2


class LimitDivergesError(RuntimeError):
    """The ratio has no finite boundary limit for the supplied policy."""


class LimitCase(Enum):
    """The two reset-level limits: x -> eta (A) and x -> theta (B)."""

    A_LOWER = "A_lower"
    B_UPPER = "B_upper"


def surrogate_a_value(alpha, beta, eta, theta):
    """Tangent-minus-curve expression for the lower-boundary case, as a raw
    function of the scale constants and boundaries."""
    z_eta = alpha + beta * eta
    return (
        std_normal_cdf(z_eta)
        + beta * std_normal_pdf(z_eta) * (theta - eta)
        - std_normal_cdf(alpha + beta * theta)
    )


def surrogate_b_value(alpha, beta, eta, theta):
    """Tangent-minus-curve expression for the upper-boundary case (tangent
    taken at theta, evaluated at eta, minus the curve at eta)."""
    z_theta = alpha + beta * theta
    return (
        std_normal_cdf(z_theta)
        + beta * std_normal_pdf(z_theta) * (eta - theta)
        - std_normal_cdf(alpha + beta * eta)
    )


def surrogate_b_printed_value(alpha, beta, eta, theta):
    """The upper-case expression with -Phi(z(theta)) as its trailing term,
    which collapses to beta*phi(z(theta))*(eta - theta) and is negative for
    every corridor.  Kept computable for audit; the corrected form
    (surrogate_b_value) is the one whose sign tracks gamma."""
    z_theta = alpha + beta * theta
    return beta * std_normal_pdf(z_theta) * (eta - theta)


def surrogate_A(ctx):
    """Sign surrogate for the lower-boundary limit on a corridor context."""
    return surrogate_a_value(ctx.alpha, ctx.beta, ctx.eta, ctx.theta)


def surrogate_B(ctx):
    """Sign surrogate for the upper-boundary limit (corrected form)."""
    return surrogate_b_value(ctx.alpha, ctx.beta, ctx.eta, ctx.theta)


def surrogate_B_printed(ctx):
    """Audit variant of surrogate_B; see surrogate_b_printed_value."""
    return surrogate_b_printed_value(ctx.alpha, ctx.beta, ctx.eta, ctx.theta)


def gamma_closed_form(ctx, case):
    """Boundary limit of the harvest ratio via the l'Hopital closed form.

    rho' is exact arithmetic; psi' at the boundary comes from the
    Richardson one-sided difference, whose non-convergence propagates.
    """
    width = ctx.theta - ctx.eta
    if case is LimitCase.A_LOWER:
        numer = -1.0 - width * rho_prime(ctx, ctx.eta)
        return numer / psi_prime_at_boundary(ctx, Boundary.LOWER)
    if case is LimitCase.B_UPPER:
        numer = 1.0 + width * rho_prime(ctx, ctx.theta)
        return numer / (-psi_prime_at_boundary(ctx, Boundary.UPPER))
    raise ValueError(f"unknown limit case {case!r}")


@dataclass(frozen=True)
class LimitEstimate:
    """Extrapolated boundary limit of the plain ratio, with the last
    extrapolation correction and per-level raw values kept for diagnosis."""

    value: float
    residual: float
    converged: bool
    levels: tuple


def estimate_gamma_limit(ctx, case, policy_for=None):
    """Numeric boundary limit: evaluate E[Q]/E[T] at reset levels walking
    geometrically toward the boundary (offsets (theta-eta)/100 halved five
    times) and Richardson-extrapolate the sequence to offset zero.

    policy_for maps a reset level x to its HarvestPolicy; the default is the
    level-reset policy Q(y) = y - x, the one with a finite limit.  Policies
    whose expected reward does not vanish at the boundary make the ratio
    blow up like 1/psi; that geometric growth is detected and reported as
    LimitDivergesError rather than extrapolated into a number.
    """
    if policy_for is None:
        def policy_for(x):
            return level_reset_policy(ctx.eta, ctx.theta, x)
    width = ctx.theta - ctx.eta
    offsets = [_LIMIT_START_FRACTION * width / 2.0**k for k in range(_LIMIT_LEVELS)]
    values = []
    for eps in offsets:
        x = ctx.eta + eps if case is LimitCase.A_LOWER else ctx.theta - eps
        values.append(expected_ratio(ctx, x, policy_for(x)))

    magnitudes = [abs(v) for v in values]
    if magnitudes[-1] > 8.0 * magnitudes[0] and all(
        m2 > 1.5 * m1 for m1, m2 in zip(magnitudes, magnitudes[1:])
    ):
        raise LimitDivergesError(
            f"ratio grows like 1/offset toward the {case.value} boundary "
            f"(|ratio| went {magnitudes[0]:.4g} -> {magnitudes[-1]:.4g}); "
            "no finite limit for this policy"
        )
    value, residual = richardson_extrapolate(values, factor=2)
    scale = max(abs(value), 1e-12)
    return LimitEstimate(
        value=value,
        residual=residual,
        converged=residual <= 1e-5 * scale,
        levels=tuple(values),
    )


def gamma_numeric_limit(ctx, case, policy_for=None):
    """estimate_gamma_limit reduced to its value; raises NonConvergenceError
    when the extrapolation did not settle."""
    est = estimate_gamma_limit(ctx, case, policy_for=policy_for)
    if not est.converged:
        raise NonConvergenceError(
            f"boundary-limit extrapolation did not settle for {case.value}: "
            f"value {est.value!r}, residual {est.residual:.3e}"
        )
    return est.value


@dataclass(frozen=True)
class SignVerdict:
    """Everything the sign diagnosis produces for one limit case.

    signs_agree compares sign(surrogate) with sign(gamma closed form),
    vacuously true inside the dead band |surrogate| < SIGN_DEAD_BAND.
    in_positivity_region is the eta >= -a/b test and only applies to the
    lower case (None for the upper one).  flags lists any sub-computation
    that had to be treated as unreliable.
    """

    case: LimitCase
    surrogate_value: float
    gamma_closed_form: float
    gamma_numeric_limit: float
    signs_agree: bool
    in_positivity_region: bool | None
    flags: tuple

    @property
    def reliable(self):
        return not self.flags


def _verdict(ctx, case):
    surrogate = surrogate_A(ctx) if case is LimitCase.A_LOWER else surrogate_B(ctx)
    flags = []
    try:
        closed = gamma_closed_form(ctx, case)
    except NonConvergenceError:
        closed = math.nan
        flags.append("closed_form_derivative_unreliable")
    try:
        numeric = gamma_numeric_limit(ctx, case)
    except (NonConvergenceError, LimitDivergesError):
        numeric = math.nan
        flags.append("numeric_limit_nonconvergent")

    if abs(surrogate) < SIGN_DEAD_BAND:
        signs_agree = True
        flags.append("surrogate_in_dead_band")
    elif math.isnan(closed):
        signs_agree = False
    else:
        signs_agree = (surrogate > 0.0) == (closed > 0.0)

    in_region = None
    if case is LimitCase.A_LOWER:
        in_region = ctx.eta >= -ctx.params.a / ctx.params.b
    return SignVerdict(
        case=case,
        surrogate_value=surrogate,
        gamma_closed_form=closed,
        gamma_numeric_limit=numeric,
        signs_agree=signs_agree,
        in_positivity_region=in_region,
        flags=tuple(flags),
    )


def proposition_report(ctx):
    """Assemble the sign verdicts for both boundary limits.  A pure function
    of (a, b, eta, theta): repeated calls return identical reports."""
    return _verdict(ctx, LimitCase.A_LOWER), _verdict(ctx, LimitCase.B_UPPER)
