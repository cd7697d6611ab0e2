"""Closed-form corridor functionals of the process: the probability rho(x)
of reaching the lower boundary first, the expected exit time psi(x), and
their derivatives.

Both come from the classical scale/speed construction for one-dimensional
diffusions.  For drift a + b*x with unit diffusion the scale density is
proportional to the normal density at z(u) = alpha + beta*u, so

    rho(x) = [Phi(z(theta)) - Phi(z(x))] / [Phi(z(theta)) - Phi(z(eta))]

and the expected exit time is the speed-measure quadrature

    psi(x) = (2/beta) * [ rho(x)   * int_eta^x  (Phi(z(u)) - Phi(z(eta))) / phi(z(u)) du
                        + (1-rho(x)) * int_x^theta (Phi(z(theta)) - Phi(z(u))) / phi(z(u)) du ].

psi solves (1/2) psi'' + (a + b x) psi' = -1 with psi(eta) = psi(theta) = 0;
that ODE residual and direct Monte Carlo are the independent checks on this
implementation (see the validation suite).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .numerics import (
    DEFAULT_QUADRATURE,
    NonConvergenceError,
    QuadratureSpec,
    integrate,
    richardson_extrapolate,
    std_normal_cdf,
    std_normal_cdf_gap,
    std_normal_log_cdf,
    std_normal_log_pdf,
    std_normal_pdf,
)
from .ou_model import Boundary, OUParams, alpha_beta

__all__ = [
    "FunctionalContext",
    "psi",
    "psi_prime_at_boundary",
    "rho",
    "rho_prime",
]

# Beyond this |z| the CDF-gap-over-density integrand is evaluated in log
# space; the direct quotient would juggle subnormals long before the true
# value stops being representable.
_TAIL_Z = 20.0

# Evaluations this close (relative to corridor width) to a boundary reuse the
# cached full-corridor integral and only quadrate the short leg.  Pure
# regrouping of the same integrals, it keeps boundary-limit work cheap.
_NEAR_EDGE_FRACTION = 0.05


@dataclass(frozen=True)
class FunctionalContext:
    """Immutable bundle of process parameters, corridor, and quadrature
    accuracy, with the scale constants and the CDF gap across the corridor
    precomputed."""

    params: OUParams
    eta: float
    theta: float
    quad: QuadratureSpec = DEFAULT_QUADRATURE
    alpha: float = field(init=False)
    beta: float = field(init=False)
    corridor_cdf_gap: float = field(init=False)

    def __post_init__(self):
        if not (math.isfinite(self.eta) and math.isfinite(self.theta)):
            raise ValueError(f"boundaries must be finite, got eta={self.eta}, theta={self.theta}")
        if not self.eta < self.theta:
            raise ValueError(f"eta={self.eta} must be < theta={self.theta}")
        alpha, beta = alpha_beta(self.params)
        gap = std_normal_cdf_gap(alpha + beta * self.eta, alpha + beta * self.theta)
        if not gap > 0.0:
            raise ValueError(
                f"degenerate corridor: Phi gap across [{self.eta}, {self.theta}] is {gap}"
            )
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "corridor_cdf_gap", gap)

    def z(self, x):
        """Scale coordinate alpha + beta*x (scalar or array)."""
        return self.alpha + self.beta * x

    @property
    def width(self):
        return self.theta - self.eta


def _check_inside(ctx, x):
    if not (ctx.eta <= x <= ctx.theta):
        raise ValueError(f"x={x} is outside the corridor [{ctx.eta}, {ctx.theta}]")


def rho(ctx, x):
    """Probability of hitting eta before theta from x in [eta, theta].

    Boundary starts return the exact 0 or 1 rather than evaluating the
    quotient, so the pinned values carry no cancellation noise.
    """
    _check_inside(ctx, x)
    if x == ctx.eta:
        return 1.0
    if x == ctx.theta:
        return 0.0
    return std_normal_cdf_gap(ctx.z(x), ctx.z(ctx.theta)) / ctx.corridor_cdf_gap


def rho_prime(ctx, x):
    """d rho / dx = -beta phi(z(x)) / [Phi(z(theta)) - Phi(z(eta))],
    negative everywhere on [eta, theta]."""
    _check_inside(ctx, x)
    return -ctx.beta * std_normal_pdf(ctx.z(x)) / ctx.corridor_cdf_gap


# ---------------------------------------------------------------------------
# Expected exit time
# ---------------------------------------------------------------------------

def _gap_over_weight(z_lo, z_hi, z_den, denominator):
    """(Phi(z_hi) - Phi(z_lo)) / w(z_den) for arrays, where the weight w is
    the density phi (the correct speed-measure weight) or, for the
    diagnostic variant, the CDF Phi.

    The phi branch switches to log arithmetic past |z_den| > 20: the
    quotient exp(log gap - log phi) stays finite where the direct route
    underflows to 0/0 in wide corridors.
    """
    z_lo = np.asarray(z_lo, dtype=float)
    z_hi = np.asarray(z_hi, dtype=float)
    z_den = np.asarray(z_den, dtype=float)
    if denominator == "cdf":
        return std_normal_cdf_gap(z_lo, z_hi) / std_normal_cdf(z_den)
    if denominator != "pdf":
        raise ValueError(f"denominator must be 'pdf' or 'cdf', got {denominator!r}")

    out = np.empty(np.broadcast(z_lo, z_hi, z_den).shape)
    z_lo, z_hi, z_den = np.broadcast_arrays(z_lo, z_hi, z_den)
    tail = np.abs(z_den) > _TAIL_Z
    core = ~tail
    if core.any():
        out[core] = std_normal_cdf_gap(z_lo[core], z_hi[core]) / std_normal_pdf(z_den[core])
    if tail.any():
        lo, hi, den = z_lo[tail], z_hi[tail], z_den[tail]
        upper = (lo + hi) > 0.0
        # log(Phi(hi) - Phi(lo)) via whichever tail representation avoids
        # cancellation, then divide by phi in log space.
        log_a = np.where(upper, std_normal_log_cdf(-hi), std_normal_log_cdf(lo))
        log_b = np.where(upper, std_normal_log_cdf(-lo), std_normal_log_cdf(hi))
        with np.errstate(divide="ignore", over="ignore"):
            log_gap = log_b + np.log1p(-np.exp(log_a - log_b))
            out[tail] = np.where(
                hi > lo, np.exp(log_gap - std_normal_log_pdf(den)), 0.0
            )
    return out


def _lower_leg(ctx, lo, hi, denominator):
    """int_lo^hi (Phi(z(u)) - Phi(z(eta))) / w(z(u)) du."""
    z_eta = ctx.z(ctx.eta)

    def f(u):
        z = ctx.z(u)
        return _gap_over_weight(z_eta, z, z, denominator)

    return integrate(f, lo, hi, ctx.quad)


def _upper_leg(ctx, lo, hi, denominator):
    """int_lo^hi (Phi(z(theta)) - Phi(z(u))) / w(z(u)) du."""
    z_theta = ctx.z(ctx.theta)

    def f(u):
        z = ctx.z(u)
        return _gap_over_weight(z, z_theta, z, denominator)

    return integrate(f, lo, hi, ctx.quad)


@lru_cache(maxsize=512)
def _full_legs(ctx, denominator):
    """Both speed-measure integrals over the whole corridor, cached per
    context.  Near-boundary psi evaluations subtract a short integral from
    these instead of re-quadrating an almost-full corridor."""
    return (
        _lower_leg(ctx, ctx.eta, ctx.theta, denominator),
        _upper_leg(ctx, ctx.eta, ctx.theta, denominator),
    )


def psi(ctx, x, denominator="pdf"):
    """Expected time to leave (eta, theta) from x, by adaptive quadrature of
    the scale/speed representation.  Exactly zero at either boundary.

    denominator="cdf" computes the deliberately wrong variant whose
    integrands divide by Phi instead of phi; it exists for negative-control
    experiments and fails the ODE and Monte Carlo cross-checks.
    """
    _check_inside(ctx, x)
    if x == ctx.eta or x == ctx.theta:
        return 0.0
    edge_band = _NEAR_EDGE_FRACTION * ctx.width
    if x - ctx.eta <= edge_band:
        full_lower, full_upper = _full_legs(ctx, denominator)
        lower = _lower_leg(ctx, ctx.eta, x, denominator)
        upper = full_upper - _upper_leg(ctx, ctx.eta, x, denominator)
    elif ctx.theta - x <= edge_band:
        full_lower, full_upper = _full_legs(ctx, denominator)
        lower = full_lower - _lower_leg(ctx, x, ctx.theta, denominator)
        upper = _upper_leg(ctx, x, ctx.theta, denominator)
    else:
        lower = _lower_leg(ctx, ctx.eta, x, denominator)
        upper = _upper_leg(ctx, x, ctx.theta, denominator)
    r = rho(ctx, x)
    return (2.0 / ctx.beta) * (r * lower + (1.0 - r) * upper)


def psi_prime_at_boundary(ctx, which, h0_scale=1e-3, denominator="pdf"):
    """One-sided derivative of psi at a boundary by Richardson extrapolation
    of difference quotients taken just inside the corridor.

    Offsets start at h0_scale * (theta - eta) and halve through four levels;
    psi vanishes at the boundary, so each quotient is a single interior
    evaluation.  The result is positive at the lower boundary and negative
    at the upper one.  Raises NonConvergenceError when the extrapolation
    diagonal does not settle.
    """
    if not isinstance(which, Boundary):
        raise ValueError(f"which must be a Boundary, got {which!r}")
    h0 = h0_scale * ctx.width
    offsets = [h0 / 2.0**k for k in range(4)]
    if which is Boundary.LOWER:
        quotients = [psi(ctx, ctx.eta + e, denominator=denominator) / e for e in offsets]
    else:
        quotients = [-psi(ctx, ctx.theta - e, denominator=denominator) / e for e in offsets]
    value, err = richardson_extrapolate(quotients, factor=2)
    if err > max(1e-4 * abs(value), 1e-9):
        raise NonConvergenceError(
            f"one-sided derivative at {which.value} boundary did not settle: "
            f"estimate {value!r}, residual {err:.3e}"
        )
    return value
