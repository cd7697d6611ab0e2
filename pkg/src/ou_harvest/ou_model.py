"""Ornstein-Uhlenbeck resource process with linear drift a + b*x and unit
diffusion, plus the discrete multiplicative-growth recursion it approximates.

The continuous process solves dX = (a + b X) dt + dB.  Its discrete
counterpart advances by Y_n = e^{b h} (Y_{n-1} + W_n) with W_n drawn
Normal(a h, h): deterministic productivity growth applied to the stock left
after one period of Gaussian consumption.  Both transition laws are Gaussian
with closed-form moments; the exact transition is used for first-passage
simulation so the only discretization effect is boundary checking at step
ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .numerics import next_gaussian

__all__ = [
    "Boundary",
    "Corridor",
    "DEFAULT_STEP_CAP",
    "FirstPassageOutcome",
    "OUParams",
    "StepCapExceededError",
    "alpha_beta",
    "cov_X",
    "cov_Y",
    "exact_transition_coeffs",
    "first_passage",
    "first_passage_batch",
    "mean_X",
    "mean_Y",
    "step_exact",
    "step_exact_batch",
    "step_recursion",
    "step_recursion_batch",
]

DEFAULT_STEP_CAP = 10**9


class StepCapExceededError(RuntimeError):
    """A first-passage simulation ran past its step cap, which under a
    bounded corridor with b > 0 indicates a misconfiguration."""


class Boundary(Enum):
    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True)
class OUParams:
    """Drift parameters: intercept a (consumption rate) and slope b
    (productivity rate).

    b > 0 is required so beta = sqrt(2 b) is real.  The supported economic
    regime additionally has a < 0; passing a >= 0 raises unless
    allow_nonnegative_a=True, since the formulas stay valid for any real a.
    """

    a: float
    b: float
    allow_nonnegative_a: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError(f"parameters must be finite, got a={self.a}, b={self.b}")
        if not self.b > 0.0:
            raise ValueError(f"b={self.b} must be > 0 (beta = sqrt(2 b) must be real)")
        if self.a >= 0.0 and not self.allow_nonnegative_a:
            raise ValueError(
                f"a={self.a} is outside the supported consumption regime (a < 0); "
                "pass allow_nonnegative_a=True to waive this check"
            )


@dataclass(frozen=True)
class Corridor:
    """Boundary pair (eta, theta) with the regeneration level x0 between
    them.  The standing requirement is 0 <= eta < x0 < theta; construction
    with relaxed=True permits x0 to sit on a boundary (used when studying
    boundary limits), keeping eta < theta strict."""

    eta: float
    x0: float
    theta: float
    relaxed: bool = False

    def __post_init__(self):
        vals = (self.eta, self.x0, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"corridor values must be finite, got {vals}")
        if self.eta < 0.0:
            raise ValueError(f"eta={self.eta} must be >= 0")
        if not self.eta < self.theta:
            raise ValueError(f"eta={self.eta} must be < theta={self.theta}")
        if self.relaxed:
            if not (self.eta <= self.x0 <= self.theta):
                raise ValueError(
                    f"x0={self.x0} must lie in [eta={self.eta}, theta={self.theta}]"
                )
        else:
            if not (self.eta < self.x0 < self.theta):
                raise ValueError(
                    f"x0={self.x0} must lie strictly inside (eta={self.eta}, theta={self.theta})"
                )

    @property
    def width(self):
        return self.theta - self.eta


@dataclass(frozen=True)
class FirstPassageOutcome:
    """Which boundary a path left through, after how much time, in how many
    steps.  hit_time equals steps * h (crossings are registered at the end
    of the step in which they are detected)."""

    boundary: Boundary
    hit_time: float
    steps: int


def alpha_beta(params):
    """Scale constants (alpha, beta) = (a sqrt(2)/sqrt(b), sqrt(2 b)).

    With these, exp(-(2 a u + b u^2)) is proportional to the normal density
    evaluated at alpha + beta*u, which is what turns the corridor exit
    problem into normal-CDF arithmetic.
    """
    return params.a * math.sqrt(2.0) / math.sqrt(params.b), math.sqrt(2.0 * params.b)


# ---------------------------------------------------------------------------
# Closed-form moments
# ---------------------------------------------------------------------------

def mean_X(t, x, params):
    """E[X(t) | X(0)=x] = x e^{b t} + (a/b)(e^{b t} - 1)."""
    if not t >= 0.0:
        raise ValueError(f"t={t} must be >= 0")
    ebt = math.exp(params.b * t)
    return x * ebt + (params.a / params.b) * math.expm1(params.b * t)


def cov_X(s, t, params):
    """Cov[X(s), X(t)] = e^{b(s+t)} (1 - e^{-2 b s}) / (2 b) for 0 <= s <= t.

    At s = t this reduces to Var[X(t)] = (e^{2 b t} - 1)/(2 b), which is
    positive and matches the Ito-isometry computation on the explicit
    solution.
    """
    if not 0.0 <= s <= t:
        raise ValueError(f"need 0 <= s <= t, got s={s}, t={t}")
    b = params.b
    return math.exp(b * (s + t)) * (-math.expm1(-2.0 * b * s)) / (2.0 * b)


def mean_Y(n, h, x, params):
    """E[Y_n] = x e^{n b h} + a h e^{b h} (1 - e^{n b h}) / (1 - e^{b h})."""
    _check_recursion_args(0, n, h)
    b = params.b
    if n == 0:
        return float(x)
    ratio = math.expm1(n * b * h) / math.expm1(b * h)
    return x * math.exp(n * b * h) + params.a * h * math.exp(b * h) * ratio


def cov_Y(m, n, h, params):
    """Cov[Y_m, Y_n] = h e^{(2 + n - m) b h} (1 - e^{2 m b h}) / (1 - e^{2 b h})
    for 0 <= m <= n.  Numerator and denominator are both negative for b > 0,
    so the value is positive; the ratio is evaluated as expm1(2 m b h) /
    expm1(2 b h) to keep that sign structure exact.
    """
    _check_recursion_args(m, n, h)
    b = params.b
    if m == 0:
        return 0.0
    ratio = math.expm1(2.0 * m * b * h) / math.expm1(2.0 * b * h)
    return h * math.exp((2.0 + n - m) * b * h) * ratio


def _check_recursion_args(m, n, h):
    if not isinstance(m, int) or not isinstance(n, int):
        raise ValueError(f"indices must be integers, got m={m!r}, n={n!r}")
    if not 0 <= m <= n:
        raise ValueError(f"need 0 <= m <= n, got m={m}, n={n}")
    if not h > 0.0:
        raise ValueError(f"h={h} must be > 0")


# ---------------------------------------------------------------------------
# Transition sampling
# ---------------------------------------------------------------------------

def step_recursion(y, h, params, stream):
    """One step of the discrete recursion: e^{b h} (y + W), W ~ N(a h, h)."""
    if not h > 0.0:
        raise ValueError(f"h={h} must be > 0")
    w = next_gaussian(stream, params.a * h, h)
    return math.exp(params.b * h) * (y + w)


def step_recursion_batch(y, h, params, stream):
    """Vectorized step_recursion for an array of states (one shared step)."""
    if not h > 0.0:
        raise ValueError(f"h={h} must be > 0")
    y = np.asarray(y, dtype=float)
    w = params.a * h + math.sqrt(h) * stream.standard_normals(y.size).reshape(y.shape)
    return math.exp(params.b * h) * (y + w)


def exact_transition_coeffs(h, params):
    """(growth, shift, sd) of the exact transition over time h:
    X(t+h) | X(t)=y ~ Normal(growth*y + shift, sd^2) with
    growth = e^{b h}, shift = (a/b)(e^{b h} - 1), sd^2 = (e^{2 b h} - 1)/(2 b).
    """
    if not h > 0.0:
        raise ValueError(f"h={h} must be > 0")
    b = params.b
    growth = math.exp(b * h)
    shift = (params.a / b) * math.expm1(b * h)
    sd = math.sqrt(math.expm1(2.0 * b * h) / (2.0 * b))
    return growth, shift, sd


def step_exact(y, h, params, stream):
    """Draw X(t+h) given X(t)=y from the exact Gaussian transition law."""
    growth, shift, sd = exact_transition_coeffs(h, params)
    return growth * y + shift + sd * float(stream.standard_normals(1)[0])


def step_exact_batch(y, h, params, stream):
    """Vectorized step_exact for an array of states."""
    growth, shift, sd = exact_transition_coeffs(h, params)
    y = np.asarray(y, dtype=float)
    z = stream.standard_normals(y.size).reshape(y.shape)
    return growth * y + shift + sd * z


# ---------------------------------------------------------------------------
# First passage out of the corridor
# ---------------------------------------------------------------------------

def first_passage_batch(corridor, h, params, stream, n_paths,
                        bridge_correction=False, step_cap=DEFAULT_STEP_CAP):
    """Simulate n_paths independent exits from (eta, theta) starting at x0.

    Paths advance by the exact transition; the boundary test happens at step
    ends, so the crossing bias is O(sqrt(h)).  With bridge_correction=True an
    intra-step crossing is additionally registered with the Brownian-bridge
    crossing probability exp(-2 d0 d1 / h) computed from the distances of the
    step endpoints to the boundary (the within-step noise is treated as a
    Brownian bridge, which removes most of the O(sqrt(h)) bias).

    Returns (hit_upper, steps): a bool array marking paths that left through
    theta, and the step count of each exit.  Draw order is fixed (normals
    for all alive paths, then, if bridging, two uniform batches), so results
    are a pure function of the stream.
    """
    if not (corridor.eta < corridor.x0 < corridor.theta):
        raise ValueError(
            f"first passage needs a strictly interior start, got x0={corridor.x0} "
            f"in [{corridor.eta}, {corridor.theta}]"
        )
    n_paths = int(n_paths)
    if n_paths < 1:
        raise ValueError(f"n_paths={n_paths} must be >= 1")
    growth, shift, sd = exact_transition_coeffs(h, params)
    eta, theta = corridor.eta, corridor.theta

    pos = np.full(n_paths, float(corridor.x0))
    alive = np.arange(n_paths)
    hit_upper = np.zeros(n_paths, dtype=bool)
    steps = np.zeros(n_paths, dtype=np.int64)
    step = 0
    while alive.size:
        step += 1
        if step > step_cap:
            raise StepCapExceededError(
                f"{alive.size} of {n_paths} paths still inside ({eta}, {theta}) "
                f"after {step_cap} steps of size {h}; check the configuration"
            )
        new = pos * growth + shift + sd * stream.standard_normals(alive.size)
        low = new <= eta
        up = new >= theta
        if bridge_correction:
            inside = ~(low | up)
            u_low = stream.uniforms(alive.size)
            u_up = stream.uniforms(alive.size)
            with np.errstate(over="ignore"):
                p_low = np.exp(-2.0 * (pos - eta) * (new - eta) / h)
                p_up = np.exp(-2.0 * (theta - pos) * (theta - new) / h)
            bridged_low = inside & (u_low < p_low)
            bridged_up = inside & ~bridged_low & (u_up < p_up)
            low = low | bridged_low
            up = up | bridged_up
        done = low | up
        if done.any():
            exited = alive[done]
            hit_upper[exited] = up[done]
            steps[exited] = step
            keep = ~done
            alive = alive[keep]
            pos = new[keep]
        else:
            pos = new
    return hit_upper, steps


def first_passage(corridor, h, params, stream,
                  bridge_correction=False, step_cap=DEFAULT_STEP_CAP):
    """Run a single path until it leaves (eta, theta); see
    first_passage_batch for the stepping conventions."""
    hit_upper, steps = first_passage_batch(
        corridor, h, params, stream, 1,
        bridge_correction=bridge_correction, step_cap=step_cap,
    )
    n = int(steps[0])
    boundary = Boundary.UPPER if bool(hit_upper[0]) else Boundary.LOWER
    return FirstPassageOutcome(boundary=boundary, hit_time=n * h, steps=n)
