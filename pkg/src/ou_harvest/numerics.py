"""Foundation numerics: Gaussian special functions, adaptive quadrature,
Richardson-extrapolated differentiation, and deterministic random streams.

Everything here is pure given its inputs.  RngStream is the one stateful
object; it is single-owner by convention (never share one stream between
concurrent workers, give each worker its own stream_id instead).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, ndtr

__all__ = [
    "DEFAULT_QUADRATURE",
    "NonConvergenceError",
    "NumericsError",
    "QuadratureSpec",
    "RngStream",
    "central_diff",
    "integrate",
    "next_gaussian",
    "second_central_diff",
    "std_normal_cdf",
    "std_normal_cdf_gap",
    "std_normal_log_cdf",
    "std_normal_log_pdf",
    "std_normal_pdf",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_UINT64_MAX = 2**64 - 1


class NumericsError(Exception):
    """Base error for the numerics layer."""


class NonConvergenceError(NumericsError):
    """Quadrature or extrapolation failed to reach the requested accuracy."""


# ---------------------------------------------------------------------------
# Gaussian special functions
# ---------------------------------------------------------------------------

def std_normal_pdf(z):
    """Standard normal density exp(-z^2/2)/sqrt(2*pi).

    Accepts a scalar or an ndarray; returns the matching type.
    """
    if isinstance(z, np.ndarray):
        return _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


def std_normal_cdf(z):
    """Standard normal distribution function Phi(z).

    Backed by the complementary-error-function evaluation (ndtr), which keeps
    the relative error near machine precision even deep in the lower tail.
    Accepts a scalar or an ndarray.
    """
    if isinstance(z, np.ndarray):
        return ndtr(z)
    return float(ndtr(z))


def std_normal_log_pdf(z):
    """log of the standard normal density."""
    if isinstance(z, np.ndarray):
        return -0.5 * z * z - _LOG_SQRT_2PI
    return -0.5 * z * z - _LOG_SQRT_2PI


def std_normal_log_cdf(z):
    """log Phi(z), accurate for arbitrarily deep tails."""
    if isinstance(z, np.ndarray):
        return log_ndtr(z)
    return float(log_ndtr(z))


def std_normal_cdf_gap(lo, hi):
    """Phi(hi) - Phi(lo) for lo <= hi without the cancellation the naive
    difference suffers when both arguments sit in the same tail.

    Uses the survival function on the positive side: for lo+hi > 0 the gap is
    Phi(-lo) - Phi(-hi), a difference of two small same-scale numbers.
    """
    lo_arr = np.asarray(lo, dtype=float)
    hi_arr = np.asarray(hi, dtype=float)
    upper_tail = (lo_arr + hi_arr) > 0.0
    gap = np.where(upper_tail, ndtr(-lo_arr) - ndtr(-hi_arr), ndtr(hi_arr) - ndtr(lo_arr))
    if np.ndim(lo) == 0 and np.ndim(hi) == 0:
        return float(gap)
    return gap


# ---------------------------------------------------------------------------
# Adaptive quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """Accuracy target for integrate(): absolute tolerance plus a cap on the
    number of interval bisections any subinterval may undergo."""

    abs_tol: float = 1e-10
    max_depth: int = 40

    def __post_init__(self):
        if not (self.abs_tol > 0.0) or not math.isfinite(self.abs_tol):
            raise ValueError(f"abs_tol must be a positive finite number, got {self.abs_tol}")
        if not isinstance(self.max_depth, int) or self.max_depth < 1:
            raise ValueError(f"max_depth must be an integer >= 1, got {self.max_depth}")


DEFAULT_QUADRATURE = QuadratureSpec()

# Gauss-Kronrod 7-15 nodes and weights on [-1, 1].  The embedded 7-point
# Gauss rule shares the odd-indexed Kronrod nodes, so one batch of 15
# integrand values yields both estimates and their difference drives the
# local error estimate.
_KRONROD_NODES = np.array([
    -0.9914553711208126, -0.9491079123427585, -0.8648644233597691,
    -0.7415311855993944, -0.5860872354676911, -0.4058451513773972,
    -0.2077849550078985, 0.0, 0.2077849550078985, 0.4058451513773972,
    0.5860872354676911, 0.7415311855993944, 0.8648644233597691,
    0.9491079123427585, 0.9914553711208126,
])
_KRONROD_WEIGHTS = np.array([
    0.0229353220105292, 0.0630920926299785, 0.1047900103222502,
    0.1406532597155259, 0.1690047266392679, 0.1903505780647854,
    0.2044329400752989, 0.2094821410847278, 0.2044329400752989,
    0.1903505780647854, 0.1690047266392679, 0.1406532597155259,
    0.1047900103222502, 0.0630920926299785, 0.0229353220105292,
])
_GAUSS_WEIGHTS = np.array([
    0.1294849661688697, 0.2797053914892767, 0.3818300505051189,
    0.4179591836734694, 0.3818300505051189, 0.2797053914892767,
    0.1294849661688697,
])
_GAUSS_IDX = np.arange(1, 15, 2)
_EPS = np.finfo(float).eps


def _kronrod_panel(f, lo, hi):
    """One 15-point panel: returns (integral, error_estimate, resabs)."""
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid + half * _KRONROD_NODES
    y = np.asarray(f(x), dtype=float)
    if y.shape != x.shape:
        raise ValueError("integrand must map an array of points to an equal-length array")
    if not np.all(np.isfinite(y)):
        bad = x[~np.isfinite(y)][0]
        raise ValueError(f"integrand returned a non-finite value near x={bad!r}")
    kron = half * float(np.dot(_KRONROD_WEIGHTS, y))
    gauss = half * float(np.dot(_GAUSS_WEIGHTS, y[_GAUSS_IDX]))
    resabs = abs(half) * float(np.dot(_KRONROD_WEIGHTS, np.abs(y)))
    # QUADPACK-style rescaling of the raw |K15-G7| difference: sharp for
    # smooth panels, conservative for rough ones.
    mean = kron / (hi - lo) if hi != lo else 0.0
    resasc = abs(half) * float(np.dot(_KRONROD_WEIGHTS, np.abs(y - mean)))
    err = abs(kron - gauss)
    if resasc != 0.0 and err != 0.0:
        err = resasc * min(1.0, (200.0 * err / resasc) ** 1.5)
    err = max(err, 50.0 * _EPS * resabs)
    return kron, err, resabs


def integrate(f, lo, hi, spec=DEFAULT_QUADRATURE):
    """Globally adaptive quadrature of f over [lo, hi].

    The worst panel (largest error estimate) is bisected until the summed
    error estimate drops below spec.abs_tol, or below the roundoff floor for
    integrals whose magnitude makes the requested tolerance unreachable in
    double precision.  The integrand is called with ndarray arguments.

    Raises NonConvergenceError when a panel would need more than
    spec.max_depth bisections.
    """
    lo = float(lo)
    hi = float(hi)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError(f"integration bounds must be finite, got [{lo}, {hi}]")
    if lo > hi:
        raise ValueError(f"lower bound {lo} exceeds upper bound {hi}")
    if lo == hi:
        return 0.0

    total, err, resabs = _kronrod_panel(f, lo, hi)
    heap = [(-err, 0, lo, hi, total, err, resabs, 0)]
    total_err = err
    total_resabs = resabs
    tick = 1
    # The roundoff floor must sit above the sum of the per-panel floors
    # (50 eps each), otherwise integrands with a large dynamic range refine
    # forever while the summed floors converge to the threshold itself.
    while total_err > max(spec.abs_tol, 200.0 * _EPS * total_resabs):
        _, _, a, b, panel_val, panel_err, panel_abs, depth = heapq.heappop(heap)
        if depth >= spec.max_depth or tick > 40_000:
            raise NonConvergenceError(
                f"quadrature stalled at estimated error {total_err:.3e} "
                f"(target {spec.abs_tol:.3e}) after "
                f"{'max_depth=' + str(spec.max_depth) + ' bisections' if depth >= spec.max_depth else f'{tick} panels'}"
            )
        m = 0.5 * (a + b)
        left_val, left_err, left_abs = _kronrod_panel(f, a, m)
        right_val, right_err, right_abs = _kronrod_panel(f, m, b)
        total += (left_val + right_val) - panel_val
        total_err += (left_err + right_err) - panel_err
        total_resabs += (left_abs + right_abs) - panel_abs
        heapq.heappush(heap, (-left_err, tick, a, m, left_val, left_err, left_abs, depth + 1))
        tick += 1
        heapq.heappush(heap, (-right_err, tick, m, b, right_val, right_err, right_abs, depth + 1))
        tick += 1
    return total


# ---------------------------------------------------------------------------
# Richardson-extrapolated differentiation
# ---------------------------------------------------------------------------

def richardson_extrapolate(samples, factor):
    """Extrapolate a sequence D(h0), D(h0/2), D(h0/4), ... to h -> 0.

    `factor` is the per-level error reduction of the base rule under step
    halving: 2 for rules with a full h, h^2, ... error series (one-sided
    differences, limits along a geometric sequence), 4 for symmetric rules
    whose series contains only even powers.

    Returns (value, error_estimate) where the estimate is the last diagonal
    correction of the Neville tableau.
    """
    n = len(samples)
    if n < 2:
        raise ValueError("need at least two samples to extrapolate")
    tableau = [list(samples)]
    for j in range(1, n):
        fac = float(factor) ** j
        prev = tableau[j - 1]
        tableau.append([(fac * prev[k + 1] - prev[k]) / (fac - 1.0) for k in range(n - j)])
    best = tableau[-1][0]
    err = abs(best - tableau[-2][0]) if n >= 2 else math.inf
    return best, err


def central_diff(f, x, h0):
    """First derivative of f at x by Richardson-extrapolated central
    differences with steps h0, h0/2, h0/4, h0/8.

    Raises NonConvergenceError when the extrapolation diagonal diverges,
    which signals a function too rough for the stencil (kinks, noise).
    """
    if not (h0 > 0.0) or not math.isfinite(h0):
        raise ValueError(f"h0 must be positive and finite, got {h0}")
    steps = [h0 / 2.0**k for k in range(4)]
    base = [(f(x + h) - f(x - h)) / (2.0 * h) for h in steps]
    value, err = richardson_extrapolate(base, factor=4)
    scale = max(abs(value), abs(base[-1]), 1e-30)
    spread = max(abs(d - base[-1]) for d in base)
    if err > max(0.5 * spread + 1e-14 * scale, 1e-9 * scale):
        raise NonConvergenceError(
            f"central difference did not converge at x={x}: "
            f"estimate {value!r} with residual {err:.3e}"
        )
    return value


def second_central_diff(f, x, h0):
    """Second derivative by the symmetric three-point stencil, Richardson
    extrapolated over steps h0, h0/2, h0/4."""
    if not (h0 > 0.0) or not math.isfinite(h0):
        raise ValueError(f"h0 must be positive and finite, got {h0}")
    fx = f(x)
    steps = [h0 / 2.0**k for k in range(3)]
    base = [(f(x + h) - 2.0 * fx + f(x - h)) / (h * h) for h in steps]
    value, _ = richardson_extrapolate(base, factor=4)
    return value


# ---------------------------------------------------------------------------
# Deterministic random streams
# ---------------------------------------------------------------------------

@dataclass
class RngStream:
    """A deterministic stream of random variates.

    The same (seed, stream_id) pair always reproduces the same sequence, and
    distinct stream_ids give statistically independent sequences: the pair is
    used verbatim as the 128-bit key of a counter-based Philox generator, so
    streams never overlap.  A stream is single-owner; parallel work assigns
    each worker its own stream_id under the shared seed.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name, value in (("seed", self.seed), ("stream_id", self.stream_id)):
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {value!r}")
            if not (0 <= value <= _UINT64_MAX):
                raise ValueError(f"{name}={value} is outside [0, 2^64)")
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def standard_normals(self, n):
        """Draw n i.i.d. N(0, 1) variates."""
        return self._gen.standard_normal(int(n))

    def uniforms(self, n):
        """Draw n i.i.d. U[0, 1) variates."""
        return self._gen.random(int(n))


def next_gaussian(stream, mean, variance):
    """One draw from Normal(mean, variance) on the given stream.

    variance == 0 returns mean exactly without consuming a variate.
    """
    if not math.isfinite(mean):
        raise ValueError(f"mean must be finite, got {mean}")
    if not (variance >= 0.0):
        raise ValueError(f"variance must be nonnegative, got {variance}")
    if variance == 0.0:
        return float(mean)
    return float(mean + math.sqrt(variance) * stream.standard_normals(1)[0])
