import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ou_harvest.numerics import (
    NonConvergenceError,
    QuadratureSpec,
    RngStream,
    central_diff,
    integrate,
    next_gaussian,
    second_central_diff,
    std_normal_cdf,
    std_normal_cdf_gap,
    std_normal_pdf,
)

SEED = 42


# ---------------------------------------------------------------------------
# pdf / cdf
# ---------------------------------------------------------------------------

def test_pdf_at_zero_is_inverse_sqrt_2pi():
    assert std_normal_pdf(0.0) == pytest.approx(0.3989422804014327, abs=1e-16)


def test_pdf_is_even():
    assert std_normal_pdf(3.0) == std_normal_pdf(-3.0)


def test_pdf_at_one_against_mpmath():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 40
    expected = float(mp.exp(mp.mpf("-0.5")) / mp.sqrt(2 * mp.pi))
    assert std_normal_pdf(1.0) == pytest.approx(expected, rel=1e-15)


def test_cdf_at_zero():
    assert std_normal_cdf(0.0) == pytest.approx(0.5, abs=1e-16)


@given(st.floats(-8.0, 8.0))
def test_cdf_symmetry(z):
    assert std_normal_cdf(z) + std_normal_cdf(-z) == pytest.approx(1.0, abs=1e-14)


def test_cdf_at_one_against_trapezoid_oracle():
    # Brute-force oracle: trapezoid rule over [-12, 1] at step 1e-5.  The
    # mass below -12 is ~1.8e-33, far under the tolerance.
    step = 1e-5
    grid = np.arange(-12.0, 1.0 + step / 2, step)
    oracle = np.trapezoid(std_normal_pdf(grid), grid)
    assert std_normal_cdf(1.0) == pytest.approx(oracle, abs=1e-9)


def test_cdf_monotone_on_grid():
    grid = np.linspace(-8.0, 8.0, 201)
    values = std_normal_cdf(grid)
    assert np.all(np.diff(values) > 0.0)


def test_cdf_tail_relative_accuracy():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 40
    for z in (-8.0, -5.0, -2.0, 2.0, 5.0, 8.0):
        expected = float(mp.ncdf(z))
        assert std_normal_cdf(z) == pytest.approx(expected, rel=1e-14)


def test_cdf_gap_matches_mpmath_in_deep_tail():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 50
    for lo, hi in ((-30.0, -28.0), (6.0, 9.0), (-1.3, 2.4), (25.0, 31.0)):
        expected = float(mp.ncdf(hi) - mp.ncdf(lo))
        assert std_normal_cdf_gap(lo, hi) == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def test_integrate_constant_exact():
    assert integrate(lambda x: np.ones_like(x), 0.0, 2.0) == pytest.approx(2.0, abs=1e-13)


def test_integrate_degenerate_interval_is_zero():
    assert integrate(lambda x: x**3 + 5.0, 5.0, 5.0) == 0.0


def test_integrate_rejects_reversed_bounds():
    with pytest.raises(ValueError):
        integrate(lambda x: x, 1.0, 0.0)


def test_integrate_normal_density_total_mass():
    spec = QuadratureSpec(abs_tol=1e-12)
    total = integrate(std_normal_pdf, -12.0, 12.0, spec)
    assert total == pytest.approx(1.0, abs=1e-12)
    # cross-check against CDF differences
    assert total == pytest.approx(std_normal_cdf(12.0) - std_normal_cdf(-12.0), abs=1e-12)


def test_integrate_polynomial_high_degree():
    # K15 is exact to degree 22; a random-ish degree-9 polynomial integrates
    # to its closed form without any subdivision.
    coeffs = [3.0, -2.0, 0.5, 1.0, -0.25, 0.0, 2.0, -1.5, 0.75, 0.1]
    poly = np.polynomial.Polynomial(coeffs)
    expected = poly.integ()(1.7) - poly.integ()(-0.3)
    assert integrate(poly, -0.3, 1.7) == pytest.approx(expected, rel=1e-14)


def test_integrate_reports_nonconvergence_when_depth_exhausted():
    # square-root kink: panel errors shrink too slowly for a depth cap of 3
    spec = QuadratureSpec(abs_tol=1e-13, max_depth=3)
    kink = lambda x: np.sqrt(np.abs(x - 1.0 / 3.0))
    with pytest.raises(NonConvergenceError):
        integrate(kink, 0.0, 1.0, spec)


def test_integrate_rejects_non_finite_integrand():
    def f(x):
        with np.errstate(divide="ignore"):
            return 1.0 / (x - 0.5)

    with pytest.raises(ValueError):
        integrate(f, 0.0, 1.0)


@given(st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3))
def test_integrate_additivity(points):
    a, b, c = sorted(points)
    spec = QuadratureSpec(abs_tol=1e-11)
    f = lambda x: np.exp(-0.5 * x * x) * (1.0 + x * x)
    whole = integrate(f, a, c, spec)
    split = integrate(f, a, b, spec) + integrate(f, b, c, spec)
    assert whole == pytest.approx(split, abs=2 * spec.abs_tol)


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(abs_tol=0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(max_depth=0)


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

def test_central_diff_square():
    assert central_diff(lambda u: u * u, 3.0, 0.1) == pytest.approx(6.0, abs=1e-8)


def test_central_diff_constant():
    assert central_diff(lambda u: 4.25, 1.3, 0.1) == pytest.approx(0.0, abs=1e-12)


def test_central_diff_cdf_chain_rule():
    alpha, beta, x = -2.0, 1.0, 1.4
    f = lambda u: std_normal_cdf(alpha + beta * u)
    expected = beta * std_normal_pdf(alpha + beta * x)
    assert central_diff(f, x, 1e-2) == pytest.approx(expected, abs=1e-8)


def test_central_diff_flags_jump():
    # a step under the stencil makes the difference quotients grow like 1/h,
    # which the extrapolation must refuse to launder into a derivative
    f = lambda x: x + (0.001 if x > 0.3 else 0.0)
    with pytest.raises(NonConvergenceError):
        central_diff(f, 0.3, 0.1)


def test_cdf_pdf_consistency_on_grid():
    for z in np.linspace(-6.0, 6.0, 25):
        d = central_diff(std_normal_cdf, float(z), 1e-2)
        assert d == pytest.approx(std_normal_pdf(float(z)), abs=1e-8)


def test_second_central_diff_cubic():
    f = lambda u: u**3 - 2.0 * u
    assert second_central_diff(f, 1.5, 1e-2) == pytest.approx(9.0, abs=1e-7)


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

def test_next_gaussian_degenerate_variance_returns_mean():
    stream = RngStream(SEED, 0)
    assert next_gaussian(stream, 7.0, 0.0) == 7.0


def test_next_gaussian_rejects_negative_variance():
    with pytest.raises(ValueError):
        next_gaussian(RngStream(SEED, 0), 0.0, -1.0)


def test_stream_determinism():
    a = RngStream(SEED, 3).standard_normals(64)
    b = RngStream(SEED, 3).standard_normals(64)
    np.testing.assert_array_equal(a, b)


def test_streams_differ_by_id():
    a = RngStream(SEED, 0).standard_normals(64)
    b = RngStream(SEED, 1).standard_normals(64)
    assert not np.array_equal(a, b)


def test_stream_independence_smoke():
    n = 100_000
    a = RngStream(SEED, 0).standard_normals(n)
    b = RngStream(SEED, 1).standard_normals(n)
    corr = float(np.corrcoef(a, b)[0, 1])
    assert abs(corr) < 4.0 / math.sqrt(n)


def test_stream_clt_mean():
    n = 1_000_000
    draws = RngStream(SEED, 9).standard_normals(n)
    assert abs(float(draws.mean())) < 4.0 / math.sqrt(n)


def test_stream_validation():
    with pytest.raises(ValueError):
        RngStream(-1, 0)
    with pytest.raises(ValueError):
        RngStream(0, 2**64)
    with pytest.raises(ValueError):
        RngStream(True, 0)
