import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as spi

from qiengine.numerics import (
    InvalidInput,
    NonConvergence,
    QuadratureConfig,
    binary_entropy,
    grid,
    integrate,
    is_nondecreasing,
    stable_conditional,
    std_normal_cdf,
)


def test_polynomial_exact():
    # K15 is exact for degree <= 22
    assert integrate(lambda x: x**10, 0.0, 1.0) == pytest.approx(1 / 11, rel=1e-14)


def test_gaussian_matches_erf():
    val = integrate(lambda x: np.exp(-x * x), -3.0, 3.0)
    assert val == pytest.approx(math.sqrt(math.pi) * math.erf(3.0), rel=1e-12)


def test_breakpoint_kink():
    # |x - 0.3| has a kink; with the breakpoint the first pass is already exact
    val = integrate(lambda x: np.abs(x - 0.3), 0.0, 1.0, points=[0.3])
    assert val == pytest.approx(0.5 * (0.3**2 + 0.7**2), rel=1e-14)


def test_against_scipy_quad():
    f = lambda x: np.sin(5 * x) * np.exp(-x)  # noqa: E731
    ref, _ = spi.quad(f, 0.0, 10.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    assert integrate(f, 0.0, 10.0) == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_nonconvergence():
    cfg = QuadratureConfig(max_subdivisions=5)
    with pytest.raises(NonConvergence):
        integrate(lambda x: np.sin(1 / np.maximum(x, 1e-9)), 1e-4, 1.0, cfg)


def test_bad_interval():
    with pytest.raises(InvalidInput):
        integrate(lambda x: x, 1.0, 1.0)


@pytest.mark.parametrize("kw", [dict(abs_tol=0), dict(rel_tol=-1), dict(max_subdivisions=0), dict(window_sigmas=3)])
def test_config_validation(kw):
    with pytest.raises(InvalidInput):
        QuadratureConfig(**kw)


def test_cdf_values():
    assert std_normal_cdf(1.0) == pytest.approx(0.8413447460685429, rel=1e-15)
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_cdf(-40.0) == pytest.approx(float(mpmath.ncdf(-40)), rel=1e-12)
    assert std_normal_cdf(40.0) == 1.0


def test_cdf_vs_integral():
    dens = lambda x: np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)  # noqa: E731
    assert std_normal_cdf(1.3) - std_normal_cdf(-0.7) == pytest.approx(integrate(dens, -0.7, 1.3), rel=1e-12)


@given(st.floats(-30, 30))
def test_cdf_symmetry(x):
    assert std_normal_cdf(x) + std_normal_cdf(-x) == pytest.approx(1.0, abs=1e-15)


def test_cdf_array():
    xs = np.array([-1.0, 0.0, 1.0])
    np.testing.assert_allclose(std_normal_cdf(xs), [std_normal_cdf(float(x)) for x in xs], rtol=1e-15)


def test_stable_conditional_values():
    p0, p1 = stable_conditional(0.0, -10.0)
    assert p1 == pytest.approx(float(1 / (1 + mpmath.exp(10))), rel=1e-14)
    assert p1 == pytest.approx(4.5397868702434395e-05, rel=1e-14)
    assert p0 + p1 == 1.0


def test_stable_conditional_extremes():
    assert stable_conditional(0.0, -1000.0) == (1.0, 0.0)
    assert stable_conditional(-math.inf, 0.0) == (0.0, 1.0)
    p0, p1 = stable_conditional(-800.0, -800.0)
    assert p0 == p1 == 0.5


@pytest.mark.parametrize("args", [(-math.inf, -math.inf), (math.nan, 0.0)])
def test_stable_conditional_invalid(args):
    with pytest.raises(InvalidInput):
        stable_conditional(*args)


@given(st.floats(-700, 700), st.floats(-700, 700))
def test_stable_conditional_sums_to_one(u, v):
    p0, p1 = stable_conditional(u, v)
    assert p0 + p1 == 1.0
    assert 0.0 <= p0 <= 1.0 and 0.0 <= p1 <= 1.0


def test_binary_entropy():
    assert binary_entropy(0.5, 0.5) == pytest.approx(math.log(2))
    assert binary_entropy(1.0, 0.0) == 0.0


def test_grid():
    np.testing.assert_allclose(grid(1, 100, 3, "log"), [1, 10, 100])
    np.testing.assert_allclose(grid(0, 1, 3), [0, 0.5, 1])
    with pytest.raises(InvalidInput):
        grid(0, 1, 3, "log")
    with pytest.raises(InvalidInput):
        grid(1, 0, 3)


@settings(max_examples=50)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
def test_sorted_is_nondecreasing(xs):
    assert is_nondecreasing(sorted(xs))


def test_nondecreasing_slack():
    assert not is_nondecreasing([1.0, 0.9])
    assert is_nondecreasing([1.0, 0.9], slack=0.2)
