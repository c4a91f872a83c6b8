"""Scaled Bessel functions and the jump kernels built on them."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsaw1d.kernels import (
    KernelKind,
    bessel_i0_scaled,
    bessel_i1_scaled,
    kernel_eval,
)
from wsaw1d.model import ModelParams, log_p


def i0_series(x, n_terms=30):
    """Truncated power series for I0, independent of scipy."""
    return sum((0.25 * x * x) ** m / math.factorial(m) ** 2 for m in range(n_terms))


def i1_series(x, n_terms=30):
    return sum(
        0.5 * x * (0.25 * x * x) ** m / (math.factorial(m) * math.factorial(m + 1))
        for m in range(n_terms)
    )


def mp_k0(g, nu, t, s):
    """Naive high-precision k0: sqrt(p(t)p(s)) e^{-t-s} I0(2 sqrt(ts))."""
    with mpmath.workdps(60):
        t, s, g, nu = map(mpmath.mpf, (t, s, g, nu))
        lp = -g * (t**2 + s**2) - nu * (t + s)
        val = mpmath.exp(lp / 2 - t - s) * mpmath.besseli(0, 2 * mpmath.sqrt(t * s))
        return float(val)


def test_scaled_bessel_at_zero():
    assert bessel_i0_scaled(0.0) == 1.0
    assert bessel_i1_scaled(0.0) == 0.0


def test_scaled_bessel_series_oracle():
    # e^{-1} I_k(1) against 30 series terms, way past double precision
    assert bessel_i0_scaled(1.0) == pytest.approx(math.exp(-1) * i0_series(1.0), rel=1e-13)
    assert bessel_i1_scaled(1.0) == pytest.approx(math.exp(-1) * i1_series(1.0), rel=1e-13)


def test_scaled_bessel_large_argument_asymptotics():
    # i0e(x) ~ (2 pi x)^{-1/2} (1 + 1/(8x) + ...)
    x = 700.0
    lead = (2.0 * math.pi * x) ** -0.5
    assert bessel_i0_scaled(x) == pytest.approx(lead * (1.0 + 1.0 / (8.0 * x)), rel=1e-5)


def test_scaled_bessel_rejects_bad_input():
    for fn in (bessel_i0_scaled, bessel_i1_scaled):
        with pytest.raises(ValueError):
            fn(-1.0)
        with pytest.raises(ValueError):
            fn(float("nan"))
        with pytest.raises(ValueError):
            fn(np.array([1.0, -2.0]))


@given(x=st.floats(1e-8, 1e4))
@settings(max_examples=200, deadline=None)
def test_i1_below_i0(x):
    assert 0.0 < bessel_i1_scaled(x) < bessel_i0_scaled(x) <= 1.0


def test_k0_symmetry_bit_exact():
    p = ModelParams(g=1.0, nu=-1.3)
    rng = np.random.default_rng(7)
    t = rng.uniform(0, 30, size=200)
    s = rng.uniform(0, 30, size=200)
    for kind in (KernelKind.K0, KernelKind.DNU_K0, KernelKind.DG_K0,
                 KernelKind.D2NU_K0, KernelKind.DNU_DG_K0, KernelKind.D2G_K0):
        a = kernel_eval(kind, p, t, s)
        b = kernel_eval(kind, p, s, t)
        assert np.array_equal(a, b)


def test_k0_simple_points():
    p = ModelParams(g=1.0, nu=0.0)
    assert kernel_eval(KernelKind.K0, p, 0.0, 0.0) == 1.0
    # one argument at zero: I0(0)=1, so k0(t,0) = sqrt(p(t)) e^{-t}
    t = 2.5
    expect = math.exp(0.5 * log_p(p, t) - t)
    assert kernel_eval(KernelKind.K0, p, t, 0.0) == pytest.approx(expect, rel=1e-14)


def test_k0_matches_high_precision_reference():
    # stable route vs naive 60-digit evaluation over a grid where the naive
    # product does not underflow
    p = ModelParams(g=1.0, nu=-0.7)
    ts = np.linspace(0.05, 12.0, 20)
    for t in ts:
        for s in ts:
            got = kernel_eval(KernelKind.K0, p, float(t), float(s))
            want = mp_k0(1.0, -0.7, float(t), float(s))
            assert got == pytest.approx(want, rel=1e-13)


def test_k0_deep_tail_representable_point():
    # at g=0.04 the Gaussian factor at t=s=50 is still representable; the
    # stable route must agree with extended precision out there
    got = kernel_eval(KernelKind.K0, ModelParams(g=0.04, nu=0.0), 50.0, 50.0)
    want = mp_k0(0.04, 0.0, 50.0, 50.0)
    assert got > 0.0
    assert got == pytest.approx(want, rel=1e-12)


def test_k0_far_tail_underflows_quietly():
    # at g=1 the t=s=50 value is ~e^{-2500}: below double range. The stable
    # evaluation must return 0.0 rather than overflow or NaN.
    val = kernel_eval(KernelKind.K0, ModelParams(g=1.0, nu=0.0), 50.0, 50.0)
    assert val == 0.0


def test_k0_positive_on_representable_range():
    p = ModelParams(g=1.0, nu=-2.0)
    rng = np.random.default_rng(11)
    t = rng.uniform(0, 8, size=500)
    s = rng.uniform(0, 8, size=500)
    assert np.all(kernel_eval(KernelKind.K0, p, t, s) > 0)


def test_derivative_kinds_are_polynomial_factors():
    p = ModelParams(g=0.7, nu=-0.9, phi=None)
    rng = np.random.default_rng(3)
    t = rng.uniform(0, 10, size=50)
    s = rng.uniform(0, 10, size=50)
    k0 = kernel_eval(KernelKind.K0, p, t, s)
    tot = t + s
    ptot = t**2 + s**2  # quadratic phi
    cases = {
        KernelKind.DNU_K0: -0.5 * tot * k0,
        KernelKind.DG_K0: -0.5 * ptot * k0,
        KernelKind.D2NU_K0: 0.25 * tot**2 * k0,
        KernelKind.DNU_DG_K0: 0.25 * tot * ptot * k0,
        KernelKind.D2G_K0: 0.25 * ptot**2 * k0,
    }
    for kind, want in cases.items():
        np.testing.assert_allclose(kernel_eval(kind, p, t, s), want, rtol=1e-13)


def test_k1_weighted_vanishes_at_t_zero():
    p = ModelParams(g=1.0, nu=0.2)
    for s in (0.0, 1e-12, 1e-5, 1.0, 40.0):
        assert kernel_eval(KernelKind.K1_WEIGHTED, p, 0.0, s) == 0.0


def test_k1_weighted_series_matches_direct_branch():
    # just below the series threshold the power series has to agree with the
    # i1e formula evaluated by hand
    p = ModelParams(g=1.0, nu=-0.4)
    t = 17.0
    for s in (0.9e-8, 1e-9, 1e-11):
        got = kernel_eval(KernelKind.K1_WEIGHTED, p, t, s)
        rt, rs = math.sqrt(t), math.sqrt(s)
        lp_half = 0.5 * (log_p(p, t) + log_p(p, s))
        want = (
            math.exp(lp_half - (rt - rs) ** 2)
            * bessel_i1_scaled(2.0 * rt * rs)
            * math.sqrt(t / s)
        )
        assert got == pytest.approx(want, rel=1e-9)


def test_k1_weighted_continuous_across_threshold():
    p = ModelParams(g=1.0, nu=-0.4)
    t = 5.0
    below = kernel_eval(KernelKind.K1_WEIGHTED, p, t, 0.999e-8)
    above = kernel_eval(KernelKind.K1_WEIGHTED, p, t, 1.001e-8)
    assert below == pytest.approx(above, rel=1e-6)


def test_k1_weighted_high_precision_reference():
    p = ModelParams(g=1.0, nu=-0.7)
    with mpmath.workdps(60):
        for t, s in ((3.0, 4.0), (0.2, 9.0), (12.0, 0.5)):
            tm, sm = mpmath.mpf(t), mpmath.mpf(s)
            lp = -(tm**2 + sm**2) + 0.7 * (tm + sm)
            want = float(
                mpmath.exp(lp / 2 - tm - sm)
                * mpmath.besseli(1, 2 * mpmath.sqrt(tm * sm))
                * mpmath.sqrt(tm / sm)
            )
            got = kernel_eval(KernelKind.K1_WEIGHTED, p, t, s)
            assert got == pytest.approx(want, rel=1e-13)


@given(
    s=st.floats(0.01, 40.0),
    x=st.floats(0.01, 40.0),
    mult=st.floats(1.01, 5.0),
    smult=st.floats(1.01, 5.0),
)
@settings(max_examples=150, deadline=None)
def test_bessel_log_ratio_monotone_in_s(s, x, mult, smult):
    # log I0(2 sqrt(s y)) - log I0(2 sqrt(s x)) is nondecreasing in s for
    # y > x; written with scaled Bessels to stay in range
    y = x * mult
    s2 = s * smult

    def ratio(sv):
        return (
            math.log(bessel_i0_scaled(2 * math.sqrt(sv * y)))
            - math.log(bessel_i0_scaled(2 * math.sqrt(sv * x)))
            + 2 * math.sqrt(sv) * (math.sqrt(y) - math.sqrt(x))
        )

    assert ratio(s2) >= ratio(s) - 1e-10
