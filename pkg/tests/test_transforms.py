"""Transform family: values, inverses, derivative stack, moment conditions.

High-precision expectations come from an mpmath oracle (50 decimal digits,
numerical differentiation) so they are independent of the closed forms
under test.
"""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpfh.transforms import (
    LAMBDA_EPS,
    LAMBDA_MAX,
    DualPowerTransform,
    LogTransform,
    check_integrability,
    make_transform,
)

mp.mp.dps = 50


def mp_forward(y, lam):
    y, lam = mp.mpf(y), mp.mpf(lam)
    if lam == 0:
        return mp.log(y)
    return (y**lam - y**-lam) / (2 * lam)


def mp_derivatives(y, lam):
    """Arbitrary-precision numerical derivatives of the forward map."""
    y, lam = mp.mpf(y), mp.mpf(lam)
    h = mp_forward(y, lam)
    h_y = mp.diff(lambda t: mp_forward(t, lam), y)
    h_lam = mp.diff(lambda l: mp_forward(y, l), lam)
    h_lamlam = mp.diff(lambda l: mp_forward(y, l), lam, 2)
    h_ylam = mp.diff(lambda t: mp.diff(lambda l: mp_forward(t, l), lam), y)

    # d/dlam of (h_ylam / h_y)
    def jac_slope(l):
        hy = mp.diff(lambda t: mp_forward(t, l), y)
        hyl = mp.diff(lambda t: mp.diff(lambda s: mp_forward(t, s), l), y)
        return hyl / hy

    d_score = mp.diff(jac_slope, lam)
    return h, h_y, h_lam, h_lamlam, h_ylam, d_score


FROZEN_H_2_06 = 0.71330217593662577  # mpmath: (2^0.6 - 2^-0.6) / 1.2
FROZEN_HY_2_06 = 0.5438676304742113  # mpmath: (2^-0.4 + 2^-1.6) / 2


class TestForward:
    def test_unit_input_is_zero_for_any_lam(self):
        for lam in (0.0, 0.2, 0.6, 1.44, 10.0):
            assert DualPowerTransform(lam).forward(1.0) == 0.0

    def test_log_of_e(self):
        assert LogTransform().forward(math.e) == pytest.approx(1.0, rel=1e-15)

    def test_value_against_high_precision_oracle(self):
        got = DualPowerTransform(0.6).forward(2.0)
        assert got == pytest.approx(FROZEN_H_2_06, rel=1e-14)
        assert float(mp_forward(2, mp.mpf("0.6"))) == pytest.approx(got, rel=1e-14)

    def test_rejects_non_positive(self):
        t = DualPowerTransform(0.6)
        for bad in (0.0, -1.0):
            with pytest.raises(ValueError):
                t.forward(bad)
            with pytest.raises(ValueError):
                t.derivatives(bad)
        with pytest.raises(ValueError):
            LogTransform().forward(0.0)

    def test_vectorized_matches_scalar(self):
        t = DualPowerTransform(0.8)
        ys = np.array([0.2, 1.0, 3.7])
        np.testing.assert_allclose(t.forward(ys), [t.forward(v) for v in ys], rtol=1e-15)

    def test_lambda_domain(self):
        with pytest.raises(ValueError):
            DualPowerTransform(-0.1)
        with pytest.raises(ValueError):
            DualPowerTransform(LAMBDA_MAX + 0.5)


class TestInverse:
    def test_zero_maps_to_one(self):
        assert DualPowerTransform(0.6).inverse(0.0) == pytest.approx(1.0, rel=1e-15)

    def test_log_inverse(self):
        assert LogTransform().inverse(1.0) == pytest.approx(math.e, rel=1e-15)

    def test_roundtrip_of_forward_example(self):
        t = DualPowerTransform(0.6)
        assert t.inverse(t.forward(2.0)) == pytest.approx(2.0, abs=1e-9)

    def test_large_argument_stays_finite(self):
        # naive (lam*z)^2 would overflow long before this
        t = DualPowerTransform(1.0)
        y = t.inverse(1e300)
        assert np.isfinite(y)
        assert t.forward(y) == pytest.approx(1e300, rel=1e-12)


@given(
    z=st.floats(-30.0, 30.0),
    lam=st.one_of(st.just(0.0), st.floats(0.01, 10.0)),
)
@settings(max_examples=200, deadline=None)
def test_surjectivity_roundtrip(z, lam):
    t = DualPowerTransform(lam)
    back = t.forward(t.inverse(z))
    assert abs(back - z) < 1e-10
    assert abs(back - z) <= 1e-12 * max(1.0, abs(z))


@given(
    lam=st.one_of(st.just(0.0), st.floats(0.0, 10.0)),
    y1=st.floats(1e-3, 1e3),
    y2=st.floats(1e-3, 1e3),
)
@settings(max_examples=200, deadline=None)
def test_monotonicity(lam, y1, y2):
    if y1 == y2:
        return
    lo, hi = sorted((y1, y2))
    t = DualPowerTransform(lam)
    assert t.forward(lo) < t.forward(hi)


def test_continuity_at_zero_lambda():
    t = DualPowerTransform(1e-9)
    for y in np.geomspace(1e-3, 1e3, 41):
        assert abs(t.forward(y) - math.log(y)) < 1e-7


def test_no_jump_across_series_threshold():
    below = DualPowerTransform(LAMBDA_EPS / 2)
    above = DualPowerTransform(LAMBDA_EPS * 2)
    for y in (0.05, 0.9, 7.3):
        assert below.forward(y) == pytest.approx(above.forward(y), rel=1e-12)


class TestDerivatives:
    def test_trivial_at_one(self):
        d = DualPowerTransform(0.6).derivatives(1.0)
        assert d.h == 0.0
        assert d.h_y == 1.0
        assert d.h_lambda == 0.0
        assert d.h_lambda_lambda == 0.0
        assert d.h_y_lambda == 0.0
        assert d.d_score_term == 0.0

    def test_h_y_frozen_value(self):
        d = DualPowerTransform(0.6).derivatives(2.0)
        assert d.h_y == pytest.approx(FROZEN_HY_2_06, rel=1e-14)

    @pytest.mark.parametrize("y,lam", [(2.0, 0.6), (0.37, 1.3), (11.0, 0.08), (5.0, 2.5)])
    def test_against_mpmath_oracle(self, y, lam):
        d = DualPowerTransform(lam).derivatives(y)
        h, h_y, h_lam, h_ll, h_ylam, d_score = mp_derivatives(y, lam)
        assert d.h == pytest.approx(float(h), rel=1e-12)
        assert d.h_y == pytest.approx(float(h_y), rel=1e-12)
        assert d.h_lambda == pytest.approx(float(h_lam), rel=1e-11)
        assert d.h_lambda_lambda == pytest.approx(float(h_ll), rel=1e-10)
        assert d.h_y_lambda == pytest.approx(float(h_ylam), rel=1e-11)
        assert d.d_score_term == pytest.approx(float(d_score), rel=1e-10)

    def test_five_point_stencil_at_example(self):
        # independent finite-difference check of the headline case
        t = DualPowerTransform(0.6)
        step = 1e-3
        offsets = np.array([-2, -1, 1, 2])
        weights = np.array([1, -8, 8, -1]) / 12.0
        fd = sum(
            w * DualPowerTransform(0.6 + o * step).forward(2.0)
            for o, w in zip(offsets, weights)
        ) / step
        assert t.derivatives(2.0).h_lambda == pytest.approx(fd, rel=1e-8)

    def test_score_curvature_closed_form(self):
        # d/dlam(h_ylam/h_y) should equal 4 (log y)^2 / (y^lam + y^-lam)^2
        rng = np.random.default_rng(7)
        for _ in range(40):
            y = float(rng.uniform(0.05, 40.0))
            lam = float(rng.uniform(0.0, 6.0))
            d = DualPowerTransform(lam).derivatives(y)
            direct = 4.0 * np.log(y) ** 2 / (y**lam + y**-lam) ** 2
            assert d.d_score_term == pytest.approx(direct, rel=1e-12, abs=1e-300)
            assert d.d_score_term >= 0.0


@given(
    y=st.one_of(st.floats(0.02, 0.8), st.floats(1.2, 50.0)),
    lam=st.floats(0.05, 8.0),
)
@settings(max_examples=150, deadline=None)
def test_derivatives_match_central_differences(y, lam):
    d = DualPowerTransform(lam).derivatives(y)
    step = np.cbrt(np.finfo(float).eps)

    dl = step * max(1.0, lam)
    fd_lam = (
        DualPowerTransform(lam + dl).forward(y) - DualPowerTransform(lam - dl).forward(y)
    ) / (2 * dl)
    assert d.h_lambda == pytest.approx(fd_lam, rel=2e-6, abs=1e-9)

    dy = step * y
    t = DualPowerTransform(lam)
    fd_y = (t.forward(y + dy) - t.forward(y - dy)) / (2 * dy)
    assert d.h_y == pytest.approx(fd_y, rel=2e-6)

    dl2 = np.sqrt(np.sqrt(np.finfo(float).eps)) * max(1.0, lam)
    fd_ll = (
        DualPowerTransform(lam + dl2).forward(y)
        - 2 * t.forward(y)
        + DualPowerTransform(lam - dl2).forward(y)
    ) / dl2**2
    assert d.h_lambda_lambda == pytest.approx(fd_ll, rel=5e-5, abs=1e-7)

    dl3 = dl2
    dy3 = np.sqrt(np.sqrt(np.finfo(float).eps)) * y
    fd_ylam = (
        DualPowerTransform(lam + dl3).forward(y + dy3)
        - DualPowerTransform(lam - dl3).forward(y + dy3)
        - DualPowerTransform(lam + dl3).forward(y - dy3)
        + DualPowerTransform(lam - dl3).forward(y - dy3)
    ) / (4 * dl3 * dy3)
    assert d.h_y_lambda == pytest.approx(fd_ylam, rel=1e-5, abs=1e-8)


def test_log_transform_derivatives():
    d = LogTransform().derivatives(2.0)
    assert d.h == pytest.approx(math.log(2.0), rel=1e-15)
    assert d.h_y == pytest.approx(0.5, rel=1e-15)
    assert d.h_lambda == 0.0 and d.h_lambda_lambda == 0.0
    assert d.h_y_lambda == 0.0 and d.d_score_term == 0.0


class TestMakeTransform:
    def test_aliases(self):
        assert make_transform("dp", 0.4).lam == 0.4
        assert make_transform("dual-power", 1.2).kind == "dual-power"
        assert make_transform("log").kind == "log"

    def test_log_rejects_lambda(self):
        with pytest.raises(ValueError):
            make_transform("log", 0.3)

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_transform("box-cox", 0.5)


class TestIntegrability:
    def test_degenerate_distribution(self):
        rep = check_integrability(DualPowerTransform(0.6), 0.0, 1e-12)
        assert rep.all_finite
        assert rep.hlam2 == pytest.approx(0.0, abs=1e-10)

    def test_finite_and_quadrature_stable(self):
        r64 = check_integrability(DualPowerTransform(0.6), 0.0, 1.0, n_quad=64)
        r128 = check_integrability(DualPowerTransform(0.6), 0.0, 1.0, n_quad=128)
        assert r64.all_finite and r128.all_finite
        for name in ("h2_hlam2", "hlam2", "abs_hlamlam", "abs_d_score_term"):
            a, b = getattr(r64, name), getattr(r128, name)
            assert a > 0.0
            assert abs(a - b) / b < 0.01

    def test_log_branch_has_no_lambda_moments(self):
        rep = check_integrability(LogTransform(), 0.0, 1.0)
        assert rep.all_finite
        assert rep.h2_hlam2 == 0.0
        assert rep.hlam2 == 0.0
        assert rep.abs_hlamlam == 0.0
        assert rep.abs_d_score_term == 0.0

    def test_rejects_small_rule(self):
        with pytest.raises(ValueError):
            check_integrability(DualPowerTransform(0.6), 0.0, 1.0, n_quad=8)
