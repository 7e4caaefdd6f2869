import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from sigm_kit.schedule import (C1, C2, C3, C4, REL_TOL, CustomSchedule, Schedule, ScheduleParams,
                               default_ab, delta_accumulation, deviation_threshold, mean_gap_bound,
                               validate)

# closed forms evaluated with mpmath at 30 digits
AB_FROZEN = {
    1.0: (1.41421356237310, 1.68179283050743),
    1.5: (2.00000000000000, 0.942809041582063),
    2.0: (2.82842712474619, 0.420448207626857),
}

ps = st.floats(1.0, 2.0)
sigmas = st.sampled_from([0.0, 1e-3, 1.0, 1e3])


def test_frozen_constants_match_mpmath():
    with mpmath.workdps(30):
        for p, (a, b) in AB_FROZEN.items():
            mp = mpmath.mpf(p)
            assert float(mpmath.mpf(2) ** ((2 * mp - 1) / 2)) == pytest.approx(a, rel=1e-14)
            assert float(mpmath.mpf(2) ** ((5 - 2 * mp) / 4) * mp ** ((1 - 2 * mp) / 2)) == pytest.approx(b, rel=1e-14)


@pytest.mark.parametrize("p", sorted(AB_FROZEN))
def test_default_ab(p):
    a, b = default_ab(p)
    assert a == pytest.approx(AB_FROZEN[p][0], rel=1e-13)
    assert b == pytest.approx(AB_FROZEN[p][1], rel=1e-13)


def test_default_ab_range():
    with pytest.raises(ValueError):
        default_ab(0.5)
    with pytest.raises(ValueError):
        default_ab(2.5)


@given(p=ps)
def test_b_positive(p):
    assert default_ab(p)[1] > 0


def test_bound_constants():
    assert C1 ** 2 == pytest.approx(32.0, rel=1e-15)
    assert C2 ** 2 == pytest.approx(512.0, rel=1e-15)
    assert C3 == 48.0
    assert C4 ** 2 == pytest.approx(48.0, rel=1e-15)


class TestCoefficients:
    def test_p1_constant(self):
        s = Schedule.default(1.0, 1.0, 1.0)
        for i in (0, 1, 7, 1000):
            al, _, B = s.coefficients(i)
            assert al == pytest.approx(1 / math.sqrt(2), rel=1e-15)
            assert B == pytest.approx(1 / math.sqrt(2), rel=1e-15)

    def test_p2_first(self):
        s = Schedule.default(2.0, 1.0, 1.0)
        al, _, B = s.coefficients(0)
        assert al == pytest.approx(2 ** -1.5, rel=1e-15)
        assert al == pytest.approx(B, rel=1e-15)

    def test_noiseless_beta_is_L(self):
        s = Schedule.default(1.5, 3.0, 0.0)
        beta = s.beta(np.arange(100))
        np.testing.assert_allclose(beta, 3.0, rtol=1e-11)
        assert np.all(beta > 3.0)

    @given(p=ps, L=st.floats(0.1, 10.0), sigma=st.floats(1e-3, 10.0), R=st.floats(0.1, 10.0),
           i=st.integers(0, 10 ** 6))
    def test_beta_above_L(self, p, L, sigma, R, i):
        assert Schedule.default(p, L, sigma, R).beta(i) > L

    def test_array_and_scalar_agree(self):
        s = Schedule.default(1.3, 2.0, 0.5, 2.0)
        idx = np.arange(50)
        for f in (s.alpha, s.beta, s.B):
            np.testing.assert_allclose(f(idx), [float(f(i)) for i in idx], rtol=1e-15)

    def test_bad_params(self):
        with pytest.raises(ValueError):
            ScheduleParams(1.0, 0.0)
        with pytest.raises(ValueError):
            ScheduleParams(1.0, 1.0, -1.0)
        with pytest.raises(ValueError):
            ScheduleParams(1.0, 1.0, a=0.5)


class TestTau:
    def test_p1_is_one(self):
        s = Schedule.default(1.0, 1.0)
        assert all(s.tau(k) == pytest.approx(1.0, rel=1e-15) for k in range(100))

    def test_p2_closed_form(self):
        s = Schedule.default(2.0, 1.0)
        assert s.tau(0) == pytest.approx(2 / 3, rel=1e-14)
        for k in (1, 10, 999, 10 ** 5):
            assert s.tau(k) == pytest.approx(2 / (k + 3), rel=1e-13)

    @given(p=ps, k=st.integers(0, 10 ** 5))
    def test_in_unit_interval(self, p, k):
        t = Schedule.default(p, 1.0).tau(k)
        assert 0 < t <= 1 + REL_TOL


class TestPartialSums:
    def test_p1_linear(self):
        s = Schedule.default(1.0, 1.0)
        for k in (0, 5, 1000):
            assert s.partial_sum_A(k) == pytest.approx((k + 1) / math.sqrt(2), rel=1e-13)

    def test_matches_mpmath_sum(self):
        s = Schedule.default(1.7, 1.0)
        a = s.params.a
        with mpmath.workdps(30):
            exact = mpmath.fsum((1 / mpmath.mpf(a)) * ((i + mpmath.mpf(1.7)) / mpmath.mpf(1.7)) ** mpmath.mpf(0.7)
                                for i in range(20001))
        assert s.partial_sum_A(20000) == pytest.approx(float(exact), rel=1e-14)

    def test_memo_transparent(self):
        s1, s2 = Schedule.default(1.4, 1.0), Schedule.default(1.4, 1.0)
        s1.partial_sum_A(500)
        vals = [s2.partial_sum_A(k) for k in (3, 700, 200)]
        assert vals == [s1.partial_sum_A(k) for k in (3, 700, 200)]
        assert s2.partial_sum_A(0) == s2.alpha(0)

    def test_negative_index(self):
        with pytest.raises(ValueError):
            Schedule.default(1.0, 1.0).partial_sum_A(-1)

    @given(p=ps, k=st.integers(0, 20000))
    def test_lower_estimate(self, p, k):
        s = Schedule.default(p, 1.0)
        assert s.partial_sum_A(k) >= (1 / s.params.a) * ((k + p) / p) ** p * (1 - REL_TOL)

    @given(p=ps, k=st.integers(0, 5000))
    def test_squared_weights(self, p, k):
        s = Schedule.default(p, 1.0)
        ratio = float(np.sum(s.alpha(np.arange(k + 1)) ** 2)) / s.partial_sum_A(k) ** 2
        assert ratio <= 2 * p / (k + p) * (1 + REL_TOL)


class TestValidate:
    @given(p=ps, sigma=sigmas, L=st.floats(0.1, 100.0), R=st.floats(0.1, 100.0))
    def test_defaults_pass(self, p, sigma, L, R):
        assert validate(Schedule.default(p, L, sigma, R), 3000).passed

    def test_halved_B_fails(self):
        base = Schedule.default(1.0, 1.0, 1.0)
        a = base.params.a
        custom = CustomSchedule(1.0, base.alpha, base.beta, lambda i: float(base.alpha(i)) ** 2 * a / 2)
        rep = validate(custom, 100)
        assert not rep.passed
        assert rep.first_violation["alpha^2*beta<=B*beta_prev"] == 1
        assert rep.first[1] == 0

    def test_large_first_weight_fails(self):
        custom = CustomSchedule(1.0, lambda i: 1.5, lambda i: 2.0, lambda i: 1.5)
        rep = validate(custom, 10)
        assert "alpha0_in_(0,1]" in rep.first_violation

    def test_needs_k_max(self):
        with pytest.raises(ValueError):
            validate(Schedule.default(1.0, 1.0), 0)


class TestBounds:
    def test_mean_gap_example(self):
        s = Schedule.default(2.0, 1.0, 0.0, 1.0)
        assert mean_gap_bound(s, 0.0, 10) == pytest.approx(4 * math.sqrt(2) / 100, rel=1e-14)

    def test_mean_gap_decreasing_noiseless(self):
        s = Schedule.default(1.5, 2.0, 0.0, 3.0)
        b = mean_gap_bound(s, 0.0, np.arange(1, 500))
        assert np.all(np.diff(b) < 0)

    def test_mean_gap_no_accumulation_at_p1(self):
        s = Schedule.default(1.0, 1.0, 0.0, 1.0)
        assert mean_gap_bound(s, 0.1, 10 ** 9) == pytest.approx(C3 * 0.1, rel=1e-6)

    def test_pure_rate_term(self):
        s = Schedule.default(2.0, 3.0, 0.0, 2.0)
        for k in (1, 17, 1000):
            assert mean_gap_bound(s, 0.0, k) == C1 * 3.0 * 4.0 / k ** 2

    def test_deviation_example(self):
        s = Schedule.default(1.0, 1.0, 1.0, 1.0)
        want = 4 * math.sqrt(2) / 100 + 16 * math.sqrt(2) * 4 / 10 + 4 * math.sqrt(3) * math.sqrt(3) / 10
        assert want == pytest.approx(10.3075, abs=5e-5)
        assert deviation_threshold(s, 0.0, 1.0, 3.0, 100) == pytest.approx(want, rel=1e-14)

    def test_deviation_at_zero_omega(self):
        s = Schedule.default(1.3, 1.0, 0.7, 2.0)
        assert deviation_threshold(s, 0.01, 5.0, 0.0, 40) == pytest.approx(mean_gap_bound(s, 0.01, 40), rel=1e-14)

    @given(o1=st.floats(0.0, 20.0), o2=st.floats(0.0, 20.0))
    def test_deviation_monotone(self, o1, o2):
        s = Schedule.default(1.5, 1.0, 1.0, 1.0)
        lo, hi = sorted((o1, o2))
        assert deviation_threshold(s, 0.0, 2.0, lo, 10) <= deviation_threshold(s, 0.0, 2.0, hi, 10)

    def test_domain(self):
        s = Schedule.default(1.0, 1.0)
        with pytest.raises(ValueError):
            mean_gap_bound(s, 0.0, 0)
        with pytest.raises(ValueError):
            deviation_threshold(s, 0.0, 1.0, -1.0, 5)

    @given(p=ps, k=st.integers(1, 3000))
    def test_bias_factor_dominated(self, p, k):
        # sum B_i / A_k is what the k^{p-1} bias term bounds, up to the constant
        s = Schedule.default(p, 1.0)
        assert delta_accumulation(s, k) <= C3 * k ** (p - 1)
