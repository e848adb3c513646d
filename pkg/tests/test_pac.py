"""Tests for the PAC bounds."""

import math
import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from clri.pac import (
    PacProblem,
    fixed_target_error,
    hypothesis_count,
    learning_rate_lower_bound,
    sample_complexity,
)
from clri.theory import DomainError


class TestSampleComplexity:
    def test_single_hypothesis(self):
        assert sample_complexity(PacProblem(1, 0.5, 0.5)) == math.ceil(2 * math.log(2)) == 2

    def test_1024_hypotheses(self):
        # 10 * ln(20480) = 99.27...
        assert sample_complexity(PacProblem(1024, 0.1, 0.05)) == 100

    def test_hypothesis_helper(self):
        assert hypothesis_count(2, 10) == 1024
        assert sample_complexity(PacProblem.for_agent(2, 10, 0.1, 0.05)) == 100

    def test_huge_hypothesis_space(self):
        # 20**500 does not fit a float; the bound is still finite.
        m = sample_complexity(PacProblem.for_agent(20, 500, 0.1, 0.05))
        assert m == math.ceil((500 * math.log(20) - math.log(0.05)) / 0.1)

    @pytest.mark.parametrize("eps,gamma", [(0.0, 0.1), (0.1, 0.0), (1.0, 0.1), (0.1, 1.0)])
    def test_parameter_domain(self, eps, gamma):
        with pytest.raises(DomainError):
            PacProblem(10, eps, gamma)

    @given(st.integers(1, 10**6), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_doubling_hypotheses(self, h, eps, gamma):
        m1 = sample_complexity(PacProblem(h, eps, gamma))
        m2 = sample_complexity(PacProblem(2 * h, eps, gamma))
        assert m1 <= m2 <= m1 + math.ceil(math.log(2) / eps)

    @given(st.integers(1, 10**6), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
    def test_monotone_in_epsilon_and_gamma(self, h, eps, gamma):
        m = sample_complexity(PacProblem(h, eps, gamma))
        assert sample_complexity(PacProblem(h, eps * 1.5, gamma)) <= m
        assert sample_complexity(PacProblem(h, eps, gamma * 1.5)) <= m


class TestFixedTargetError:
    def test_zero_error_stays_zero(self):
        assert fixed_target_error(0.0, 0.3, 17) == 0.0

    def test_perfect_learner(self):
        assert fixed_target_error(0.8, 1.0, 1) == 0.0

    def test_matches_iterated_decay(self):
        e = 1.0
        for _ in range(10):
            e = e * (1 - 0.2)
        assert fixed_target_error(1.0, 0.2, 10) == pytest.approx(e, rel=1e-14)
        assert fixed_target_error(1.0, 0.2, 10) == pytest.approx(0.10737, abs=5e-6)

    def test_negative_steps(self):
        with pytest.raises(DomainError):
            fixed_target_error(0.5, 0.2, -1)


class TestLearningRateBound:
    def test_already_at_target(self):
        assert learning_rate_lower_bound(0.3, 0.3, 10) == 0.0

    def test_value(self):
        l = learning_rate_lower_bound(0.5, 0.05, 100)
        assert l == pytest.approx(1 - 0.1 ** (1 / 100), rel=1e-12)
        assert l == pytest.approx(0.02276, abs=5e-6)
        assert fixed_target_error(0.5, l, 100) == pytest.approx(0.05, abs=1e-12)

    def test_zero_initial_error(self):
        with pytest.raises(DomainError, match="e0 = 0"):
            learning_rate_lower_bound(0.0, 0.1, 10)

    def test_non_increasing_in_m(self):
        prev = 1.0
        for m in range(1, 10**4 + 1):
            cur = learning_rate_lower_bound(0.9, 0.01, m)
            assert cur <= prev
            prev = cur

    def test_large_gamma_warns(self):
        with pytest.warns(UserWarning, match="gamma"):
            learning_rate_lower_bound(0.5, 0.1, 10, gamma=0.2)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            learning_rate_lower_bound(0.5, 0.1, 10, gamma=0.05)

    @given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0), st.integers(1, 10**4))
    def test_range_and_round_trip(self, e0, eps, m):
        l = learning_rate_lower_bound(e0, eps, m)
        assert 0.0 <= l < 1.0
        if eps < e0:
            assert abs(fixed_target_error(e0, l, m) - eps) < 1e-9
