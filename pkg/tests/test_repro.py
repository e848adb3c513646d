"""Tests for presets and the convention-game unit mapping."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clri.config import validate
from clri.repro import (
    PRESETS,
    ShohamMapping,
    delay_from_learning_rate,
    error_from_success,
    experiment_final_error,
    learning_rate_from_delay,
    preset,
    shoham_comparison,
    success_from_delay,
    theory_final_error,
)
from clri.theory import DomainError


class TestMapping:
    def test_delay_range_endpoints(self):
        assert delay_from_learning_rate(1 / 6, 6) == pytest.approx(0.0, abs=1e-12)
        assert delay_from_learning_rate(1 / 1206, 6) == pytest.approx(200.0, abs=1e-9)

    @given(st.floats(1e-6, 1 / 6))
    def test_round_trip(self, l):
        assert learning_rate_from_delay(delay_from_learning_rate(l)) == pytest.approx(l, rel=1e-12)

    def test_zero_learning_rate(self):
        with pytest.raises(DomainError):
            delay_from_learning_rate(0.0)

    @pytest.mark.parametrize("d,s", [(0, 3800), (100, 3500), (200, 3000)])
    def test_success_fit(self, d, s):
        assert success_from_delay(d) == s

    @pytest.mark.parametrize("s,e", [(4000, 0.0), (3800, 0.05), (0, 1.0)])
    def test_error_from_success(self, s, e):
        assert error_from_success(s) == e

    @pytest.mark.parametrize("bad", [-1, 201])
    def test_delay_out_of_range(self, bad):
        with pytest.raises(DomainError):
            success_from_delay(bad)

    def test_success_out_of_range(self):
        with pytest.raises(DomainError):
            error_from_success(4001)

    def test_range_of_learning_rates(self):
        lo, hi = ShohamMapping().learning_rate_range
        assert lo == pytest.approx(1 / 1206) and hi == pytest.approx(1 / 6)

    def test_experiment_curve_endpoints(self):
        assert experiment_final_error(1 / 6) == pytest.approx(0.05)
        assert experiment_final_error(1 / 1206) == pytest.approx(0.25)


class TestComparison:
    def test_theory_small_for_fast_learners(self):
        assert theory_final_error(1 / 6) < 0.01

    def test_theory_grows_as_learning_slows(self):
        cmp = shoham_comparison(samples=12)
        assert np.all(np.diff(cmp.theory) < 0)  # learning rates increase along the grid

    def test_max_deviation(self):
        cmp = shoham_comparison()
        assert cmp.learning_rate.size == 50
        assert cmp.max_deviation <= 0.08

    def test_samples_out_of_range(self):
        with pytest.raises(DomainError):
            shoham_comparison(l_samples=[0.5])


class TestPresets:
    def test_fig3_volatility(self):
        assert preset("fig3").volatility == 0.2

    def test_market_impact(self):
        assert preset("market").impact == 0.17

    def test_shoham_impact(self):
        assert preset("shoham").impact == 1 / 99

    @pytest.mark.parametrize("name", PRESETS)
    def test_presets_are_valid(self, name):
        assert validate(preset(name)) == []

    def test_unknown_preset_lists_names(self):
        with pytest.raises(DomainError, match="fig3"):
            preset("fig9")
