"""Attack parameterization and block statistics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpsbound import AttackParams, block_distribution, dead_time_pad, usd_success_probability


class TestUsdSuccessProbability:
    def test_zero_intensity(self):
        assert usd_success_probability(0.0) == 0.0

    def test_preset_intensities(self):
        # High-precision evaluations of 1 - exp(-2 mu).
        assert usd_success_probability(0.2) == pytest.approx(0.329679953964, abs=1e-6)
        assert usd_success_probability(0.17) == pytest.approx(0.288229677237, abs=1e-6)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            usd_success_probability(-0.1)

    def test_strictly_increasing_and_bounded(self):
        grid = np.linspace(0.0, 5.0, 400)
        values = [usd_success_probability(mu) for mu in grid]
        assert all(b > a for a, b in zip(values, values[1:]))
        assert all(v < 1.0 for v in values)


class TestDeadTimePad:
    def test_measured_clock_rates(self):
        assert dead_time_pad(50e-9, 10e9) == 500
        assert dead_time_pad(50e-9, 1e9) == 50

    def test_zero_dead_time(self):
        assert dead_time_pad(0.0, 1e9) == 0

    def test_fractional_rounds_up(self):
        assert dead_time_pad(1.5, 1.0) == 2
        assert dead_time_pad(2.0, 1.0) == 2

    def test_invalid_clock(self):
        with pytest.raises(ValueError):
            dead_time_pad(1e-9, 0.0)
        with pytest.raises(ValueError):
            dead_time_pad(-1.0, 1e9)


class TestAttackParams:
    def test_rejects_equal_thresholds(self):
        with pytest.raises(ValueError):
            AttackParams(mu_alpha=0.2, m_min=3, m_max=3, q=0.5, pad=0)

    def test_rejects_bad_q_mu_pad(self):
        with pytest.raises(ValueError):
            AttackParams(mu_alpha=0.2, m_min=1, m_max=2, q=1.5, pad=0)
        with pytest.raises(ValueError):
            AttackParams(mu_alpha=0.0, m_min=1, m_max=2, q=0.5, pad=0)
        with pytest.raises(ValueError):
            AttackParams(mu_alpha=0.2, m_min=1, m_max=2, q=0.5, pad=-1)

    def test_direct_probability_path(self):
        params = AttackParams.from_usd_probability(0.3, 2, 4, 0.5, 10)
        assert params.usd_probability == 0.3
        assert params.p_source == "direct"
        assert params.mu_alpha == pytest.approx(-0.5 * math.log(0.7))

    def test_mu_path_records_source(self):
        params = AttackParams(mu_alpha=0.2, m_min=1, m_max=2, q=0.5, pad=0)
        assert params.p_source == "mu_alpha"
        assert params.usd_probability == pytest.approx(usd_success_probability(0.2))


class TestBlockDistribution:
    def test_worked_example(self):
        params = AttackParams.from_usd_probability(0.3, 2, 4, 0.5, 0)
        blocks = block_distribution(params)
        assert blocks.p_s[2] == pytest.approx(0.0315, abs=1e-12)
        assert blocks.p_s[3] == pytest.approx(0.0189, abs=1e-12)
        assert blocks.p_s[4] == pytest.approx(0.0081, abs=1e-12)
        assert blocks.p_v[0] == pytest.approx(0.7, abs=1e-12)
        assert blocks.p_v[1] == pytest.approx(0.21, abs=1e-12)
        assert blocks.p_v[2] == pytest.approx(0.0315, abs=1e-12)
        total = sum(blocks.p_s.values()) + sum(blocks.p_v.values())
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_q_extremes(self):
        full = block_distribution(AttackParams.from_usd_probability(0.4, 2, 5, 1.0, 0))
        assert full.p_v[2] == 0.0
        silent = block_distribution(AttackParams.from_usd_probability(0.4, 2, 5, 0.0, 0))
        assert silent.p_s[2] == 0.0

    @settings(max_examples=80, deadline=None, derandomize=True)
    @given(
        p=st.floats(min_value=0.0, max_value=0.999),
        m_min=st.integers(min_value=1, max_value=12),
        extra=st.integers(min_value=1, max_value=20),
        q=st.floats(min_value=0.0, max_value=1.0),
    )
    def test_total_mass_is_one(self, p, m_min, extra, q):
        params = AttackParams.from_usd_probability(p, m_min, m_min + extra, q, 0)
        blocks = block_distribution(params)
        total = sum(blocks.p_s.values()) + sum(blocks.p_v.values())
        assert abs(total - 1.0) <= 1e-12

    def test_geometric_decay_at_q_extremes(self):
        for q in (0.0, 1.0):
            params = AttackParams.from_usd_probability(0.35, 3, 9, q, 0)
            blocks = block_distribution(params)
            v_keys = sorted(k for k, v in blocks.p_v.items() if v > 0)
            for a, b in zip(v_keys, v_keys[1:]):
                assert blocks.p_v[b] <= blocks.p_v[a] + 1e-15
            s_keys = sorted(k for k, v in blocks.p_s.items() if v > 0)
            interior = [k for k in s_keys if k < params.m_max]
            for a, b in zip(interior, interior[1:]):
                assert blocks.p_s[b] <= blocks.p_s[a] + 1e-15
            # forced-stop boundary keeps the full geometric tail
            assert blocks.p_s[params.m_max] >= 0.35**params.m_max * (1 - 0.35) - 1e-15

    def test_arrays_roundtrip(self):
        params = AttackParams.from_usd_probability(0.25, 2, 5, 0.3, 0)
        blocks = block_distribution(params)
        p_s, p_v = blocks.as_arrays()
        assert p_s.shape == (6,)
        assert p_s[2] == blocks.p_s[2]
        assert p_v[0] == blocks.p_v[0]
        assert p_s[0] == 0.0
