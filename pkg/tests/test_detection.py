"""Interferometer output, per-slot click statistics, and dark-count folding."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpsbound import (
    AmplitudeDistribution,
    DetectorModel,
    ProbabilityBoundsError,
    click_error_dc_probability,
    click_error_dc_table,
    flat_coefficients,
    interferometer_amplitudes,
    optimal_coefficients,
    slot_click_probabilities,
    untrusted_error_count,
    vacuum_click_error_dc,
)
from oracles import brute_force_click_error_dc, literal_multinomial_slot_probs


def _random_unit_vector(rng, k):
    vec = rng.random(k) + 0.05
    return vec / np.linalg.norm(vec)


def _detector(eta=1.0, p_dark=0.0):
    return DetectorModel(eta_det=eta, p_dark=p_dark, t_dead=50e-9, f_clock=1e9)


class TestInterferometerAmplitudes:
    def test_single_mode(self):
        amps = interferometer_amplitudes([1.0], 1.0)
        assert np.allclose(amps.e_amp, [0.5, -0.5])
        assert np.allclose(amps.f_amp, [0.5, 0.5])
        assert np.allclose(amps.g_amp, 0.0)  # nothing reaches the loss mode

    def test_all_light_lost(self):
        amps = interferometer_amplitudes(flat_coefficients(3), 0.0)
        assert np.allclose(amps.e_amp, 0.0)
        assert np.allclose(amps.f_amp, 0.0)
        assert np.dot(amps.g_amp, amps.g_amp) == pytest.approx(1.0, abs=1e-12)

    def test_two_mode_flat(self):
        amps = interferometer_amplitudes(flat_coefficients(2), 1.0)
        s = 1.0 / (2.0 * math.sqrt(2.0))
        assert np.allclose(amps.e_amp, [s, 0.0, -s], atol=1e-12)
        assert np.allclose(amps.f_amp, [s, 1.0 / math.sqrt(2.0), s], atol=1e-12)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            interferometer_amplitudes([1.0, 1.0], 1.0)

    def test_rejects_bad_phase(self):
        with pytest.raises(ValueError):
            interferometer_amplitudes([1.0], 1.0, phases=[0.3])

    @settings(max_examples=60, deadline=None, derandomize=True)
    @given(k=st.integers(min_value=1, max_value=24),
           eta=st.floats(min_value=0.0, max_value=1.0),
           seed=st.integers(min_value=0, max_value=2**31))
    def test_unitarity(self, k, eta, seed):
        rng = np.random.default_rng(seed)
        vec = _random_unit_vector(rng, k)
        phases = rng.choice([0.0, math.pi], size=k)
        amps = interferometer_amplitudes(vec, eta, phases)
        total = np.dot(amps.e_amp, amps.e_amp) + np.dot(amps.f_amp, amps.f_amp)
        total += np.dot(amps.g_amp, amps.g_amp)
        assert abs(total - 1.0) <= 1e-12


class TestUntrustedErrorCount:
    def test_single_pulse_is_coin_flip(self):
        assert untrusted_error_count([1.0]) == pytest.approx(0.5)

    def test_flat_is_half_over_k(self):
        assert untrusted_error_count(flat_coefficients(4)) == pytest.approx(0.125, abs=1e-12)

    def test_optimal_k3(self):
        value = untrusted_error_count(optimal_coefficients(3))
        assert value == pytest.approx(0.146447, abs=1e-6)


class TestSlotClickProbabilities:
    def test_single_photon_partitions_and_never_doubles(self):
        amps = interferometer_amplitudes([1.0], 1.0)
        slots = slot_click_probabilities(amps, 1, 1)
        assert np.all(slots.p_dc == 0.0)
        total = float(np.sum(slots.p_d0 + slots.p_d1 + slots.p_dc))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_one_photon_cannot_double_click(self):
        rng = np.random.default_rng(5)
        amps = interferometer_amplitudes(_random_unit_vector(rng, 4), 0.7)
        slots = slot_click_probabilities(amps, 3, 1)
        assert np.all(slots.p_dc == 0.0)

    def test_rejects_zero_photons(self):
        amps = interferometer_amplitudes([1.0], 1.0)
        with pytest.raises(ValueError):
            slot_click_probabilities(amps, 1, 0)

    def test_matches_literal_multinomial_enumeration(self):
        # Inclusion-exclusion closed form vs the literal occupancy sums.
        rng = np.random.default_rng(7)
        for _ in range(50):
            k = int(rng.integers(1, 5))
            m = int(rng.integers(1, 4))
            k_bar = int(rng.integers(0, k + 1))
            eta = float(rng.uniform(0.2, 1.0))
            amps = interferometer_amplitudes(_random_unit_vector(rng, k), eta)
            slots = slot_click_probabilities(amps, k_bar, m)
            literal = literal_multinomial_slot_probs(amps.weights(), k_bar, m)
            assert np.allclose(slots.p_d0, literal["p_d0"], atol=1e-12)
            assert np.allclose(slots.p_d1, literal["p_d1"], atol=1e-12)
            assert np.allclose(slots.p_dc, literal["p_dc"], atol=1e-12)
            assert np.allclose(slots.p_vac, literal["p_vac"], atol=1e-12)

    def test_signal_chain_partitions_outcome_space(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            k = int(rng.integers(1, 6))
            m = int(rng.integers(1, 4))
            k_bar = int(rng.integers(0, k + 1))
            amps = interferometer_amplitudes(
                _random_unit_vector(rng, k), float(rng.uniform(0.1, 1.0))
            )
            slots = slot_click_probabilities(amps, k_bar, m)
            total = float(np.sum(slots.p_d0 + slots.p_d1 + slots.p_dc)) + float(slots.p_vac[0])
            assert total == pytest.approx(1.0, abs=1e-12)


class TestClickErrorDc:
    def test_no_dark_counts_reduce_to_signal_terms(self):
        rng = np.random.default_rng(3)
        amps = interferometer_amplitudes(_random_unit_vector(rng, 3), 0.6)
        slots = slot_click_probabilities(amps, 3, 2)
        click, error, double = click_error_dc_table(amps, 3, 2, _detector(0.6, 0.0))
        assert np.allclose(click, slots.p_d0 + slots.p_d1 + slots.p_dc, atol=1e-15)
        assert np.allclose(error, slots.p_d1 + slots.p_dc / 2.0, atol=1e-15)
        assert np.allclose(double, slots.p_dc, atol=1e-15)

    def test_blind_detector_sees_only_dark_counts(self):
        det = _detector(0.0, 3e-4)
        amps = interferometer_amplitudes(flat_coefficients(2), 0.0)
        click, error, _ = click_error_dc_table(amps, 0, 2, det)
        assert click[0] == pytest.approx(det.either_dark_click, abs=1e-15)
        assert error[0] == pytest.approx(det.either_dark_click / 2.0, abs=1e-15)

    def test_matches_brute_force_with_dark_counts(self):
        amps = interferometer_amplitudes(flat_coefficients(2), 0.5)
        det = _detector(0.5, 1e-3)
        click, error, double = click_error_dc_probability(amps, 2, 2, 1, det)
        b_click, b_error, b_double = brute_force_click_error_dc(
            amps.weights(), 2, 2, 1, 1e-3
        )
        assert click == pytest.approx(b_click, abs=1e-12)
        assert error == pytest.approx(b_error, abs=1e-12)
        assert double == pytest.approx(b_double, abs=1e-12)

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(17)
        for _ in range(12):
            k = int(rng.integers(1, 4))
            m = int(rng.integers(1, 4))
            k_bar = int(rng.integers(0, k + 1))
            n = int(rng.integers(0, k_bar + 1))
            p_dark = float(rng.choice([0.0, 1e-3, 0.05]))
            det = _detector(float(rng.uniform(0.1, 1.0)), p_dark)
            amps = interferometer_amplitudes(_random_unit_vector(rng, k), det.eta_det)
            got = click_error_dc_probability(amps, k_bar, m, n, det)
            want = brute_force_click_error_dc(amps.weights(), k_bar, m, n, p_dark)
            assert got == pytest.approx(want, abs=1e-12)

    def test_error_and_double_bounded_by_click(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            k = int(rng.integers(1, 6))
            det = _detector(float(rng.uniform(0, 1)), float(rng.uniform(0, 0.2)))
            amps = interferometer_amplitudes(_random_unit_vector(rng, k), det.eta_det)
            click, error, double = click_error_dc_table(amps, k, int(rng.integers(1, 4)), det)
            assert np.all(error <= click + 1e-15)
            assert np.all(double <= click + 1e-15)

    def test_single_photon_error_matches_untrusted_count(self):
        # Ideal-detector, single-photon slot sums reproduce the per-block
        # expected error count of the untrusted analysis.
        det = _detector(1.0, 0.0)
        for dist in (AmplitudeDistribution.flat(), AmplitudeDistribution.binomial(),
                     AmplitudeDistribution.optimal()):
            for k in range(1, 11):
                coeffs = dist.coefficients(k)
                amps = interferometer_amplitudes(coeffs, 1.0)
                slots = slot_click_probabilities(amps, k, 1)
                total_err = float(np.sum(slots.p_d1 + slots.p_dc / 2.0))
                assert total_err == pytest.approx(untrusted_error_count(coeffs), abs=1e-12)


class TestPhaseInvariance:
    def test_error_count_invariant_under_mode_phases(self):
        rng = np.random.default_rng(31)
        for k in (2, 3, 6, 11):
            base = optimal_coefficients(k)
            reference = untrusted_error_count(base)
            for _ in range(10):
                phases = rng.choice([0.0, math.pi], size=k)
                signs = np.where(phases > 0, -1.0, 1.0)
                # matching correct-phase convention: a sign flip swaps which
                # detector is wrong; the per-slot error stays |A_{n+1}-A_n|^2/4.
                amps = interferometer_amplitudes(base, 1.0, phases)
                w_e, w_f, _ = amps.weights()
                flips = signs[1:] * signs[:-1] < 0
                wrong = np.empty(k + 1)
                wrong[0] = w_e[0]
                wrong[k] = w_e[k]
                wrong[1:k] = np.where(flips, w_f[1:k], w_e[1:k])
                assert float(np.sum(wrong)) == pytest.approx(reference, abs=1e-12)

    def test_trusted_chain_invariant_under_mode_phases(self):
        rng = np.random.default_rng(37)
        det = _detector(0.55, 2e-3)
        for k, m in ((2, 1), (3, 2), (4, 3)):
            base = optimal_coefficients(k)
            ref_click, ref_error, ref_double = click_error_dc_table(
                interferometer_amplitudes(base, det.eta_det), k, m, det
            )
            for _ in range(6):
                phases = rng.choice([0.0, math.pi], size=k)
                signs = np.where(phases > 0, -1.0, 1.0)
                amps = interferometer_amplitudes(base, det.eta_det, phases)
                flips = signs[1:] * signs[:-1] < 0
                wrong_is_d1 = np.ones(k + 1, dtype=bool)
                wrong_is_d1[1:k] = ~flips
                click, error, double = click_error_dc_table(
                    amps, k, m, det, wrong_is_d1=wrong_is_d1
                )
                assert np.allclose(click, ref_click, atol=1e-12)
                assert np.allclose(error, ref_error, atol=1e-12)
                assert np.allclose(double, ref_double, atol=1e-12)


class TestVacuumOutcomes:
    def test_dark_free(self):
        assert vacuum_click_error_dc(_detector(1.0, 0.0)) == (0.0, 0.0, 0.0)

    def test_preset_dark_probability(self):
        p_dark = 7.8e-6
        click, error, double = vacuum_click_error_dc(_detector(1.0, p_dark))
        assert click == pytest.approx(p_dark * (2 - p_dark), rel=1e-15)
        assert error == pytest.approx(p_dark * (2 - p_dark) / 2.0, rel=1e-15)
        assert double == pytest.approx(p_dark**2, rel=1e-15)
        assert click == pytest.approx(1.55999e-5, abs=1e-10)
        assert error == pytest.approx(7.79997e-6, abs=1e-10)
        assert double == pytest.approx(6.084e-11, abs=1e-15)

    def test_saturated_dark_counts(self):
        assert vacuum_click_error_dc(_detector(1.0, 1.0)) == (1.0, 0.5, 1.0)


class TestProbabilityGuard:
    def test_out_of_range_is_a_hard_error(self):
        from dpsbound.detection import _checked_prob

        with pytest.raises(ProbabilityBoundsError):
            _checked_prob(np.array([1.1]), "test")
        with pytest.raises(ProbabilityBoundsError):
            _checked_prob(np.array([-1e-6]), "test")
        clipped = _checked_prob(np.array([-1e-14, 1.0 + 1e-14]), "test")
        assert clipped[0] == 0.0
        assert clipped[1] == 1.0
