"""Bob's interferometer-plus-threshold-detector mathematics.

One arm of Bob's interferometer delays the train by one clock slot, so a
block spanning input modes k..1 (mode k arrives first) followed by one
vacuum produces output slots n = k..0, where slot n interferes input modes
n+1 and n.  Detector losses are folded into a single beam splitter in front
of two ideal threshold detectors; dark counts fire independently per slot
and per detector.

This module computes the per-mode output amplitudes, the expected errors per
single-photon block (untrusted scenario), and the per-slot click / error /
double-click probabilities for m-photon blocks whose first slots may be
masked by a running dead time (trusted scenario).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attack import dead_time_pad

__all__ = [
    "DetectorModel",
    "ModeAmplitudes",
    "SlotClickProbabilities",
    "ProbabilityBoundsError",
    "interferometer_amplitudes",
    "untrusted_error_count",
    "slot_click_probabilities",
    "click_error_dc_probability",
    "click_error_dc_table",
    "vacuum_click_error_dc",
]

_PROB_SLACK = 1e-12


class ProbabilityBoundsError(ArithmeticError):
    """A computed probability fell outside [0, 1] by more than the float slack."""


def _checked_prob(values: np.ndarray, what: str) -> np.ndarray:
    """Clamp to [0, 1] after verifying the raw values only drift by rounding.

    Clamping without the check would mask formula bugs, so larger violations
    are hard errors.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size and (arr.min() < -_PROB_SLACK or arr.max() > 1.0 + _PROB_SLACK):
        raise ProbabilityBoundsError(
            f"{what} outside [0,1]: min={arr.min()!r} max={arr.max()!r}"
        )
    return np.clip(arr, 0.0, 1.0)


@dataclass(frozen=True)
class DetectorModel:
    """Bob's detector pair: efficiency, dark counts, dead time, clock rate."""

    eta_det: float
    p_dark: float
    t_dead: float
    f_clock: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.eta_det <= 1.0:
            raise ValueError(f"detection efficiency must lie in [0, 1], got {self.eta_det}")
        if not 0.0 <= self.p_dark <= 1.0:
            raise ValueError(f"dark-count probability must lie in [0, 1], got {self.p_dark}")
        if self.t_dead < 0:
            raise ValueError(f"dead time must be non-negative, got {self.t_dead}")
        if self.f_clock <= 0:
            raise ValueError(f"clock frequency must be positive, got {self.f_clock}")

    @property
    def either_dark_click(self) -> float:
        """Probability that at least one detector dark-fires in a slot."""
        return self.p_dark * (2.0 - self.p_dark)

    def dead_time_slots(self) -> int:
        """Dead time expressed in clock slots (rounded up)."""
        return dead_time_pad(self.t_dead, self.f_clock)


@dataclass(frozen=True)
class ModeAmplitudes:
    """Single-photon wavefunction at the detector and loss output modes.

    ``e_amp[n]``/``f_amp[n]`` are the amplitudes at detectors D1/D0 in output
    slot n (n = 0..k); ``g_amp[s-1]`` is the amplitude in the loss mode of
    input slot s (s = 1..k).  Squared magnitudes sum to one.
    """

    e_amp: np.ndarray
    f_amp: np.ndarray
    g_amp: np.ndarray

    def __post_init__(self) -> None:
        total = (
            float(np.sum(np.abs(self.e_amp) ** 2))
            + float(np.sum(np.abs(self.f_amp) ** 2))
            + float(np.sum(np.abs(self.g_amp) ** 2))
        )
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"mode amplitudes have squared norm {total!r}, not 1")
        if self.e_amp.shape != self.f_amp.shape or self.e_amp.shape[0] != self.g_amp.shape[0] + 1:
            raise ValueError("inconsistent mode-amplitude shapes")

    @property
    def k(self) -> int:
        """Number of signal modes in the block."""
        return self.e_amp.shape[0] - 1

    def weights(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Occupation probabilities (|e|^2, |f|^2, |g|^2) per output mode."""
        return (
            np.abs(self.e_amp) ** 2,
            np.abs(self.f_amp) ** 2,
            np.abs(self.g_amp) ** 2,
        )


def _phase_signs(k: int, phases: Sequence[float] | None) -> np.ndarray:
    if phases is None:
        return np.ones(k)
    arr = np.asarray(phases, dtype=float)
    if arr.shape != (k,):
        raise ValueError(f"need one phase per mode, got shape {arr.shape} for k={k}")
    signs = np.empty(k)
    for i, theta in enumerate(arr):
        if abs(theta) <= 1e-12:
            signs[i] = 1.0
        elif abs(theta - math.pi) <= 1e-12:
            signs[i] = -1.0
        else:
            raise ValueError(f"phases must be 0 or pi, got {theta}")
    return signs


def interferometer_amplitudes(
    coeffs: Sequence[float],
    eta_det: float,
    phases: Sequence[float] | None = None,
) -> ModeAmplitudes:
    """Propagate a normalized k-mode block through interferometer and loss.

    With eta = sqrt(eta_det)/2, slot n of detector D1 receives the
    difference of adjacent (phase-signed) amplitudes and D0 their sum; the
    boundary slots interfere with vacuum.  The loss splitter keeps the
    remaining sqrt(1-eta_det) fraction per input mode.
    """
    a = np.asarray(coeffs, dtype=float)
    if a.ndim != 1 or a.shape[0] < 1:
        raise ValueError(f"amplitude vector must be 1-D and non-empty, got shape {a.shape}")
    if abs(float(np.sum(a * a)) - 1.0) > 1e-9:
        raise ValueError("amplitude vector is not normalized")
    if not 0.0 <= eta_det <= 1.0:
        raise ValueError(f"detection efficiency must lie in [0, 1], got {eta_det}")
    k = a.shape[0]
    signed = a * _phase_signs(k, phases)

    eta = math.sqrt(eta_det) / 2.0
    e_amp = np.zeros(k + 1)
    f_amp = np.zeros(k + 1)
    e_amp[0] = eta * signed[0]
    f_amp[0] = eta * signed[0]
    if k > 1:
        e_amp[1:k] = eta * (signed[1:] - signed[:-1])
        f_amp[1:k] = eta * (signed[1:] + signed[:-1])
    e_amp[k] = -eta * signed[k - 1]
    f_amp[k] = eta * signed[k - 1]
    g_amp = math.sqrt(1.0 - eta_det) * signed
    return ModeAmplitudes(e_amp=e_amp, f_amp=f_amp, g_amp=g_amp)


def untrusted_error_count(coeffs: Sequence[float]) -> float:
    """Expected errors per single-photon block with ideal detectors.

    Equals (|A_1|^2 + sum |A_{n+1}-A_n|^2 + |A_k|^2)/4; the boundary terms
    are the 50/50 vacuum-interference slots.  Accepts complex vectors so the
    phase-freedom property can be probed.
    """
    a = np.asarray(coeffs)
    if a.ndim != 1 or a.shape[0] < 1:
        raise ValueError(f"amplitude vector must be 1-D and non-empty, got shape {a.shape}")
    total = float(np.abs(a[0]) ** 2 + np.abs(a[-1]) ** 2)
    if a.shape[0] > 1:
        total += float(np.sum(np.abs(a[1:] - a[:-1]) ** 2))
    return total / 4.0


@dataclass(frozen=True)
class SlotClickProbabilities:
    """Signal-photon slot outcomes, conditioned on no click later in the live window.

    Index n runs over 0..k_bar (slot k_bar is seen first).  ``p_d0[n]`` is the
    probability that only D0 clicks in slot n and neither detector clicked in
    slots n+1..k_bar; ``p_d1``/``p_dc`` likewise for D1 alone and for both;
    ``p_vac[n]`` is the probability of no click anywhere in slots n..k_bar.
    Dark counts are not included here.
    """

    p_d0: np.ndarray
    p_d1: np.ndarray
    p_dc: np.ndarray
    p_vac: np.ndarray
    k_bar: int


def slot_click_probabilities(amps: ModeAmplitudes, k_bar: int, m: int) -> SlotClickProbabilities:
    """Slot-resolved click probabilities for an m-photon block.

    The m photons occupy output modes independently with the squared-
    amplitude weights, so "no photon in a forbidden set, at least one in a
    required mode" reduces to differences of powers (inclusion-exclusion
    over the m-fold product), which matches the literal multinomial sums
    exactly.
    """
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise ValueError(f"photon number must be a positive integer, got {m}")
    k = amps.k
    if not 0 <= k_bar <= k:
        raise ValueError(f"live window k_bar={k_bar} outside [0, {k}]")
    w_e, w_f, _ = amps.weights()

    # prefix[i] = sum over slots < i of (wE + wF); live-window tail sums
    # follow as differences.
    prefix = np.concatenate(([0.0], np.cumsum(w_e + w_f)))
    n = np.arange(k_bar + 1)
    high = prefix[k_bar + 1]
    base_all = 1.0 - (high - prefix[n])        # no photon in slots n..k_bar
    base_after = 1.0 - (high - prefix[n + 1])  # no photon in slots n+1..k_bar

    vac = base_all**m
    d0 = (base_after - w_e[n]) ** m - vac
    d1 = (base_after - w_f[n]) ** m - vac
    if m == 1:
        dc = np.zeros_like(vac)  # one photon cannot trigger both detectors
    else:
        dc = base_after**m - (base_after - w_e[n]) ** m - (base_after - w_f[n]) ** m + vac

    return SlotClickProbabilities(
        p_d0=_checked_prob(d0, "p_d0"),
        p_d1=_checked_prob(d1, "p_d1"),
        p_dc=_checked_prob(dc, "p_dc"),
        p_vac=_checked_prob(vac, "p_vac"),
        k_bar=int(k_bar),
    )


def click_error_dc_table(
    amps: ModeAmplitudes,
    k_bar: int,
    m: int,
    detector: DetectorModel,
    wrong_is_d1: Sequence[bool] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-slot click / error / double-click probabilities with dark counts.

    Combines the signal-only slot outcomes with independent dark counts: a
    click in slot n requires no dark click in the k_bar-n later live slots,
    and may be signal, dark on a signal-quiet window, or both.  Errors count
    a lone wrong-detector click plus half of every double click.

    ``wrong_is_d1`` flags which detector is the wrong one per slot (default:
    D1 everywhere, the all-zero-phase convention); it exists for the
    phase-invariance checks only.
    """
    slots = slot_click_probabilities(amps, k_bar, m)
    p_d = detector.p_dark
    big_pd = detector.either_dark_click
    n = np.arange(k_bar + 1)
    quiet = (1.0 - big_pd) ** (k_bar - n)

    if wrong_is_d1 is None:
        wrong, right = slots.p_d1, slots.p_d0
    else:
        flags = np.asarray(wrong_is_d1, dtype=bool)
        if flags.shape != (k_bar + 1,):
            raise ValueError(f"need one wrong-detector flag per slot, got {flags.shape}")
        wrong = np.where(flags, slots.p_d1, slots.p_d0)
        right = np.where(flags, slots.p_d0, slots.p_d1)

    signal_click = slots.p_d0 + slots.p_d1 + slots.p_dc
    click = signal_click * quiet + big_pd * quiet * slots.p_vac
    error = quiet * (
        (1.0 - p_d / 2.0) * wrong
        + (p_d / 2.0) * right
        + slots.p_dc / 2.0
        + p_d * (1.0 - p_d / 2.0) * slots.p_vac
    )
    double = quiet * (
        p_d * (slots.p_d0 + slots.p_d1) + slots.p_dc + p_d**2 * slots.p_vac
    )
    return (
        _checked_prob(click, "p_click"),
        _checked_prob(error, "p_error"),
        _checked_prob(double, "p_double"),
    )


def click_error_dc_probability(
    amps: ModeAmplitudes,
    k_bar: int,
    m: int,
    n: int,
    detector: DetectorModel,
) -> tuple[float, float, float]:
    """Click / error / double-click probability in slot n of a live window."""
    if not 0 <= n <= k_bar:
        raise ValueError(f"slot n={n} outside [0, {k_bar}]")
    click, error, double = click_error_dc_table(amps, k_bar, m, detector)
    return float(click[n]), float(error[n]), float(double[n])


def vacuum_click_error_dc(detector: DetectorModel) -> tuple[float, float, float]:
    """Click, error, and double-click probabilities for a vacuum slot.

    Everything is dark-count driven: either detector fires with
    P_d = p_dark(2 - p_dark), half of those are errors (lone wrong-detector
    clicks plus coin-flipped double clicks), and both fire with p_dark^2.
    """
    big_pd = detector.either_dark_click
    return big_pd, big_pd / 2.0, detector.p_dark**2
