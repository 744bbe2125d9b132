"""Untrusted-device bound: gain, QBER, and equivalent distance.

Here Eve controls Bob's detector imperfections, replaces his apparatus with
an ideal one, and mimics the dead time herself: every resend block carries
exactly one photon and is followed by 1 + pad vacuum slots, so each block
yields exactly one click.  Gain and QBER then follow in closed form from
the block statistics, with direct block summation kept as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .amplitudes import AmplitudeDistribution
from .attack import AttackParams, block_distribution
from .detection import untrusted_error_count
from .sweep import CurvePoint, CurveResult, GridSpec, build_frontier

__all__ = [
    "ChannelModel",
    "AttackOutcome",
    "DistanceResult",
    "NoClicksError",
    "untrusted_counts",
    "untrusted_counts_by_summation",
    "untrusted_gain",
    "untrusted_qber",
    "gain_to_distance",
    "expected_gain_at_distance",
    "untrusted_curve",
]


class NoClicksError(ValueError):
    """The parameter point produces no clicks, so the QBER is undefined."""


@dataclass(frozen=True)
class ChannelModel:
    """Fiber channel plus receiver losses used to translate gain to distance."""

    gamma: float  # fiber loss coefficient, dB/km
    loss_b: float  # Bob interferometer loss, dB
    eta_det: float  # Bob detection efficiency

    def __post_init__(self) -> None:
        if self.gamma <= 0:
            raise ValueError(f"loss coefficient must be positive, got {self.gamma}")
        if self.loss_b < 0:
            raise ValueError(f"receiver loss must be non-negative, got {self.loss_b}")
        if not 0.0 < self.eta_det <= 1.0:
            raise ValueError(f"detection efficiency must lie in (0, 1], got {self.eta_det}")


@dataclass(frozen=True)
class AttackOutcome:
    """Gain, QBER, double-click rate, and equivalent distance at one point."""

    gain: float
    qber: float
    dc_rate: float
    distance_km: float | None = None
    iterations: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.gain <= 1.0:
            raise ValueError(f"gain {self.gain} outside [0, 1]")
        if not 0.0 <= self.qber <= 1.0:
            raise ValueError(f"qber {self.qber} outside [0, 1]")


class DistanceResult(NamedTuple):
    """Equivalent distance; negative km means the gain exceeds what zero fiber yields."""

    km: float
    exceeds_zero_distance_gain: bool


def untrusted_counts(params: AttackParams) -> tuple[float, float]:
    """Closed-form (expected clicks, expected pulses) per emission block."""
    p = params.usd_probability
    if p >= 1.0:
        raise ValueError("closed forms require USD success probability below 1")
    q, m_min, m_max, d = params.q, params.m_min, params.m_max, params.pad
    n_clicks = (q + (1.0 - q) * p) * p**m_min
    n_pulses = (
        d * (q + (1.0 - 2.0 * q) * p - (1.0 - q) * p**2) * p**m_min
        - p ** (m_max + 1)
        + 1.0
    ) / (1.0 - p)
    return n_clicks, n_pulses


def untrusted_counts_by_summation(params: AttackParams) -> tuple[float, float]:
    """Same expectations by direct summation over the block distribution.

    Independent cross-check of the closed forms: one click per resend block,
    k+1+pad pulses per resend block, k+1 per vacuum train.
    """
    blocks = block_distribution(params)
    n_clicks = sum(blocks.p_s.values())
    n_pulses = sum(prob * (k + 1) for k, prob in blocks.p_v.items())
    n_pulses += sum(prob * (k + 1 + params.pad) for k, prob in blocks.p_s.items())
    return n_clicks, n_pulses


def untrusted_gain(params: AttackParams) -> float:
    """Probability that Bob clicks per pulse Alice sends.

    Independent of the amplitude distribution: every resend block produces
    exactly one click regardless of how the photon is spread over modes.
    """
    n_clicks, n_pulses = untrusted_counts(params)
    return n_clicks / n_pulses


def _error_counts(dist: AmplitudeDistribution, ks: list[int]) -> dict[int, float]:
    return {k: untrusted_error_count(dist.coefficients(k)) for k in ks}


def untrusted_qber(params: AttackParams, dist: AmplitudeDistribution) -> float:
    """Error fraction of the sifted key under the attack."""
    blocks = block_distribution(params)
    n_clicks = sum(blocks.p_s.values())
    if n_clicks <= 0.0:
        raise NoClicksError("no resend blocks reach Bob; QBER is undefined")
    errors = _error_counts(dist, sorted(blocks.p_s))
    n_errors = sum(prob * errors[k] for k, prob in blocks.p_s.items())
    return n_errors / n_clicks


def gain_to_distance(gain: float, channel: ChannelModel, mu_alpha: float) -> DistanceResult:
    """Fiber length whose expected click rate matches the given gain.

    Inverts gain = 1 - exp(-mu*eta_det*eta_t) with eta_t = 10^-(gamma*l+L)/10;
    strictly decreasing in gain.  A negative length is returned as-is with
    the flag set: the gain is higher than a zero-length fiber would give.
    """
    if not 0.0 < gain < 1.0:
        raise ValueError(f"gain must lie in (0, 1) for distance inversion, got {gain}")
    if mu_alpha <= 0:
        raise ValueError(f"mean photon number must be positive, got {mu_alpha}")
    km = -(1.0 / channel.gamma) * (
        channel.loss_b
        + 10.0 * math.log10(-math.log1p(-gain) / (mu_alpha * channel.eta_det))
    )
    return DistanceResult(km=km, exceeds_zero_distance_gain=km < 0.0)


def expected_gain_at_distance(km: float, channel: ChannelModel, mu_alpha: float) -> float:
    """Forward model: expected gain of the unattacked link at a fiber length."""
    eta_t = 10.0 ** (-(channel.gamma * km + channel.loss_b) / 10.0)
    return -math.expm1(-mu_alpha * channel.eta_det * eta_t)


def untrusted_curve(
    mu_alpha: float,
    pad: int,
    m_max: int,
    dist: AmplitudeDistribution,
    grid: GridSpec,
    channel: ChannelModel | None = None,
) -> CurveResult:
    """Sweep (m_min, q) and return all (gain, QBER) points plus the frontier.

    Deterministic for a fixed grid; zero-gain points are dropped rather than
    plotted at QBER 0.
    """
    m_min_values = [m for m in grid.m_min_values() if m < m_max]
    if not m_min_values:
        raise ValueError(f"grid has no m_min below m_max={m_max}")
    q_values = grid.q_values()

    # e(k) depends only on k and the distribution; share across grid nodes.
    errors = _error_counts(dist, list(range(1, m_max + 1)))

    points: list[CurvePoint] = []
    for m_min in m_min_values:
        for q in q_values:
            params = AttackParams(
                mu_alpha=mu_alpha, m_min=m_min, m_max=m_max, q=float(q), pad=pad
            )
            blocks = block_distribution(params)
            n_clicks, n_pulses = untrusted_counts(params)
            if n_clicks <= 0.0:
                continue
            gain = n_clicks / n_pulses
            qber = sum(prob * errors[k] for k, prob in blocks.p_s.items()) / sum(
                blocks.p_s.values()
            )
            distance = (
                gain_to_distance(gain, channel, mu_alpha).km if channel is not None else None
            )
            points.append(
                CurvePoint(
                    m_min=m_min,
                    q=float(q),
                    gain=gain,
                    qber=qber,
                    dc_rate=0.0,
                    distance_km=distance,
                )
            )
    if not points:
        raise ValueError("grid produced no clicking parameter points")
    return CurveResult(points=points, frontier=build_frontier(points, kinds=("min_qber",)))
