"""Eve-side parameterization of the sequential USD attack.

The attack is a renewal process over emission blocks: Eve measures every
pulse Alice sends with unambiguous state discrimination (USD) and counts
runs of consecutive conclusive results.  A run of length k terminated by an
inconclusive result makes her forward either a resend block (a weak signal
train spanning k temporal modes plus padding vacuum) or a train of k+1
vacuum pulses, depending on how k compares with her strategy thresholds.
This module holds the strategy knobs and the a-priori block statistics that
both the untrusted- and the trusted-device bounds consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "AttackParams",
    "BlockDistribution",
    "usd_success_probability",
    "block_distribution",
    "dead_time_pad",
]


def usd_success_probability(mu_alpha: float) -> float:
    """Probability that one USD measurement of a +-alpha coherent pulse is conclusive.

    Equals 1 - exp(-2*mu_alpha) for mean photon number mu_alpha; strictly
    increasing and bounded by 1.
    """
    if mu_alpha < 0:
        raise ValueError(f"mean photon number must be non-negative, got {mu_alpha}")
    return -math.expm1(-2.0 * mu_alpha)


def dead_time_pad(t_dead: float, f_clock: float) -> int:
    """Number of clock slots covered by one detector dead time, rounded up.

    ``t_dead`` is in seconds, ``f_clock`` in hertz.  The product is snapped to
    the nearest integer before the ceiling when it lies within 1e-9 of one,
    so that exact physical inputs (e.g. 50 ns at 10 GHz) are not pushed up a
    slot by float representation error.
    """
    if f_clock <= 0:
        raise ValueError(f"clock frequency must be positive, got {f_clock}")
    if t_dead < 0:
        raise ValueError(f"dead time must be non-negative, got {t_dead}")
    slots = t_dead * f_clock
    nearest = round(slots)
    if abs(slots - nearest) <= 1e-9 * max(1.0, abs(slots)):
        return int(nearest)
    return math.ceil(slots)


@dataclass(frozen=True)
class AttackParams:
    """Strategy knobs of one sequential-attack parameter point.

    ``m_min``/``m_max`` bound the run lengths that trigger a resend block,
    ``q`` is the probability of resending (rather than staying silent) at a
    run of exactly ``m_min``, and ``pad`` is the number of extra vacuum
    pulses appended after each resend block (the dead-time padding in the
    untrusted scenario; the detector dead time in slots in the trusted one).

    The USD success probability is normally derived from ``mu_alpha``; tests
    and oracles may instead fix it directly via :meth:`from_usd_probability`,
    in which case ``mu_alpha`` is back-filled from the given value and
    ``p_source`` records which path was used.
    """

    mu_alpha: float
    m_min: int
    m_max: int
    q: float
    pad: int
    p: float | None = None

    def __post_init__(self) -> None:
        if self.p is not None:
            if not 0.0 <= self.p <= 1.0:
                raise ValueError(f"USD probability must lie in [0, 1], got {self.p}")
            if self.mu_alpha is None:
                # -ln(1-p)/2 inverts usd_success_probability; inf at p=1.
                mu = math.inf if self.p == 1.0 else -0.5 * math.log1p(-self.p)
                object.__setattr__(self, "mu_alpha", mu)
        else:
            if self.mu_alpha is None or not self.mu_alpha > 0:
                raise ValueError(
                    f"mean photon number must be positive, got {self.mu_alpha}"
                )
        if not isinstance(self.m_min, int) or self.m_min < 1:
            raise ValueError(f"m_min must be a positive integer, got {self.m_min}")
        if not isinstance(self.m_max, int) or self.m_max <= self.m_min:
            raise ValueError(
                f"m_max must be an integer exceeding m_min={self.m_min}, got {self.m_max}"
            )
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")
        if not isinstance(self.pad, int) or self.pad < 0:
            raise ValueError(f"pad must be a non-negative integer, got {self.pad}")

    @classmethod
    def from_usd_probability(
        cls, p: float, m_min: int, m_max: int, q: float, pad: int
    ) -> "AttackParams":
        """Build params with the per-pulse USD success probability fixed directly."""
        return cls(mu_alpha=None, m_min=m_min, m_max=m_max, q=q, pad=pad, p=p)

    @property
    def usd_probability(self) -> float:
        """Per-pulse USD success probability p."""
        if self.p is not None:
            return self.p
        return usd_success_probability(self.mu_alpha)

    @property
    def p_source(self) -> str:
        """Whether p came from ``mu_alpha`` or was supplied directly."""
        return "direct" if self.p is not None else "mu_alpha"


@dataclass(frozen=True)
class BlockDistribution:
    """A-priori probabilities of the blocks Eve emits.

    ``p_s[k]`` is the probability of a resend block spanning k signal modes
    (plus its trailing vacuum padding); ``p_v[k]`` the probability of a train
    of k+1 vacuum pulses.  Together they partition the per-block sample
    space, so the stored masses sum to one.
    """

    p_s: dict[int, float]
    p_v: dict[int, float]
    p_usd: float
    m_min: int
    m_max: int

    def __post_init__(self) -> None:
        for name, table in (("p_s", self.p_s), ("p_v", self.p_v)):
            for k, value in table.items():
                if not 0.0 <= value <= 1.0:
                    raise ValueError(f"{name}[{k}]={value} outside [0, 1]")
        total = sum(self.p_s.values()) + sum(self.p_v.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"block probabilities sum to {total!r}, not 1")

    def as_arrays(self):
        """Dense (signal, vacuum) probability arrays indexed by k in [0, m_max]."""
        import numpy as np

        p_s = np.zeros(self.m_max + 1)
        p_v = np.zeros(self.m_max + 1)
        for k, value in self.p_s.items():
            p_s[k] = value
        for k, value in self.p_v.items():
            p_v[k] = value
        return p_s, p_v


def block_distribution(params: AttackParams) -> BlockDistribution:
    """Block statistics of the run-length process for one parameter point.

    Signal blocks carry geometric weight p^k(1-p) for m_min < k < m_max,
    weight q*p^m_min*(1-p) at the threshold, and the full tail mass p^m_max
    at the forced stop; vacuum trains carry the complementary masses.
    """
    p = params.usd_probability
    m_min, m_max, q = params.m_min, params.m_max, params.q

    p_s: dict[int, float] = {}
    p_v: dict[int, float] = {}
    for k in range(m_min):
        p_v[k] = p**k * (1.0 - p)
    p_v[m_min] = (1.0 - q) * p**m_min * (1.0 - p)
    p_s[m_min] = q * p**m_min * (1.0 - p)
    for k in range(m_min + 1, m_max):
        p_s[k] = p**k * (1.0 - p)
    p_s[m_max] = p**m_max
    return BlockDistribution(p_s=p_s, p_v=p_v, p_usd=p, m_min=m_min, m_max=m_max)
