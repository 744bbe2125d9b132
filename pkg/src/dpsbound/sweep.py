"""Grid sweeps over attack parameters and Pareto-frontier extraction.

Both scenarios sweep (m_min, q) at fixed block-length cap and emit one
outcome point per grid node.  The frontier marks, per logarithmic gain bin,
the point with the lowest QBER (and, for the trusted scenario, the lowest
double-click rate): parameter regions above it admit no secret key under
the attack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["GridSpec", "CurvePoint", "FrontierPoint", "CurveResult", "build_frontier", "gain_bin"]

GAIN_BINS_PER_DECADE = 60


@dataclass(frozen=True)
class GridSpec:
    """Sweep grid: m_min in [m_min_lo, m_min_hi] (stride m_min_step), q on a uniform grid."""

    m_min_lo: int
    m_min_hi: int
    q_steps: int = 101
    m_min_step: int = 1

    def __post_init__(self) -> None:
        if self.m_min_lo < 1 or self.m_min_hi < self.m_min_lo:
            raise ValueError(f"invalid m_min range [{self.m_min_lo}, {self.m_min_hi}]")
        if self.q_steps < 1:
            raise ValueError(f"q_steps must be positive, got {self.q_steps}")
        if self.m_min_step < 1:
            raise ValueError(f"m_min_step must be positive, got {self.m_min_step}")

    def m_min_values(self) -> list[int]:
        return list(range(self.m_min_lo, self.m_min_hi + 1, self.m_min_step))

    def q_values(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.q_steps)


@dataclass(frozen=True)
class CurvePoint:
    """One evaluated grid node."""

    m_min: int
    q: float
    gain: float
    qber: float
    dc_rate: float
    distance_km: float | None = None


@dataclass(frozen=True)
class FrontierPoint(CurvePoint):
    frontier_kind: str = "min_qber"


@dataclass(frozen=True)
class CurveResult:
    points: list[CurvePoint] = field(default_factory=list)
    frontier: list[FrontierPoint] = field(default_factory=list)


def gain_bin(gain: float, bins_per_decade: int = GAIN_BINS_PER_DECADE) -> int:
    """Logarithmic gain bin index (figures are log-scale in gain)."""
    if gain <= 0:
        raise ValueError(f"gain must be positive for binning, got {gain}")
    return math.floor(math.log10(gain) * bins_per_decade)


def build_frontier(
    points: list[CurvePoint],
    kinds: tuple[str, ...] = ("min_qber",),
    bins_per_decade: int = GAIN_BINS_PER_DECADE,
) -> list[FrontierPoint]:
    """Lower envelopes over the gain bins, one per requested kind.

    ``min_qber`` keeps the lowest-QBER point per bin, ``min_dc`` the lowest
    double-click-rate point.  Zero-gain points must be excluded upstream.
    Output order is fixed (sorted by m_min, then q, then kind) so that
    concurrent sweep evaluation cannot reorder rows.
    """
    attr = {"min_qber": "qber", "min_dc": "dc_rate"}
    best: dict[tuple[str, int], CurvePoint] = {}
    for point in points:
        bin_idx = gain_bin(point.gain, bins_per_decade)
        for kind in kinds:
            key = (kind, bin_idx)
            current = best.get(key)
            if current is None or getattr(point, attr[kind]) < getattr(current, attr[kind]):
                best[key] = point
    frontier = [
        FrontierPoint(**vars(point), frontier_kind=kind) for (kind, _), point in best.items()
    ]
    frontier.sort(key=lambda fp: (fp.m_min, fp.q, fp.frontier_kind))
    return frontier
