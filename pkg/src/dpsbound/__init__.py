"""Security-bound calculator for DPS QKD under sequential USD attacks.

Computes gain-versus-QBER and gain-versus-double-click upper-bound curves,
plus equivalent transmission distances, for differential-phase-shift QKD
attacked by sequential unambiguous-state-discrimination eavesdropping, in
both the untrusted- and trusted-device scenarios.  A Monte Carlo pulse-train
simulator serves as an independent oracle for every analytic quantity.
"""

__version__ = "0.1.0"

from .amplitudes import (
    AmplitudeDistribution,
    binomial_coefficients,
    flat_coefficients,
    max_offdiag_eigenpair,
    multiphoton_coefficients,
    optimal_coefficients,
)
from .attack import (
    AttackParams,
    BlockDistribution,
    block_distribution,
    dead_time_pad,
    usd_success_probability,
)
from .detection import (
    DetectorModel,
    ModeAmplitudes,
    ProbabilityBoundsError,
    SlotClickProbabilities,
    click_error_dc_probability,
    click_error_dc_table,
    interferometer_amplitudes,
    slot_click_probabilities,
    untrusted_error_count,
    vacuum_click_error_dc,
)
from .montecarlo import PhaseCheckReport, SimConfig, SimResult, phase_randomization_check, simulate
from .sweep import CurvePoint, CurveResult, FrontierPoint, GridSpec, build_frontier
from .trusted import (
    ClickTables,
    FixedPointError,
    PhotonNumberDistribution,
    PrecedingSignalProbabilities,
    TruncatedBlockDistribution,
    pd_profile,
    preceding_probabilities,
    trusted_curve,
    trusted_rates,
    truncated_blocks,
)
from .untrusted import (
    AttackOutcome,
    ChannelModel,
    DistanceResult,
    NoClicksError,
    expected_gain_at_distance,
    gain_to_distance,
    untrusted_counts,
    untrusted_counts_by_summation,
    untrusted_curve,
    untrusted_gain,
    untrusted_qber,
)

__all__ = [name for name in dir() if not name.startswith("_")]
