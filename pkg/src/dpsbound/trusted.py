"""Trusted-device bound: gain, QBER, and double-click rate with real detectors.

Bob's detectors now keep their physical efficiency, dark counts, and dead
time, and Eve may send multi-photon blocks (with no padding vacuum beyond
the single inconclusive slot).  A dead time can end in the middle of a
block, so Bob effectively receives dead-time-truncated remnants of the
emitted blocks.  The model is a renewal process over those remnants: the
truncation depth is drawn from a geometric profile parameterized by the
gain itself, which makes the gain a fixed point solved by iteration.

Block-length cap at or below the dead time in slots guarantees at most one
click per remnant, so expected clicks, pulses, errors, and double clicks
per trial assemble from per-slot probabilities in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .amplitudes import AmplitudeDistribution
from .attack import AttackParams, BlockDistribution, block_distribution
from .detection import (
    DetectorModel,
    interferometer_amplitudes,
    vacuum_click_error_dc,
)
from .sweep import CurvePoint, CurveResult, GridSpec, build_frontier
from .untrusted import AttackOutcome, ChannelModel, NoClicksError, gain_to_distance

__all__ = [
    "PhotonNumberDistribution",
    "TruncatedBlockDistribution",
    "PrecedingSignalProbabilities",
    "FixedPointError",
    "ClickTables",
    "pd_profile",
    "truncated_blocks",
    "preceding_probabilities",
    "trusted_rates",
    "trusted_curve",
]

_NORM_TOL = 1e-10


class FixedPointError(RuntimeError):
    """The self-consistent gain iteration did not converge."""

    def __init__(self, message: str, last_iterates: tuple[float, float], iterations: int):
        super().__init__(message)
        self.last_iterates = last_iterates
        self.iterations = iterations


@dataclass(frozen=True)
class PhotonNumberDistribution:
    """Finite-support photon-number mixture of Eve's resend blocks."""

    probs: dict[int, float]

    def __post_init__(self) -> None:
        if not self.probs:
            raise ValueError("photon-number distribution must have support")
        for m, p_m in self.probs.items():
            if not isinstance(m, (int, np.integer)) or m < 1:
                raise ValueError(f"photon numbers must be integers >= 1, got {m}")
            if not 0.0 <= p_m <= 1.0:
                raise ValueError(f"probability of m={m} is {p_m}, outside [0, 1]")
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"photon-number probabilities sum to {total!r}, not 1")

    @classmethod
    def single(cls, m: int) -> "PhotonNumberDistribution":
        return cls({int(m): 1.0})

    def items(self) -> list[tuple[int, float]]:
        return sorted(self.probs.items())


def pd_profile(gain_estimate: float, m_max: int) -> np.ndarray:
    """Truncation-depth profile: dead time ends n modes into a block.

    Geometric in the gain, with the full no-recent-click mass folded into
    n=0; sums to one identically.
    """
    if not 0.0 <= gain_estimate <= 1.0:
        raise ValueError(f"gain estimate must lie in [0, 1], got {gain_estimate}")
    if m_max < 1:
        raise ValueError(f"m_max must be positive, got {m_max}")
    g = gain_estimate
    pd = np.empty(m_max + 1)
    pd[0] = g + (1.0 - g) ** (m_max + 1)
    pd[1:] = g * (1.0 - g) ** np.arange(1, m_max + 1)
    total = float(pd.sum())
    if abs(total - 1.0) > _NORM_TOL:
        raise ArithmeticError(f"truncation profile sums to {total!r}, not 1")
    return pd


@dataclass(frozen=True)
class TruncatedBlockDistribution:
    """Masses of the block remnants Bob sees once a dead time ends.

    ``q_probs[c]`` (c in [0, m_min]) are remnants of c+1 vacuum slots;
    ``r_probs[c]`` (c in [0, m_min-2]) are remnants whose signal part spans
    c+1 modes, shorter than any full block; ``s_probs[c]``
    (c in [0, m_max-m_min]) are remnants spanning m_min+c signal modes.
    ``pd_n`` is the truncation profile the masses were built from.
    """

    q_probs: np.ndarray
    r_probs: np.ndarray
    s_probs: np.ndarray
    pd_n: np.ndarray
    m_min: int
    m_max: int

    def __post_init__(self) -> None:
        total = float(self.q_probs.sum() + self.r_probs.sum() + self.s_probs.sum())
        if abs(total - 1.0) > _NORM_TOL:
            raise ArithmeticError(f"remnant masses sum to {total!r}, not 1")
        if abs(float(self.pd_n.sum()) - 1.0) > _NORM_TOL:
            raise ArithmeticError("truncation profile does not sum to 1")


def _joint_weights(
    blocks: BlockDistribution, pd_n: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-truncation-depth weights u[j] = pd[j] / mass of blocks long enough.

    ``u[j] * p(block)`` is then the joint probability that the dead time ate
    j modes and the emitted block was that one.
    """
    p_s_arr, p_v_arr = blocks.as_arrays()
    pd = np.asarray(pd_n, dtype=float)
    if pd.shape != (blocks.m_max + 1,):
        raise ValueError(
            f"truncation profile has shape {pd.shape}, expected ({blocks.m_max + 1},)"
        )
    tail = (p_s_arr + p_v_arr)[::-1].cumsum()[::-1]
    if tail[-1] <= 0.0:
        raise ArithmeticError(
            "probability of the longest block underflows to zero; "
            "reduce m_max or increase the pulse intensity"
        )
    u = pd / tail
    return u, tail, p_s_arr, p_v_arr


def truncated_blocks(
    blocks: BlockDistribution,
    pd_n: np.ndarray,
    params: AttackParams | None = None,
) -> TruncatedBlockDistribution:
    """Remnant-block masses for a given truncation profile.

    Each (depth j, emitted block) pair maps to exactly one remnant class,
    with the conditional block choice restricted to blocks of at least j+1
    slots, so the masses partition the per-trial sample space.
    """
    if params is not None and (params.m_min != blocks.m_min or params.m_max != blocks.m_max):
        raise ValueError("attack params and block distribution disagree on m_min/m_max")
    u, _, p_s_arr, p_v_arr = _joint_weights(blocks, pd_n)
    m_min, m_max = blocks.m_min, blocks.m_max

    q_probs = np.array(
        [float(np.dot(u[: m_min - c + 1], p_v_arr[c : m_min + 1])) for c in range(m_min + 1)]
    )
    q_probs[0] += float(np.dot(u[m_min:], p_s_arr[m_min:]))
    r_probs = np.array(
        [
            float(np.dot(u[m_min - 1 - c : m_max - c], p_s_arr[m_min:]))
            for c in range(max(m_min - 1, 0))
        ]
    )
    s_probs = np.array(
        [
            float(np.dot(u[: m_max - m_min - c + 1], p_s_arr[m_min + c :]))
            for c in range(m_max - m_min + 1)
        ]
    )
    return TruncatedBlockDistribution(
        q_probs=q_probs,
        r_probs=r_probs,
        s_probs=s_probs,
        pd_n=np.asarray(pd_n, dtype=float),
        m_min=m_min,
        m_max=m_max,
    )


@dataclass(frozen=True)
class PrecedingSignalProbabilities:
    """Conditional origin of each remnant class.

    ``p_pv`` is the probability that the lone-vacuum remnant is preceded by
    a vacuum slot, ``p_pk[k]`` that it trails a k-mode signal block.
    ``p_kbar_k[kb, k]`` is the probability that a short signal remnant of kb
    modes stems from a k-mode block; ``p_pv_kbar[kb]``/``p_p_kbar_k[kb, k]``
    the vacuum-preceded / longer-origin split for long signal remnants.
    Rows of zero-mass classes are left empty (all zero).
    """

    p_pv: float
    p_pk: np.ndarray
    p_kbar_k: np.ndarray
    p_pv_kbar: np.ndarray
    p_p_kbar_k: np.ndarray
    m_min: int
    m_max: int

    def __post_init__(self) -> None:
        head = self.p_pv + float(self.p_pk.sum())
        if head != 0.0 and abs(head - 1.0) > _NORM_TOL:
            raise ArithmeticError(f"lone-vacuum origin probabilities sum to {head!r}")
        for kb in range(1, self.m_min):
            row = float(self.p_kbar_k[kb].sum())
            if row != 0.0 and abs(row - 1.0) > _NORM_TOL:
                raise ArithmeticError(f"short-remnant origins for kb={kb} sum to {row!r}")
        for kb in range(self.m_min, self.m_max + 1):
            row = self.p_pv_kbar[kb] + float(self.p_p_kbar_k[kb].sum())
            if row != 0.0 and abs(row - 1.0) > _NORM_TOL:
                raise ArithmeticError(f"long-remnant origins for kb={kb} sum to {row!r}")


def _guarded_div(num: np.ndarray, denom: float) -> np.ndarray:
    if denom <= 0.0:
        return np.zeros_like(num)
    return num / denom


def preceding_probabilities(
    blocks: BlockDistribution,
    pd_n: np.ndarray,
    truncated: TruncatedBlockDistribution,
) -> PrecedingSignalProbabilities:
    """Conditional origin probabilities for every remnant class."""
    if truncated.m_min != blocks.m_min or truncated.m_max != blocks.m_max:
        raise ValueError("block distribution and remnant masses disagree on m_min/m_max")
    u, _, p_s_arr, _p_v_arr = _joint_weights(blocks, pd_n)
    m_min, m_max = blocks.m_min, blocks.m_max
    size = m_max + 1

    q0 = float(truncated.q_probs[0])
    vac_joint = float(np.dot(u[: m_min + 1], _p_v_arr[: m_min + 1]))
    p_pv = vac_joint / q0 if q0 > 0.0 else 0.0
    p_pk = np.zeros(size)
    p_pk[m_min:] = _guarded_div(u[m_min:] * p_s_arr[m_min:], q0)

    p_kbar_k = np.zeros((size, size))
    for kb in range(1, m_min):
        joint = np.zeros(size)
        joint[m_min:] = u[m_min - kb : m_max - kb + 1] * p_s_arr[m_min:]
        p_kbar_k[kb] = _guarded_div(joint, float(truncated.r_probs[kb - 1]))

    p_pv_kbar = np.zeros(size)
    p_p_kbar_k = np.zeros((size, size))
    for kb in range(m_min, m_max + 1):
        mass = float(truncated.s_probs[kb - m_min])
        if mass <= 0.0:
            continue
        p_pv_kbar[kb] = u[0] * p_s_arr[kb] / mass
        if kb < m_max:
            joint = np.zeros(size)
            joint[kb + 1 :] = u[1 : m_max - kb + 1] * p_s_arr[kb + 1 :]
            p_p_kbar_k[kb] = joint / mass
    return PrecedingSignalProbabilities(
        p_pv=p_pv,
        p_pk=p_pk,
        p_kbar_k=p_kbar_k,
        p_pv_kbar=p_pv_kbar,
        p_p_kbar_k=p_p_kbar_k,
        m_min=m_min,
        m_max=m_max,
    )


class ClickTables:
    """Per-(remnant span, origin length) expectations for signal remnants.

    For the remnant made of the last kb modes of an m-photon, k-mode block
    (plus its trailing vacuum), entry [kb, k] holds the expected clicks,
    pulses (dead time included), errors, and double clicks of the remnant.
    Columns are filled lazily per photon number and shared across the whole
    (m_min, q, gain) sweep: they depend only on the distribution, the
    detector, and the dead time.
    """

    def __init__(
        self,
        dist: AmplitudeDistribution,
        detector: DetectorModel,
        m_max: int,
        d_tilde: int | None = None,
    ):
        self.dist = dist
        self.detector = detector
        self.m_max = m_max
        self.d_tilde = detector.dead_time_slots() if d_tilde is None else d_tilde
        self._filled: dict[int, np.ndarray] = {}
        self._tables: dict[int, dict[str, np.ndarray]] = {}

    def _alloc(self, m: int) -> dict[str, np.ndarray]:
        if m not in self._tables:
            size = self.m_max + 1
            self._tables[m] = {
                name: np.zeros((size, size)) for name in ("clicks", "pulses", "errors", "doubles")
            }
            self._filled[m] = np.zeros(size, dtype=bool)
        return self._tables[m]

    def _fill_column(self, m: int, k: int) -> None:
        tables = self._alloc(m)
        amps = interferometer_amplitudes(self.dist.multiphoton(k, m), self.detector.eta_det)
        w_e, w_f, _ = amps.weights()
        p_d = self.detector.p_dark
        big_pd = self.detector.either_dark_click

        # Triangle over (kb, n), n <= kb: tail occupation sums via prefix
        # differences, then the inclusion-exclusion slot outcomes in bulk.
        prefix = np.concatenate(([0.0], np.cumsum(w_e + w_f)))
        base_all = 1.0 - np.subtract.outer(prefix[1:], prefix[:-1])
        base_after = 1.0 - np.subtract.outer(prefix[1:], prefix[1:])
        mask = np.tril(np.ones((k + 1, k + 1)))

        vac = base_all**m
        no_e = (base_after - w_e[None, :]) ** m
        no_f = (base_after - w_f[None, :]) ** m
        d0 = no_e - vac
        d1 = no_f - vac
        if m == 1:
            dc = np.zeros_like(vac)  # one photon cannot trigger both detectors
        else:
            dc = base_after**m - no_e - no_f + vac

        depth = np.subtract.outer(np.arange(k + 1), np.arange(k + 1))
        quiet = (1.0 - big_pd) ** np.maximum(depth, 0)

        click = (d0 + d1 + dc) * quiet + big_pd * quiet * vac
        error = quiet * (
            (1.0 - p_d / 2.0) * d1 + (p_d / 2.0) * d0 + dc / 2.0 + p_d * (1.0 - p_d / 2.0) * vac
        )
        double = quiet * (p_d * (d0 + d1) + dc + p_d**2 * vac)

        click *= mask
        error *= mask
        double *= mask
        clicks_col = click.sum(axis=1)
        tables["clicks"][: k + 1, k] = clicks_col
        tables["errors"][: k + 1, k] = error.sum(axis=1)
        tables["doubles"][: k + 1, k] = double.sum(axis=1)
        # Pulses: a click in slot n consumes kb-n+1 block slots plus the dead
        # time; a silent remnant consumes its kb+1 slots.
        weights = (depth + 1.0 + self.d_tilde) * mask
        kb = np.arange(k + 1)
        tables["pulses"][: k + 1, k] = (click * weights).sum(axis=1) + (1.0 - clicks_col) * (
            kb + 1.0
        )
        self._filled[m][k] = True

    def ensure(self, m: int, ks: range) -> dict[str, np.ndarray]:
        """Fill any missing columns for photon number m and return the tables."""
        self._alloc(m)
        for k in ks:
            if not self._filled[m][k]:
                self._fill_column(m, k)
        return self._tables[m]


def _vacuum_chain(
    p_vv: float, e_vv: float, dc_vv: float, d_tilde: int, c_max: int
) -> dict[str, np.ndarray]:
    """Expected clicks/pulses/errors/doubles of pure-vacuum remnants of c+1 slots.

    Dark counts fire independently per slot, so the first-click position is
    geometric; the p_vv = 0 corner degenerates to a silent pass-through.
    """
    n = np.arange(c_max + 1)
    survive = (1.0 - p_vv) ** n
    geom = np.cumsum(survive)
    tail = (1.0 - p_vv) ** (n + 1)
    clicks = 1.0 - tail
    pulses = np.cumsum((n + 1.0 + d_tilde) * survive * p_vv) + (n + 1.0) * tail
    return {
        "clicks": clicks,
        "pulses": pulses,
        "errors": e_vv * geom,
        "doubles": dc_vv * geom,
    }


def _assemble(
    trunc: TruncatedBlockDistribution,
    prec: PrecedingSignalProbabilities,
    tables: dict[str, np.ndarray],
    vac_chain: dict[str, np.ndarray],
) -> dict[str, float]:
    """Mix per-remnant expectations into per-trial totals for one photon number."""
    m_min, m_max = trunc.m_min, trunc.m_max
    size = m_max + 1

    q0 = float(trunc.q_probs[0])
    vac_mass = trunc.q_probs.copy()
    vac_mass[0] = q0 * prec.p_pv  # vacuum-preceded share of the c=0 class

    mass_col = np.zeros(size)
    if m_min >= 2:
        mass_col[1:m_min] = trunc.r_probs
    mass_col[m_min:] = trunc.s_probs
    pair_weights = mass_col[:, None] * (prec.p_kbar_k + prec.p_p_kbar_k)
    diag_weights = mass_col * prec.p_pv_kbar
    head_weights = q0 * prec.p_pk

    totals: dict[str, float] = {}
    for name in ("clicks", "pulses", "errors", "doubles"):
        table = tables[name]
        value = float(np.dot(vac_mass, vac_chain[name][: m_min + 1]))
        value += float(np.dot(head_weights, table[0]))
        value += float(np.einsum("ij,ij->", pair_weights, table))
        value += float(np.dot(diag_weights, np.diagonal(table)))
        totals[name] = value
    return totals


def trusted_rates(
    params: AttackParams,
    detector: DetectorModel,
    dist: AmplitudeDistribution,
    photons: PhotonNumberDistribution | int,
    *,
    channel: ChannelModel | None = None,
    initial_gain: float | None = None,
    tables: ClickTables | None = None,
    tol: float = 1e-10,
    max_iterations: int = 10_000,
) -> AttackOutcome:
    """Self-consistent gain, QBER, and double-click rate at one parameter point.

    Iterates the remnant model: a gain estimate fixes the truncation profile,
    which fixes the remnant mixture, which yields a new gain.  Plain
    iteration with a 0.5 damping step applied only when successive updates
    oscillate with growing amplitude; convergence means successive gains
    within ``tol``.
    """
    if isinstance(photons, int):
        photons = PhotonNumberDistribution.single(photons)
    d_tilde = detector.dead_time_slots()
    if params.m_max > d_tilde:
        raise ValueError(
            f"m_max={params.m_max} exceeds the dead time of {d_tilde} slots; "
            "blocks could click more than once per dead-time window"
        )
    if tables is None:
        tables = ClickTables(dist, detector, m_max=params.m_max, d_tilde=d_tilde)
    elif tables.m_max < params.m_max or tables.d_tilde != d_tilde:
        raise ValueError("shared click tables do not cover this parameter point")

    blocks = block_distribution(params)
    per_m = [
        (p_m, tables.ensure(m, range(params.m_min, params.m_max + 1)))
        for m, p_m in photons.items()
    ]
    p_vv, e_vv, dc_vv = vacuum_click_error_dc(detector)
    vac_chain = _vacuum_chain(p_vv, e_vv, dc_vv, d_tilde, params.m_min)

    def step(gain: float) -> tuple[float, dict[str, float]]:
        pd = pd_profile(gain, params.m_max)
        trunc = truncated_blocks(blocks, pd, params)
        prec = preceding_probabilities(blocks, pd, trunc)
        totals = {"clicks": 0.0, "pulses": 0.0, "errors": 0.0, "doubles": 0.0}
        for p_m, m_tables in per_m:
            part = _assemble(trunc, prec, m_tables, vac_chain)
            for name in totals:
                totals[name] += p_m * part[name]
        return totals["clicks"] / totals["pulses"], totals

    if initial_gain is not None:
        gain = float(initial_gain)
    elif math.isfinite(params.mu_alpha):
        gain = -math.expm1(-params.mu_alpha * detector.eta_det)
    else:
        gain = 0.5
    gain = min(max(gain, 0.0), 1.0)

    prev_delta: float | None = None
    previous = gain
    totals: dict[str, float] = {}
    for iteration in range(1, max_iterations + 1):
        new_gain, totals = step(gain)
        delta = new_gain - gain
        if abs(delta) < tol:
            gain = new_gain
            break
        previous = gain
        if prev_delta is not None and delta * prev_delta < 0 and abs(delta) > abs(prev_delta):
            gain = gain + 0.5 * delta
        else:
            gain = new_gain
        prev_delta = delta
    else:
        raise FixedPointError(
            f"gain iteration did not converge within {max_iterations} steps",
            last_iterates=(previous, gain),
            iterations=max_iterations,
        )

    if totals["clicks"] <= 0.0:
        raise NoClicksError("no clicks at this parameter point; QBER is undefined")
    qber = totals["errors"] / totals["clicks"]
    dc_rate = totals["doubles"] / totals["pulses"]
    distance = None
    if channel is not None and 0.0 < gain < 1.0:
        distance = gain_to_distance(gain, channel, params.mu_alpha).km
    return AttackOutcome(
        gain=gain, qber=qber, dc_rate=dc_rate, distance_km=distance, iterations=iteration
    )


def trusted_curve(
    mu_alpha: float,
    d_tilde: int,
    detector: DetectorModel,
    dist: AmplitudeDistribution,
    photons: PhotonNumberDistribution | int,
    grid: GridSpec,
    channel: ChannelModel | None = None,
) -> CurveResult:
    """Sweep (m_min, q) at the block cap m_max = d_tilde and build frontiers.

    Emits (gain, qber, dc_rate) per grid node plus min-QBER and min-double-
    click envelopes per gain bin.  Converged gains warm-start neighboring
    nodes; results are independent of that, so output matches point-by-point
    evaluation.
    """
    if d_tilde != detector.dead_time_slots():
        raise ValueError(
            f"d_tilde={d_tilde} disagrees with the detector dead time of "
            f"{detector.dead_time_slots()} slots"
        )
    m_max = d_tilde
    if isinstance(photons, int):
        photons = PhotonNumberDistribution.single(photons)
    tables = ClickTables(dist, detector, m_max=m_max, d_tilde=d_tilde)

    m_min_values = [m for m in grid.m_min_values() if m < m_max]
    if not m_min_values:
        raise ValueError(f"grid has no m_min below m_max={m_max}")

    points: list[CurvePoint] = []
    for m_min in m_min_values:
        warm: float | None = None
        for q in grid.q_values():
            params = AttackParams(
                mu_alpha=mu_alpha, m_min=m_min, m_max=m_max, q=float(q), pad=d_tilde
            )
            try:
                outcome = trusted_rates(
                    params,
                    detector,
                    dist,
                    photons,
                    channel=channel,
                    initial_gain=warm,
                    tables=tables,
                )
            except NoClicksError:
                continue
            warm = outcome.gain
            if outcome.gain <= 0.0:
                continue
            points.append(
                CurvePoint(
                    m_min=m_min,
                    q=float(q),
                    gain=outcome.gain,
                    qber=outcome.qber,
                    dc_rate=outcome.dc_rate,
                    distance_km=outcome.distance_km,
                )
            )
    if not points:
        raise ValueError("grid produced no clicking parameter points")
    return CurveResult(
        points=points, frontier=build_frontier(points, kinds=("min_qber", "min_dc"))
    )
