"""Amplitude profiles for Eve's resend pulse trains.

A resend block spanning k temporal modes carries a normalized real
non-negative amplitude vector (A_1, ..., A_k).  Three built-in profiles are
provided: flat, binomial, and the error-minimizing one obtained as the top
eigenvector of the k x k matrix with ones on the first off-diagonals.
Custom per-k vectors are accepted as well, with optional per-photon-number
overrides for multi-photon blocks.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "AmplitudeDistribution",
    "flat_coefficients",
    "binomial_coefficients",
    "optimal_coefficients",
    "multiphoton_coefficients",
    "max_offdiag_eigenpair",
]

# Re-normalization thresholds for custom vectors: squared-norm drift below
# WARN is silently absorbed, between WARN and FAIL is corrected with a
# warning, beyond FAIL is treated as a config mistake.
_NORM_WARN = 1e-9
_NORM_FAIL = 1e-3


def _frozen(vec: np.ndarray) -> np.ndarray:
    out = np.asarray(vec, dtype=float)
    out.setflags(write=False)
    return out


def _require_positive_k(k: int) -> None:
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"block length k must be a positive integer, got {k}")


@lru_cache(maxsize=None)
def flat_coefficients(k: int) -> np.ndarray:
    """Uniform amplitudes 1/sqrt(k) over the k modes."""
    _require_positive_k(k)
    return _frozen(np.full(k, 1.0 / math.sqrt(k)))


@lru_cache(maxsize=None)
def binomial_coefficients(k: int) -> np.ndarray:
    """Amplitudes proportional to sqrt of the binomial weights C(k-1, n-1).

    Evaluated in log space so large k stays finite, then re-normalized to
    absorb rounding.
    """
    _require_positive_k(k)
    n = np.arange(k)
    log_amp = 0.5 * (
        math.lgamma(k) - np.vectorize(math.lgamma)(n + 1.0) - np.vectorize(math.lgamma)(k - n)
    ) - 0.5 * (k - 1) * math.log(2.0)
    vec = np.exp(log_amp)
    return _frozen(vec / np.linalg.norm(vec))


@lru_cache(maxsize=None)
def max_offdiag_eigenpair(k: int) -> tuple[float, np.ndarray]:
    """Largest eigenvalue and eigenvector of the k x k first-off-diagonal matrix.

    The matrix has zeros on the diagonal and ones immediately above and
    below it.  The top eigenvector is nodeless, so it is returned with all
    components positive and unit norm.
    """
    _require_positive_k(k)
    if k == 1:
        return 0.0, _frozen(np.ones(1))
    diag = np.zeros(k)
    offdiag = np.ones(k - 1)
    vals, vecs = eigh_tridiagonal(diag, offdiag, select="i", select_range=(k - 1, k - 1))
    vec = vecs[:, 0]
    if vec.sum() < 0:
        vec = -vec
    if vec.min() < -1e-10:
        raise ArithmeticError(f"top eigenvector of the coupling matrix has a node at k={k}")
    vec = np.abs(vec)
    return float(vals[0]), _frozen(vec / np.linalg.norm(vec))


def optimal_coefficients(k: int) -> np.ndarray:
    """Amplitudes minimizing the expected interference errors per block."""
    return max_offdiag_eigenpair(k)[1]


def _validated_custom(vec: Sequence[float], k: int) -> np.ndarray:
    arr = np.asarray(vec, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != k:
        raise ValueError(f"custom amplitude vector for k={k} has shape {arr.shape}")
    if np.any(arr < 0):
        raise ValueError(f"custom amplitude vector for k={k} has negative components")
    sq = float(np.sum(arr * arr))
    if abs(sq - 1.0) > _NORM_FAIL:
        raise ValueError(
            f"custom amplitude vector for k={k} has squared norm {sq}, off by more than {_NORM_FAIL}"
        )
    if abs(sq - 1.0) > _NORM_WARN:
        warnings.warn(
            f"re-normalizing custom amplitude vector for k={k} (squared norm {sq})",
            stacklevel=3,
        )
    return _frozen(arr / math.sqrt(sq))


class AmplitudeDistribution:
    """A family of per-block-length amplitude vectors.

    ``kind`` is one of flat / binomial / optimal / custom.  ``coefficients(k)``
    returns the unit-norm non-negative vector for a block of k modes;
    ``multiphoton(k, m)`` returns the vector used for an m-photon block,
    which by convention equals ``coefficients(k)`` unless a custom
    distribution overrides specific (k, m) pairs.
    """

    _BUILTIN = {
        "flat": flat_coefficients,
        "binomial": binomial_coefficients,
        "optimal": optimal_coefficients,
    }

    def __init__(
        self,
        kind: str,
        table: Mapping[int, Sequence[float]] | None = None,
        m_overrides: Mapping[int, Mapping[int, Sequence[float]]] | None = None,
    ):
        if kind in self._BUILTIN:
            if table is not None or m_overrides is not None:
                raise ValueError(f"built-in distribution {kind!r} takes no tables")
        elif kind == "custom":
            if not table:
                raise ValueError("custom distribution needs at least one amplitude vector")
        else:
            raise ValueError(f"unknown distribution kind {kind!r}")
        self.kind = kind
        self._table = (
            {int(k): _validated_custom(v, int(k)) for k, v in table.items()}
            if table
            else {}
        )
        self._m_overrides = (
            {
                int(m): {int(k): _validated_custom(v, int(k)) for k, v in per_k.items()}
                for m, per_k in m_overrides.items()
            }
            if m_overrides
            else {}
        )

    @classmethod
    def flat(cls) -> "AmplitudeDistribution":
        return cls("flat")

    @classmethod
    def binomial(cls) -> "AmplitudeDistribution":
        return cls("binomial")

    @classmethod
    def optimal(cls) -> "AmplitudeDistribution":
        return cls("optimal")

    @classmethod
    def custom(
        cls,
        table: Mapping[int, Sequence[float]],
        m_overrides: Mapping[int, Mapping[int, Sequence[float]]] | None = None,
    ) -> "AmplitudeDistribution":
        return cls("custom", table=table, m_overrides=m_overrides)

    def coefficients(self, k: int) -> np.ndarray:
        _require_positive_k(int(k))
        k = int(k)
        if self.kind in self._BUILTIN:
            return self._BUILTIN[self.kind](k)
        try:
            return self._table[k]
        except KeyError:
            raise ValueError(f"custom distribution has no amplitude vector for k={k}") from None

    def multiphoton(self, k: int, m: int) -> np.ndarray:
        if not isinstance(m, (int, np.integer)) or m < 1:
            raise ValueError(f"photon number must be a positive integer, got {m}")
        per_k = self._m_overrides.get(int(m))
        if per_k is not None and int(k) in per_k:
            return per_k[int(k)]
        return self.coefficients(k)

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"AmplitudeDistribution(kind={self.kind!r})"


def multiphoton_coefficients(dist: AmplitudeDistribution, k: int, m: int) -> np.ndarray:
    """Amplitude vector used for an m-photon block of k modes.

    Defaults to the single-photon vector for every m; custom distributions
    may override individual (k, m) pairs.
    """
    return dist.multiphoton(k, m)
