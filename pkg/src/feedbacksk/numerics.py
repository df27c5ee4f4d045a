"""Shared numeric primitives: Gaussian tail, dB conversion, centered modulo,
and the counter-based random source used by every simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "SnrSpec",
    "RandomSource",
    "q_func",
    "log_q_func",
    "q_inv",
    "db_to_linear",
    "linear_to_db",
    "mod_centered",
    "stream_words",
    "words_to_normal",
    "words_to_uniform",
    "gaussian",
]

_SQRT2 = math.sqrt(2.0)
# Above this the scaled erfc branch is used; below it plain erfc is exact enough.
_TAIL_SWITCH = 8.0


def q_func(x):
    """Standard Gaussian tail probability P(Z > x).

    Uses ``erfc`` in the bulk and the scaled form ``erfcx(x/sqrt2) *
    exp(-x^2/2) / 2`` for x > 8, which keeps full relative accuracy until
    the result leaves the normal double range (x ~ 37.5).  Beyond that the
    value underflows; use :func:`log_q_func` there.
    """
    x = np.asarray(x, dtype=float)
    out = np.where(
        x > _TAIL_SWITCH,
        0.5 * special.erfcx(x / _SQRT2) * np.exp(-0.5 * x * x),
        0.5 * special.erfc(x / _SQRT2),
    )
    return out[()] if out.ndim == 0 else out


def log_q_func(x):
    """Natural log of :func:`q_func`, finite for arbitrarily large x."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        pos = np.log(0.5 * special.erfcx(np.abs(x) / _SQRT2)) - 0.5 * x * x
        neg = np.log1p(-0.5 * special.erfc(np.abs(x) / _SQRT2))
    out = np.where(x >= 0, pos, neg)
    return out[()] if out.ndim == 0 else out


def q_inv(p):
    """Inverse of :func:`q_func` on (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise ValueError("q_inv requires 0 < p < 1")
    out = -special.ndtri(p)
    return out[()] if out.ndim == 0 else out


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("linear_to_db requires a positive argument")
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class SnrSpec:
    """An SNR carried in both dB and linear form."""

    value_db: float

    @property
    def value_linear(self) -> float:
        return float(db_to_linear(self.value_db))

    @classmethod
    def from_linear(cls, value: float) -> "SnrSpec":
        return cls(float(linear_to_db(value)))


def mod_centered(x, L):
    """Reduce ``x`` into the half-open cell [-L/2, L/2).

    Ties at the cell edge go to -L/2.
    """
    if not L > 0:
        raise ValueError("modulo cell size must be positive")
    x = np.asarray(x, dtype=float)
    r = x - L * np.floor(x / L + 0.5)
    # floor() of a rounded quotient can land one cell off near the edges
    r = np.where(r >= 0.5 * L, r - L, r)
    r = np.where(r < -0.5 * L, r + L, r)
    return r[()] if r.ndim == 0 else r


# ---------------------------------------------------------------------------
# Counter-based random numbers
#
# Every stream is a contiguous slice of a Philox4x64 keystream keyed by
# (seed, substream).  Stream ``s`` of width ``W`` owns words [s*W, (s+1)*W),
# so a block of consecutive streams is a single contiguous draw and any
# stream can be regenerated on its own.

_WORDS_PER_BLOCK = 4
_HALF53 = float(1 << 52)
_U53 = 2.0**-53


def _key(seed: int, substream: int) -> np.ndarray:
    return np.array([seed % 2**64, substream % 2**64], dtype=np.uint64)


def stream_words(seed: int, substream: int, first: int, count: int, width: int) -> np.ndarray:
    """Raw 64-bit words for streams ``first .. first+count-1``.

    Returns a ``(count, width)`` uint64 array; ``width`` must be a multiple of 4.
    """
    if width <= 0 or width % _WORDS_PER_BLOCK:
        raise ValueError("stream width must be a positive multiple of 4")
    if first < 0 or count < 0:
        raise ValueError("stream indices must be nonnegative")
    start_block = first * (width // _WORDS_PER_BLOCK)
    counter = np.array(
        [start_block % 2**64, start_block >> 64, 0, 0], dtype=np.uint64
    )
    bg = np.random.Philox(key=_key(seed, substream), counter=counter)
    return bg.random_raw(count * width).reshape(count, width)


def words_to_uniform(words: np.ndarray) -> np.ndarray:
    """Map words to doubles strictly inside (0, 1)."""
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _U53


def words_to_normal(words: np.ndarray) -> np.ndarray:
    """Map words to standard normals by inverse-CDF (one word per sample).

    The upper half is mirrored through the exact complement so that the
    largest word does not round to u = 1.
    """
    m = (np.asarray(words, dtype=np.uint64) >> np.uint64(11)).astype(np.float64)
    upper = m >= _HALF53
    tail = np.where(upper, 2.0 * _HALF53 - m - 0.5, m + 0.5) * _U53
    z = special.ndtri(tail)
    return np.where(upper, -z, z)


@dataclass(frozen=True)
class RandomSource:
    """A reproducible random stream addressed by ``(seed, stream_id)``.

    ``substream`` separates independent families of streams under one seed
    (sweep points, dither).  ``width`` is the number of words the stream
    owns; streams with the same seed/substream/width never overlap.
    """

    seed: int
    stream_id: int = 0
    substream: int = 0
    width: int = 1 << 20

    def __post_init__(self):
        if self.width <= 0 or self.width % _WORDS_PER_BLOCK:
            raise ValueError("stream width must be a positive multiple of 4")

    def words(self, count: int | None = None) -> np.ndarray:
        count = self.width if count is None else count
        if count > self.width:
            raise ValueError(f"stream holds only {self.width} words")
        start_block = self.stream_id * (self.width // _WORDS_PER_BLOCK)
        counter = np.array(
            [start_block % 2**64, start_block >> 64, 0, 0], dtype=np.uint64
        )
        bg = np.random.Philox(key=_key(self.seed, self.substream), counter=counter)
        return bg.random_raw(count)

    def uniform(self, count: int) -> np.ndarray:
        return words_to_uniform(self.words(count))

    def normal(self, count: int) -> np.ndarray:
        return words_to_normal(self.words(count))


def gaussian(source: RandomSource, count: int) -> np.ndarray:
    """First ``count`` standard normal samples of ``source``."""
    return source.normal(count)
