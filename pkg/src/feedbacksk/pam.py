"""Uncoded unit-power PAM with Gray labeling.

Messages travel through the simulator as integer *labels* (the K message
bits read MSB-first as an unsigned integer).  A label ``g`` sits at
constellation index ``gray_to_binary(g)``, so neighbouring points differ
in exactly one bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "MAX_K_BITS",
    "PamConstellation",
    "build_constellation",
    "binary_to_gray",
    "gray_to_binary",
    "bits_to_label",
    "label_to_bits",
    "map_bits",
    "slice",
    "slice_index",
    "count_bit_errors",
    "label_bit_errors",
]

MAX_K_BITS = 60
_MATERIALIZE_LIMIT = 24


@dataclass(frozen=True)
class PamConstellation:
    """2^K equally spaced points ``a*(2i - M + 1)`` with unit average power."""

    k_bits: int

    @property
    def m_points(self) -> int:
        return 1 << self.k_bits

    @property
    def log_spacing_half(self) -> float:
        # log a = (log 3 - log(M^2 - 1)) / 2, stable for K up to 60
        m2 = math.ldexp(1.0, 2 * self.k_bits)
        return 0.5 * (math.log(3.0) - math.log(m2) - math.log1p(-1.0 / m2))

    @property
    def spacing_half(self) -> float:
        return math.exp(self.log_spacing_half)

    @property
    def d_min(self) -> float:
        return 2.0 * self.spacing_half

    @property
    def points(self) -> np.ndarray:
        if self.k_bits > _MATERIALIZE_LIMIT:
            raise ValueError(f"refusing to materialize 2^{self.k_bits} points")
        return self.point(np.arange(self.m_points))

    def point(self, index):
        """Constellation value at ``index`` (vectorized)."""
        index = np.asarray(index)
        odd = 2.0 * index.astype(np.float64) - (self.m_points - 1)
        return self.spacing_half * odd


def build_constellation(k_bits: int) -> PamConstellation:
    if not isinstance(k_bits, (int, np.integer)) or not 1 <= k_bits <= MAX_K_BITS:
        raise ConfigurationError(f"k_bits must be an integer in [1, {MAX_K_BITS}], got {k_bits!r}")
    return PamConstellation(int(k_bits))


def binary_to_gray(i):
    i = np.asarray(i, dtype=np.uint64)
    return i ^ (i >> np.uint64(1))


def gray_to_binary(g):
    b = np.array(g, dtype=np.uint64)
    shift = 1
    while shift < 64:
        b ^= b >> np.uint64(shift)
        shift <<= 1
    return b


def bits_to_label(bits) -> int:
    label = 0
    for b in bits:
        if b not in (0, 1):
            raise ConfigurationError(f"bits must be 0/1, got {b!r}")
        label = (label << 1) | int(b)
    return label


def label_to_bits(label: int, k_bits: int) -> list[int]:
    return [(int(label) >> (k_bits - 1 - i)) & 1 for i in range(k_bits)]


def _check_length(bits, c: PamConstellation) -> None:
    if len(bits) != c.k_bits:
        raise ConfigurationError(f"expected {c.k_bits} bits, got {len(bits)}")


def map_bits(bits, c: PamConstellation) -> float:
    """Map K message bits (MSB first) to their PAM value."""
    _check_length(bits, c)
    index = gray_to_binary(bits_to_label(bits))
    return float(c.point(index))


def slice_index(y, c: PamConstellation):
    """Nearest-point index for values ``y``; ties go to the lower index."""
    u = np.asarray(y, dtype=float) / c.d_min + 0.5 * (c.m_points - 1)
    idx = np.ceil(u - 0.5)
    idx = np.clip(idx, 0, c.m_points - 1)
    return idx.astype(np.int64)


def slice(y: float, c: PamConstellation) -> tuple[int, list[int]]:  # noqa: A001
    """Minimum-distance decision: returns (index, bits)."""
    idx = int(slice_index(y, c))
    label = int(binary_to_gray(idx))
    return idx, label_to_bits(label, c.k_bits)


def count_bit_errors(sent, decoded) -> int:
    if len(sent) != len(decoded):
        raise ConfigurationError("bit sequences differ in length")
    return int(sum(int(a) != int(b) for a, b in zip(sent, decoded)))


def label_bit_errors(sent, decoded) -> np.ndarray:
    """Per-message Hamming distance between integer labels."""
    diff = np.asarray(sent, dtype=np.uint64) ^ np.asarray(decoded, dtype=np.uint64)
    return np.bitwise_count(diff).astype(np.int64)
