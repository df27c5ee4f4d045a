"""Analytical curves: the Modulo-SK union bound, AWGN capacity/dispersion
and the normal-approximation converse for codes without feedback."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .numerics import log_q_func, q_func
from .pam import build_constellation

if TYPE_CHECKING:
    from .modulo_sk import ModuloSkParams, ModuloSkSchedule

__all__ = [
    "BoundKind",
    "BoundCurve",
    "union_ser_bound",
    "msk_ser_upper_bound",
    "awgn_capacity",
    "awgn_dispersion",
    "no_feedback_converse_bler",
    "bler_to_ber_lower",
    "CONVERSE_CAVEAT",
]

CONVERSE_CAVEAT = (
    "no-feedback converse uses the Gaussian (normal) approximation with the "
    "1/2 log2(n) correction, not the exact finite-blocklength meta-converse"
)

_LOG2E = math.log2(math.e)


class BoundKind(str, Enum):
    UPPER_BOUND_MSK = "upper_bound_msk"
    PREDICTION_SK = "prediction_sk"
    CONVERSE_NO_FEEDBACK = "converse_no_feedback"
    CAPACITY_THRESHOLD = "capacity_threshold"


@dataclass(frozen=True)
class BoundCurve:
    kind: BoundKind
    abscissa: tuple[float, ...]
    values: tuple[float, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.abscissa) != len(self.values):
            raise ValueError("abscissa and values differ in length")
        if any(not 0.0 <= v <= 1.0 for v in self.values if self.kind != BoundKind.CAPACITY_THRESHOLD):
            raise ValueError("bound values must be probabilities")


def union_ser_bound(k_bits: int, log_sigma2_final: float, aliasing) -> float:
    """Sum of per-round aliasing probabilities plus final slicing error."""
    c = build_constellation(k_bits)
    log_arg = c.log_spacing_half - 0.5 * log_sigma2_final
    log_slice = math.log(2.0) + math.log1p(-1.0 / c.m_points) + float(log_q_func(math.exp(log_arg)))
    total = math.fsum(aliasing) + math.exp(log_slice)
    return min(1.0, total)


def msk_ser_upper_bound(p: "ModuloSkParams", sched: "ModuloSkSchedule") -> float:
    """Symbol-error union bound for dithered Modulo-SK.

    Each feedback round contributes ``2 Q((L/2) / sqrt(beta^2 sigma_eps^2 +
    sigma_fb^2))`` (the fold event); the last term is the PAM decision error
    at the final error variance.
    """
    spread = np.sqrt(sched.beta**2 * sched.sigma2_eps[:-1] + sched.sigma2_fb)
    aliasing = 2.0 * np.atleast_1d(q_func(0.5 * sched.cell / spread))
    return union_ser_bound(p.k_bits, float(sched.log_sigma2_eps[-1]), aliasing.tolist())


def awgn_capacity(snr: float) -> float:
    """Capacity in bits per real channel use."""
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    return 0.5 * math.log2(1.0 + snr)


def awgn_dispersion(snr: float) -> float:
    """Channel dispersion in bits^2 per channel use."""
    return snr * (snr + 2.0) / (2.0 * (snr + 1.0) ** 2) * _LOG2E**2


def no_feedback_converse_bler(n: int, rate: float, snr: float) -> float:
    """Normal-approximation lower bound on block error for blocklength ``n``.

    ``Q((n C - n R + log2(n)/2) / sqrt(n V))`` with C, V in bits; see
    :data:`CONVERSE_CAVEAT`.
    """
    if n < 1 or not rate > 0:
        raise ValueError("need n >= 1 and rate > 0")
    v = awgn_dispersion(snr)
    num = n * awgn_capacity(snr) - n * rate + 0.5 * math.log2(n)
    if v == 0:
        return 1.0 if num < 0 else 0.0
    return float(min(1.0, max(0.0, q_func(num / math.sqrt(n * v)))))


def bler_to_ber_lower(bler: float, k_bits: int) -> float:
    """A block error costs at least one of the K bits."""
    if k_bits < 1:
        raise ValueError("k_bits must be >= 1")
    return bler / k_bits
