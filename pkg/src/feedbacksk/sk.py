"""Classical Schalkwijk-Kailath iteration over a noiseless feedback link.

The receiver never holds its estimate as one float.  It keeps a
:class:`SplitStatistic`: the index of a constellation point (an integer)
plus a residual measured in units of the minimum distance.  The error the
transmitter feeds back, ``(coarse - index) + fine``, is therefore exact to
float precision *relative to its own size*, however large K is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import pam
from .channel import ChannelPair
from .errors import ConfigurationError
from .numerics import db_to_linear, log_q_func
from .outcomes import BatchOutcome, RoundDiagnostics, TrialOutcome

__all__ = [
    "SkParams",
    "SkSchedule",
    "SplitStatistic",
    "sk_schedule",
    "sk_run_batch",
    "sk_run_trial",
    "sk_run_naive",
    "sk_ser_prediction",
    "sk_log_ser_prediction",
]

# |coarse - (M-1)/2| is kept below this so 2*coarse never overflows int64.
_COARSE_LIMIT = 2.0**61


@dataclass(frozen=True)
class SkParams:
    n_rounds: int
    k_bits: int
    p_ff: float = 1.0
    sigma2_ff: float = 1.0

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ConfigurationError("n_rounds must be at least 1")
        pam.build_constellation(self.k_bits)
        if not self.p_ff > 0 or not self.sigma2_ff > 0:
            raise ConfigurationError("p_ff and sigma2_ff must be positive")

    @classmethod
    def from_snr_db(cls, n_rounds: int, k_bits: int, snr_db: float, p_ff: float = 1.0) -> "SkParams":
        return cls(n_rounds, k_bits, p_ff, p_ff / float(db_to_linear(snr_db)))

    @property
    def snr(self) -> float:
        return self.p_ff / self.sigma2_ff

    @property
    def rate(self) -> float:
        return self.k_bits / self.n_rounds

    @property
    def constellation(self) -> pam.PamConstellation:
        return pam.build_constellation(self.k_bits)


@dataclass(frozen=True)
class SkSchedule:
    """Deterministic per-round coefficients shared by both terminals.

    ``log_sigma2_eps[n]`` is the log error variance after round n+1 (so
    entry 0 belongs to the one-shot estimate).  ``gain[n]`` scales the error
    sent in round n+2 and ``mmse_coef[n]`` is the receiver's correction
    weight for that round's output.
    """

    log_sigma2_eps: np.ndarray
    gain: np.ndarray
    mmse_coef: np.ndarray

    @property
    def n_rounds(self) -> int:
        return len(self.log_sigma2_eps)

    @property
    def sigma2_eps(self) -> np.ndarray:
        return np.exp(self.log_sigma2_eps)

    @property
    def sigma_eps(self) -> np.ndarray:
        return np.exp(0.5 * self.log_sigma2_eps)

    @property
    def log_effective_snr(self) -> float:
        return -float(self.log_sigma2_eps[-1])


def sk_schedule(p: SkParams) -> SkSchedule:
    n = np.arange(p.n_rounds)
    log_snr = math.log(p.snr)
    log_sigma2 = -log_snr - n * math.log1p(p.snr)
    log_sigma = 0.5 * log_sigma2[:-1]
    half_log_p = 0.5 * math.log(p.p_ff)
    gain = np.exp(half_log_p - log_sigma)
    mmse = np.exp(half_log_p + log_sigma - math.log(p.p_ff + p.sigma2_ff))
    return SkSchedule(log_sigma2, gain, mmse)


class SplitStatistic:
    """Receiver estimate stored as ``point(coarse) + fine * d_min``.

    ``coarse`` is an int64 constellation index (it may leave [0, M) while
    iterating; decisions clip) and ``fine`` stays in [-1/2, 1/2) after each
    update.
    """

    def __init__(self, coarse, fine, constellation: pam.PamConstellation):
        self.coarse = np.asarray(coarse, dtype=np.int64)
        self.fine = np.asarray(fine, dtype=float)
        self.constellation = constellation
        self.renormalize()

    @classmethod
    def from_value(cls, value, constellation: pam.PamConstellation) -> "SplitStatistic":
        c = constellation
        u = np.asarray(value, dtype=float) / c.d_min
        u = np.clip(u, -_COARSE_LIMIT, _COARSE_LIMIT)
        # index coordinate is u + M/2 - 1/2; M/2 is an exact integer shift
        k = np.floor(u)
        coarse = k.astype(np.int64) + np.int64(c.m_points // 2)
        fine = (u - k) - 0.5
        return cls(coarse, fine, c)

    def renormalize(self) -> None:
        k = np.floor(self.fine + 0.5)
        self.fine = self.fine - k
        self.coarse = self.coarse + k.astype(np.int64)

    def add(self, delta_index_units) -> None:
        """Add a correction expressed in units of d_min."""
        self.fine = self.fine + delta_index_units
        self.renormalize()

    def error(self, index) -> np.ndarray:
        """Estimation error in units of d_min for true indices ``index``."""
        return (self.coarse - np.asarray(index, dtype=np.int64)).astype(float) + self.fine

    def value(self) -> np.ndarray:
        return self.constellation.point(self.coarse) + self.fine * self.constellation.d_min

    def decide(self) -> np.ndarray:
        idx = self.coarse + (self.fine <= -0.5).astype(np.int64) * -1
        return np.clip(idx, 0, self.constellation.m_points - 1)


def _index_scale(p: SkParams, sched: SkSchedule) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gains, corrections and error normalizers in d_min units."""
    log_dmin = math.log(2.0) + p.constellation.log_spacing_half
    gain_d = np.exp(np.log(sched.gain) + log_dmin)
    coef_d = np.exp(np.log(sched.mmse_coef) - log_dmin)
    eps_norm = np.exp(log_dmin - 0.5 * sched.log_sigma2_eps)
    return gain_d, coef_d, eps_norm


def sk_run_batch(p: SkParams, labels, ch: ChannelPair, sched: SkSchedule | None = None,
                 record: bool = False) -> BatchOutcome:
    """Run SK for a batch of messages (integer Gray labels) over ``ch``."""
    if not ch.noiseless_feedback:
        raise ConfigurationError(
            "classical SK needs noiseless feedback; use the modulo_sk scheme for noisy feedback"
        )
    sched = sk_schedule(p) if sched is None else sched
    c = p.constellation
    labels = np.asarray(labels, dtype=np.uint64)
    index = pam.gray_to_binary(labels).astype(np.int64)
    n = p.n_rounds
    gain_d, coef_d, eps_norm = _index_scale(p, sched)
    sqrt_p = math.sqrt(p.p_ff)

    rounds = RoundDiagnostics.empty(n)
    traj = np.empty((len(index), n)) if record else None

    y = ch.transmit_ff(sqrt_p * c.point(index))
    stat = SplitStatistic.from_value(y / sqrt_p, c)
    for r in range(n):
        e = stat.error(index)
        ratio = (e * eps_norm[r]) ** 2
        rounds.eps_ratio_sum[r] += ratio.sum()
        rounds.eps_count[r] += len(e)
        if record:
            traj[:, r] = e * c.d_min
        if r == n - 1:
            break
        # noiseless passive feedback: the transmitter sees the receiver's state
        y = ch.transmit_ff(gain_d[r] * e)
        stat.add(-coef_d[r] * y)

    decided = pam.binary_to_gray(stat.decide())
    return BatchOutcome(
        labels=labels,
        decoded=decided,
        bit_errors=pam.label_bit_errors(labels, decided),
        wrap_events=np.zeros(len(labels), dtype=np.int64),
        audit=ch.audit,
        rounds=rounds,
        eps_trajectory=traj,
    )


def sk_run_trial(p: SkParams, bits, ch: ChannelPair, sched: SkSchedule | None = None) -> TrialOutcome:
    """Single-message form of :func:`sk_run_batch`."""
    c = p.constellation
    if len(bits) != c.k_bits:
        raise ConfigurationError(f"expected {c.k_bits} bits, got {len(bits)}")
    label = np.array([pam.bits_to_label(bits)], dtype=np.uint64)
    return sk_run_batch(p, label, ch, sched, record=True).trial(0)


def sk_run_naive(p: SkParams, labels, ch: ChannelPair, sched: SkSchedule | None = None) -> np.ndarray:
    """Plain single-float SK (receiver holds theta_hat as one double).

    Kept as a reference for the split statistic; returns the (batch, N)
    trajectory of estimates.
    """
    sched = sk_schedule(p) if sched is None else sched
    c = p.constellation
    theta = c.point(pam.gray_to_binary(np.asarray(labels, dtype=np.uint64)))
    sqrt_p = math.sqrt(p.p_ff)
    est = ch.transmit_ff(sqrt_p * theta) / sqrt_p
    out = np.empty((len(theta), p.n_rounds))
    out[:, 0] = est
    for r in range(p.n_rounds - 1):
        y = ch.transmit_ff(sched.gain[r] * (est - theta))
        est = est - sched.mmse_coef[r] * y
        out[:, r + 1] = est
    return out


def sk_log_ser_prediction(p: SkParams) -> float:
    """Log of the uncoded-PAM symbol error rate at the effective SNR."""
    c = p.constellation
    m = c.m_points
    log_arg = c.log_spacing_half + 0.5 * (math.log(p.snr) + (p.n_rounds - 1) * math.log1p(p.snr))
    return math.log(2.0) + math.log1p(-1.0 / m) + float(log_q_func(math.exp(log_arg)))


def sk_ser_prediction(p: SkParams) -> float:
    """Uncoded 2^K-PAM SER at effective SNR ``SNR*(1+SNR)^(N-1)``."""
    return math.exp(sk_log_ser_prediction(p))
