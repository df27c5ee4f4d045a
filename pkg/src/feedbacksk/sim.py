"""Monte-Carlo campaigns over SK / Modulo-SK.

Trials are processed in fixed chunks of :data:`CHUNK_TRIALS`.  Trial ``t``
draws all of its randomness from counter-based stream ``t`` (message label,
forward noise, feedback noise; dither from a separate key), so a campaign's
counts depend only on the seed and the stop rule, never on how many
workers ran it.  Stop conditions are evaluated chunk by chunk in trial order.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import stats

from . import modulo_sk, sk
from .channel import ChannelPair, PowerAudit
from .errors import ConfigurationError
from .numerics import db_to_linear, stream_words, words_to_normal, words_to_uniform
from .outcomes import BatchOutcome, RoundDiagnostics, TrialOutcome

__all__ = [
    "CHUNK_TRIALS",
    "Scheme",
    "StopRule",
    "BerEstimate",
    "CampaignResult",
    "SweepPoint",
    "TrialOutcome",
    "confidence_interval",
    "run_block",
    "run_campaign",
    "sweep",
]

CHUNK_TRIALS = 8192
_DITHER_LANE = 1 << 63


class Scheme(str, Enum):
    SK = "sk"
    MODULO_SK = "modulo_sk"


@dataclass(frozen=True)
class StopRule:
    max_trials: int
    target_symbol_errors: int = 100
    ber_floor: float = 1e-8

    def __post_init__(self):
        if self.max_trials < 1:
            raise ConfigurationError("max_trials must be positive")
        if self.target_symbol_errors < 1:
            raise ConfigurationError("target_symbol_errors must be positive")


def confidence_interval(errors: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson (exact binomial) interval for errors/n."""
    if n < 1 or not 0 <= errors <= n:
        raise ValueError(f"need 0 <= errors <= n and n >= 1, got {errors}/{n}")
    alpha = 1.0 - level
    low = 0.0 if errors == 0 else float(stats.beta.ppf(alpha / 2, errors, n - errors + 1))
    high = 1.0 if errors == n else float(stats.beta.ppf(1 - alpha / 2, errors + 1, n - errors))
    return low, high


@dataclass(frozen=True)
class BerEstimate:
    trials: int = 0
    bits: int = 0
    bit_errors: int = 0
    symbol_errors: int = 0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else math.nan

    @property
    def ser(self) -> float:
        return self.symbol_errors / self.trials if self.trials else math.nan

    @property
    def ci(self) -> tuple[float, float]:
        return confidence_interval(self.bit_errors, self.bits)

    @property
    def ci_low(self) -> float:
        return self.ci[0]

    @property
    def ci_high(self) -> float:
        return self.ci[1]

    @property
    def ser_ci(self) -> tuple[float, float]:
        return confidence_interval(self.symbol_errors, self.trials)

    def ser_std_error(self) -> float:
        p = self.ser
        return math.sqrt(p * (1 - p) / self.trials)

    def merge(self, other: "BerEstimate") -> "BerEstimate":
        return BerEstimate(self.trials + other.trials, self.bits + other.bits,
                           self.bit_errors + other.bit_errors,
                           self.symbol_errors + other.symbol_errors)


@dataclass
class CampaignResult:
    estimate: BerEstimate
    audit: PowerAudit
    rounds: RoundDiagnostics
    wrap_events: int = 0
    params: object = None
    meta: dict = field(default_factory=dict)


def _stream_width(n_rounds: int) -> int:
    # one word for the message, N forward and N-1 feedback noise samples
    return 4 * math.ceil(2 * n_rounds / 4)


def run_block(scheme: Scheme, params, seed: int, first: int, count: int,
              substream: int = 0, record: bool = False,
              sched=None) -> BatchOutcome:
    """Run trials ``first .. first+count-1`` of a campaign."""
    scheme = Scheme(scheme)
    n, k = params.n_rounds, params.k_bits
    words = stream_words(seed, substream, first, count, _stream_width(n))
    labels = words[:, 0] >> np.uint64(64 - k)
    ff = words_to_normal(words[:, 1:1 + n])
    if scheme is Scheme.SK:
        ch = ChannelPair(params.sigma2_ff, 0.0, ff)
        return sk.sk_run_batch(params, labels, ch, sched, record=record)
    fb = words_to_normal(words[:, 1 + n:2 * n]) if params.sigma2_fb > 0 else None
    ch = ChannelPair(params.sigma2_ff, params.sigma2_fb, ff, fb)
    dither = None
    if params.dither_enabled and n > 1:
        dwords = stream_words(params.dither_seed, substream | _DITHER_LANE, first, count,
                              4 * math.ceil((n - 1) / 4))
        dither = words_to_uniform(dwords[:, :n - 1])
    return modulo_sk.run_batch(params, labels, ch, sched, dither, record=record)


@dataclass(frozen=True)
class _ChunkSummary:
    estimate: BerEstimate
    audit: PowerAudit
    rounds: RoundDiagnostics
    wrap_events: int


def _run_chunk(args) -> _ChunkSummary:
    scheme, params, sched, seed, substream, first, count = args
    out = run_block(scheme, params, seed, first, count, substream, sched=sched)
    est = BerEstimate(count, count * params.k_bits, int(out.bit_errors.sum()),
                      int(out.symbol_errors.sum()))
    return _ChunkSummary(est, out.audit, out.rounds, int(out.wrap_events.sum()))


def _schedule(scheme: Scheme, params):
    if scheme is Scheme.SK:
        return sk.sk_schedule(params)
    return modulo_sk.modulo_sk_schedule(params)


def run_campaign(scheme, params, stop: StopRule, seed: int, substream: int = 0,
                 workers: int = 1) -> CampaignResult:
    """Run chunks in order until a stop condition holds.

    Stops once ``target_symbol_errors`` symbol errors are collected, once the
    upper 95% BER limit falls below ``ber_floor``, or at ``max_trials``.
    """
    scheme = Scheme(scheme)
    sched = _schedule(scheme, params)
    chunks = [(f, min(CHUNK_TRIALS, stop.max_trials - f))
              for f in range(0, stop.max_trials, CHUNK_TRIALS)]
    total = _ChunkSummary(BerEstimate(), PowerAudit(), RoundDiagnostics.empty(params.n_rounds), 0)
    stop_reason = "max_trials"
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        pos = 0
        done = False
        while pos < len(chunks) and not done:
            wave = chunks[pos:pos + max(workers, 1)]
            pos += len(wave)
            jobs = [(scheme, params, sched, seed, substream, f, c) for f, c in wave]
            results = pool.map(_run_chunk, jobs) if pool else map(_run_chunk, jobs)
            for res in results:
                total = _ChunkSummary(total.estimate.merge(res.estimate),
                                      total.audit.merge(res.audit),
                                      total.rounds.merge(res.rounds),
                                      total.wrap_events + res.wrap_events)
                est = total.estimate
                if est.symbol_errors >= stop.target_symbol_errors:
                    stop_reason = "target_errors"
                    done = True
                elif est.ci_high < stop.ber_floor:
                    stop_reason = "ber_floor"
                    done = True
                if done:
                    break
    finally:
        if pool:
            pool.shutdown(cancel_futures=True)
    meta = {"stop_reason": stop_reason, "chunk_trials": CHUNK_TRIALS, "seed": seed,
            "substream": substream}
    return CampaignResult(total.estimate, total.audit, total.rounds, total.wrap_events, params, meta)


@dataclass
class SweepPoint:
    abscissa: float
    params: object
    result: CampaignResult | None = None
    error: str | None = None
    kappa: float | None = None

    @property
    def feasible(self) -> bool:
        return self.result is not None


_AXES = ("feedback_snr_db", "forward_snr_db", "n_rounds")


def _point_params(axis: str, value, base, rate: float | None):
    if axis == "feedback_snr_db":
        return dataclasses.replace(base, sigma2_fb=base.p_fb / float(db_to_linear(value)))
    if axis == "forward_snr_db":
        return dataclasses.replace(base, sigma2_ff=base.p_ff / float(db_to_linear(value)))
    n = int(value)
    k = base.k_bits if rate is None else rate * n
    if abs(k - round(k)) > 1e-9 or round(k) < 1:
        raise ConfigurationError(f"rate*n_rounds must be a positive integer (n={n})")
    return dataclasses.replace(base, n_rounds=n, k_bits=int(round(k)))


def sweep(axis: str, grid: Sequence[float], base_params, stop: StopRule, seed: int,
          scheme=None, auto_kappa: bool = False, rate: float | None = None,
          workers: int = 1) -> list[SweepPoint]:
    """One campaign per grid value (substream = position in the sorted grid).

    Points whose Modulo-SK schedule is infeasible are returned with
    ``error`` set instead of raising.
    """
    if axis not in _AXES:
        raise ConfigurationError(f"unknown sweep axis {axis!r}; expected one of {_AXES}")
    if len(grid) == 0:
        raise ConfigurationError("sweep grid is empty")
    if scheme is None:
        scheme = Scheme.SK if isinstance(base_params, sk.SkParams) else Scheme.MODULO_SK
    scheme = Scheme(scheme)
    points = []
    for i, value in enumerate(sorted(grid)):
        params = _point_params(axis, value, base_params, rate)
        point = SweepPoint(float(value), params)
        try:
            if scheme is Scheme.MODULO_SK:
                if auto_kappa:
                    kappa, _ = modulo_sk.choose_kappa(params)
                    params = params.with_kappa(kappa)
                    point.params = params
                point.kappa = params.kappa
            point.result = run_campaign(scheme, params, stop, seed, substream=i, workers=workers)
        except ConfigurationError as exc:
            point.error = str(exc)
        points.append(point)
    return points
