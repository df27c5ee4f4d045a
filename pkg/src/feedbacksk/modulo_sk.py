"""Modulo-SK: SK iteration with active, modulo-folded noisy feedback.

Round by round (n = 1..N-1):

* the receiver sends ``mod(beta_n * theta_hat_n + d_n, L)`` back,
* the transmitter strips its own ``beta_n * theta`` and the dither inside a
  second modulo, which leaves ``beta_n * eps_n + feedback_noise`` whenever
  that quantity stays inside the cell,
* it forwards the (noisy) error scaled to power P, and the receiver makes
  the usual linear MMSE correction.

The zoom ``beta_n`` is chosen so that the folded quantity has standard
deviation ``L / (2 kappa)``; each round then aliases with probability
``2 Q(kappa)``.

``beta_n * theta`` is huge once the error is small, so it is never formed
in floating point.  With ``theta = a * j`` (j odd), ``beta_n * a * j mod L``
is ``L * frac(t_n * j)`` for ``t_n = beta_n a / L``; both terminals compute
``frac(t_n * j)`` from a 64-bit fixed-point phase with wrapping integer
multiplication, so the pair stays consistent for every K up to 60.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import pam
from .bounds import union_ser_bound
from .channel import ChannelPair
from .errors import ConfigurationError
from .numerics import db_to_linear, linear_to_db, mod_centered, q_func
from .outcomes import BatchOutcome, RoundDiagnostics, TrialOutcome
from .sk import SplitStatistic

__all__ = [
    "KAPPA_GRID",
    "ModuloSkParams",
    "ModuloSkSchedule",
    "modulo_sk_schedule",
    "min_feedback_snr_db",
    "choose_kappa",
    "aliasing_probability",
    "run_batch",
    "run_trial",
    "feedback_power_check",
    "FeedbackPowerVerdict",
]

KAPPA_GRID = tuple(3.0 + 0.25 * i for i in range(15))
_TWO64 = 2.0**64


@dataclass(frozen=True)
class ModuloSkParams:
    n_rounds: int
    k_bits: int
    p_ff: float
    p_fb: float
    sigma2_ff: float
    sigma2_fb: float
    kappa: float = 4.5
    dither_enabled: bool = False
    dither_seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ConfigurationError("n_rounds must be at least 1")
        pam.build_constellation(self.k_bits)
        if not (self.p_ff > 0 and self.p_fb > 0 and self.sigma2_ff > 0):
            raise ConfigurationError("powers and forward noise variance must be positive")
        if not self.sigma2_fb >= 0:
            raise ConfigurationError("feedback noise variance must be nonnegative")
        if not self.kappa > 0:
            raise ConfigurationError("kappa must be positive")

    @classmethod
    def from_snr_db(cls, n_rounds: int, k_bits: int, forward_snr_db: float,
                    feedback_snr_db: float | None, kappa: float = 4.5,
                    dither_enabled: bool = False, dither_seed: int = 0,
                    p_ff: float = 1.0, p_fb: float = 1.0) -> "ModuloSkParams":
        """Build from SNRs in dB; ``feedback_snr_db=None`` means noiseless feedback."""
        s2_fb = 0.0 if feedback_snr_db is None else p_fb / float(db_to_linear(feedback_snr_db))
        return cls(n_rounds, k_bits, p_ff, p_fb, p_ff / float(db_to_linear(forward_snr_db)),
                   s2_fb, kappa, dither_enabled, dither_seed)

    def with_kappa(self, kappa: float) -> "ModuloSkParams":
        return ModuloSkParams(self.n_rounds, self.k_bits, self.p_ff, self.p_fb, self.sigma2_ff,
                              self.sigma2_fb, kappa, self.dither_enabled, self.dither_seed)

    @property
    def snr(self) -> float:
        return self.p_ff / self.sigma2_ff

    @property
    def feedback_snr(self) -> float:
        return math.inf if self.sigma2_fb == 0 else self.p_fb / self.sigma2_fb

    @property
    def cell(self) -> float:
        """Modulo cell size L; a uniform variable on the cell has power p_fb."""
        return math.sqrt(12.0 * self.p_fb)

    @property
    def constellation(self) -> pam.PamConstellation:
        return pam.build_constellation(self.k_bits)


@dataclass(frozen=True)
class ModuloSkSchedule:
    """Per-round constants; feedback-round arrays have N-1 entries."""

    kappa: float
    cell: float
    sigma2_fb: float
    log_sigma2_eps: np.ndarray
    beta: np.ndarray
    gain: np.ndarray
    mmse_coef: np.ndarray
    rho2: np.ndarray

    @property
    def n_rounds(self) -> int:
        return len(self.log_sigma2_eps)

    @property
    def sigma2_eps(self) -> np.ndarray:
        return np.exp(self.log_sigma2_eps)

    @property
    def sigma_eps(self) -> np.ndarray:
        return np.exp(0.5 * self.log_sigma2_eps)


def min_feedback_snr_db(kappa: float) -> float:
    """Feedback SNR (dB) at or below which the margin ``kappa`` is infeasible."""
    return float(linear_to_db(kappa * kappa / 3.0))


def modulo_sk_schedule(p: ModuloSkParams) -> ModuloSkSchedule:
    L = p.cell
    target_var = (L / (2.0 * p.kappa)) ** 2
    q = target_var - p.sigma2_fb
    if not q > 0:
        raise ConfigurationError(
            f"kappa={p.kappa:g} infeasible: feedback SNR must exceed "
            f"{min_feedback_snr_db(p.kappa):.2f} dB (got {linear_to_db(p.feedback_snr):.2f} dB)"
        )
    n = p.n_rounds
    rho2 = q / target_var
    snr = p.snr
    step = math.log1p(-rho2 * snr / (1.0 + snr))
    log_sigma2 = -math.log(snr) + step * np.arange(n)
    log_sigma = 0.5 * log_sigma2[:-1]
    half_log_p = 0.5 * math.log(p.p_ff)
    half_log_rho2 = 0.5 * math.log(rho2)
    beta = np.exp(0.5 * math.log(q) - log_sigma)
    gain = np.exp(half_log_p + half_log_rho2 - log_sigma)
    mmse = np.exp(half_log_p + half_log_rho2 + log_sigma - math.log(p.p_ff + p.sigma2_ff))
    return ModuloSkSchedule(p.kappa, L, p.sigma2_fb, log_sigma2, beta, gain, mmse,
                            np.full(n - 1, rho2))


def aliasing_probability(sched: ModuloSkSchedule, n: int) -> float:
    """Probability that feedback round ``n`` (0-based) folds, Gaussian model."""
    if not 0 <= n < sched.n_rounds - 1:
        raise IndexError(f"feedback round {n} out of range")
    spread = math.sqrt(sched.beta[n] ** 2 * sched.sigma2_eps[n] + sched.sigma2_fb)
    return float(2.0 * q_func(0.5 * sched.cell / spread))


def choose_kappa(p: ModuloSkParams, grid=KAPPA_GRID) -> tuple[float, float]:
    """Margin from ``grid`` minimizing the symbol-error union bound.

    Returns ``(kappa, bound)``; raises if no grid value is feasible.
    """
    best = None
    for kappa in grid:
        trial = p.with_kappa(kappa)
        try:
            sched = modulo_sk_schedule(trial)
        except ConfigurationError:
            continue
        bound = union_ser_bound(trial.k_bits, sched.log_sigma2_eps[-1],
                                [aliasing_probability(sched, n) for n in range(sched.n_rounds - 1)])
        if best is None or bound < best[1]:
            best = (kappa, bound)
    if best is None:
        raise ConfigurationError(
            f"no kappa in [{min(grid):g}, {max(grid):g}] is feasible; feedback SNR must exceed "
            f"{min_feedback_snr_db(min(grid)):.2f} dB"
        )
    return best


def _lattice_turns(sched: ModuloSkSchedule, log_a: float) -> np.ndarray:
    """``beta_n * a / L``: cell turns per unit step of the odd index."""
    return np.exp(np.log(sched.beta) + log_a - math.log(sched.cell))


def _phase_words(turns: np.ndarray) -> np.ndarray:
    """64-bit fixed-point fractional parts of ``turns``."""
    frac = turns - np.floor(turns)
    words = np.floor(frac * _TWO64)
    words = np.where(words >= _TWO64, 0.0, words)
    # exact for frac < 1: float -> uint64 through Python ints
    return np.array([int(w) for w in words], dtype=np.uint64)


def _lattice_offset(phase_word: np.uint64, odd_index: np.ndarray, cell: float) -> np.ndarray:
    """``beta * a * j mod L`` as a value in [0, L)."""
    with np.errstate(over="ignore"):
        prod = odd_index.view(np.uint64) * phase_word
    return (prod >> np.uint64(11)).astype(np.float64) * (cell * 2.0**-53)


def run_batch(p: ModuloSkParams, labels, ch: ChannelPair, sched: ModuloSkSchedule | None = None,
              dither: np.ndarray | None = None, record: bool = False) -> BatchOutcome:
    """Run Modulo-SK for a batch of messages (integer Gray labels).

    ``dither`` is the common random sequence, shape (batch, N-1), uniform
    on [0, 1) in cell units; it is ignored unless ``p.dither_enabled``.
    """
    sched = modulo_sk_schedule(p) if sched is None else sched
    c = p.constellation
    m = c.m_points
    L = sched.cell
    labels = np.asarray(labels, dtype=np.uint64)
    batch = len(labels)
    index = pam.gray_to_binary(labels).astype(np.int64)
    odd_true = 2 * index - (m - 1)
    n = p.n_rounds
    use_dither = p.dither_enabled and n > 1
    if use_dither:
        if dither is None:
            raise ConfigurationError("dither enabled but no dither sequence supplied")
        dither = np.atleast_2d(dither)

    log_dmin = math.log(2.0) + c.log_spacing_half
    turns = _lattice_turns(sched, c.log_spacing_half)
    gain_d = np.exp(np.log(sched.gain) + log_dmin)
    coef_d = np.exp(np.log(sched.mmse_coef) - log_dmin)
    eps_norm = np.exp(log_dmin - 0.5 * sched.log_sigma2_eps)
    phases = _phase_words(turns)
    # the phase word keeps only the bits of frac(turns) above 2^-64, which for
    # small early-round turns is far fewer than 53; take the fine-part zoom
    # from the quantized phase so both parts use the same beta
    turns_q = np.floor(turns) + phases.astype(np.float64) * 2.0**-64
    beta_d = 2.0 * L * turns_q
    sqrt_p = math.sqrt(p.p_ff)

    rounds = RoundDiagnostics.empty(n)
    traj = np.empty((batch, n)) if record else None
    wrapped = np.zeros(batch, dtype=bool)
    wrap_events = np.zeros(batch, dtype=np.int64)
    fb_power_sum = np.zeros(batch)
    fb_symbols = np.empty((batch, n - 1)) if record else None

    y = ch.transmit_ff(sqrt_p * c.point(index))
    stat = SplitStatistic.from_value(y / sqrt_p, c)
    for r in range(n):
        e = stat.error(index)
        clean = ~wrapped
        ratio = (e[clean] * eps_norm[r]) ** 2
        rounds.eps_ratio_sum[r] += ratio.sum()
        rounds.eps_count[r] += int(clean.sum())
        if record:
            traj[:, r] = e * c.d_min
        if r == n - 1:
            break

        # receiver: fold the zoomed estimate (plus dither) into the cell
        odd_hat = 2 * stat.coarse - (m - 1)
        d = dither[:, r] * L if use_dither else 0.0
        x_fb = mod_centered(_lattice_offset(phases[r], odd_hat, L) + beta_d[r] * stat.fine + d, L)
        y_fb = ch.transmit_fb(x_fb)
        fb_power_sum += x_fb * x_fb
        rounds.fb_sq_sum[r] += float(np.sum(x_fb * x_fb))
        rounds.fb_count[r] += batch
        if record:
            fb_symbols[:, r] = x_fb

        # transmitter: remove its own lattice point and the dither, unfold
        v = mod_centered(y_fb - _lattice_offset(phases[r], odd_true, L) - d, L)
        unfolded = beta_d[r] * e + (y_fb - x_fb)
        wrap_now = np.abs(v - unfolded) > 0.25 * L
        rounds.at_risk[r] += int(clean.sum())
        rounds.wrap_first[r] += int((wrap_now & clean).sum())
        wrap_events += wrap_now
        wrapped |= wrap_now

        y = ch.transmit_ff(gain_d[r] * (v / beta_d[r]))
        stat.add(-coef_d[r] * y)

    decided = pam.binary_to_gray(stat.decide())
    extra = {"fb_power_sum": fb_power_sum}
    if record:
        extra["fb_symbols"] = fb_symbols
    return BatchOutcome(
        labels=labels,
        decoded=decided,
        bit_errors=pam.label_bit_errors(labels, decided),
        wrap_events=wrap_events,
        audit=ch.audit,
        rounds=rounds,
        eps_trajectory=traj,
        extra=extra,
    )


def run_trial(p: ModuloSkParams, bits, ch: ChannelPair, sched: ModuloSkSchedule | None = None,
              dither: np.ndarray | None = None) -> TrialOutcome:
    """Single-message form of :func:`run_batch`."""
    c = p.constellation
    if len(bits) != c.k_bits:
        raise ConfigurationError(f"expected {c.k_bits} bits, got {len(bits)}")
    label = np.array([pam.bits_to_label(bits)], dtype=np.uint64)
    return run_batch(p, label, ch, sched, dither, record=True).trial(0)


@dataclass(frozen=True)
class FeedbackPowerVerdict:
    power: float
    limit: float
    symbols: int
    compliant: bool
    uniform_match: bool | None


def feedback_power_check(sum_sq: float, count: int, p: ModuloSkParams,
                         tol: float = 0.01, min_symbols: int = 100_000) -> FeedbackPowerVerdict:
    """Campaign-level feedback power audit.

    Always checks ``power <= p_fb (1 + tol)``; with dither also checks the
    uniform-cell identity ``power = L^2/12 = p_fb`` within ``tol``.
    """
    if count < min_symbols:
        raise ValueError(f"need at least {min_symbols} feedback symbols, got {count}")
    power = sum_sq / count
    compliant = power <= p.p_fb * (1.0 + tol)
    uniform = None
    if p.dither_enabled:
        uniform = abs(power - p.cell**2 / 12.0) <= tol * p.p_fb
    return FeedbackPowerVerdict(power, p.p_fb, count, compliant, uniform)
