"""Per-trial and per-batch results shared by the scheme engines and ``sim``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import PowerAudit

__all__ = ["TrialOutcome", "RoundDiagnostics", "BatchOutcome"]


@dataclass(frozen=True)
class TrialOutcome:
    bit_errors: int
    symbol_error: int
    wrap_events: int = 0
    fb_power_sum: float = 0.0
    eps_trajectory: np.ndarray | None = None
    decoded_label: int | None = None

    def __post_init__(self):
        if self.symbol_error == 0 and self.bit_errors != 0:
            raise ValueError("bit errors without a symbol error")


@dataclass
class RoundDiagnostics:
    """Per-round sums used for the variance, aliasing and power checks.

    ``eps_ratio_sum[n]`` adds ``eps_n^2 / sigma_eps_n^2`` over the
    ``eps_count[n]`` trials that had not aliased before round n.
    ``wrap_first[n]`` counts trials whose first wrap happened at feedback
    round n out of ``at_risk[n]`` trials still wrap-free.
    """

    eps_ratio_sum: np.ndarray
    eps_count: np.ndarray
    at_risk: np.ndarray
    wrap_first: np.ndarray
    fb_sq_sum: np.ndarray
    fb_count: np.ndarray

    @classmethod
    def empty(cls, n_rounds: int) -> "RoundDiagnostics":
        nf = max(n_rounds - 1, 0)
        return cls(
            np.zeros(n_rounds), np.zeros(n_rounds, dtype=np.int64),
            np.zeros(nf, dtype=np.int64), np.zeros(nf, dtype=np.int64),
            np.zeros(nf), np.zeros(nf, dtype=np.int64),
        )

    def merge(self, other: "RoundDiagnostics") -> "RoundDiagnostics":
        return RoundDiagnostics(
            self.eps_ratio_sum + other.eps_ratio_sum,
            self.eps_count + other.eps_count,
            self.at_risk + other.at_risk,
            self.wrap_first + other.wrap_first,
            self.fb_sq_sum + other.fb_sq_sum,
            self.fb_count + other.fb_count,
        )

    @property
    def eps_variance_ratio(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.eps_ratio_sum / self.eps_count

    @property
    def wrap_rate(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.wrap_first / self.at_risk

    @property
    def fb_power(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.fb_sq_sum / self.fb_count


@dataclass
class BatchOutcome:
    """Results for a block of consecutive trials."""

    labels: np.ndarray
    decoded: np.ndarray
    bit_errors: np.ndarray
    wrap_events: np.ndarray
    audit: PowerAudit
    rounds: RoundDiagnostics
    eps_trajectory: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def symbol_errors(self) -> np.ndarray:
        return self.labels != self.decoded

    def trial(self, i: int) -> TrialOutcome:
        traj = None if self.eps_trajectory is None else self.eps_trajectory[i]
        return TrialOutcome(
            bit_errors=int(self.bit_errors[i]),
            symbol_error=int(self.symbol_errors[i]),
            wrap_events=int(self.wrap_events[i]),
            fb_power_sum=float(self.extra.get("fb_power_sum", np.zeros(len(self.labels)))[i]),
            eps_trajectory=traj,
            decoded_label=int(self.decoded[i]),
        )
