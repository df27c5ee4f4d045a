"""Paired AWGN feedforward/feedback links with empirical power accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AuditStateError

__all__ = ["PowerAudit", "AuditVerdict", "ChannelPair", "audit_report", "AUDIT_TOLERANCE"]

AUDIT_TOLERANCE = 0.01


@dataclass
class PowerAudit:
    """Running sums of squared channel inputs, one pair per link.

    Counts are channel uses.  Audits from independent batches combine with
    :meth:`merge`; merging in a fixed order gives bit-identical totals.
    """

    sum_sq_ff: float = 0.0
    sum_sq_fb: float = 0.0
    count_ff: int = 0
    count_fb: int = 0

    def record_ff(self, x) -> None:
        x = np.asarray(x, dtype=float)
        self.sum_sq_ff += float(np.sum(x * x))
        self.count_ff += x.size

    def record_fb(self, x) -> None:
        x = np.asarray(x, dtype=float)
        self.sum_sq_fb += float(np.sum(x * x))
        self.count_fb += x.size

    def merge(self, other: "PowerAudit") -> "PowerAudit":
        return PowerAudit(
            self.sum_sq_ff + other.sum_sq_ff,
            self.sum_sq_fb + other.sum_sq_fb,
            self.count_ff + other.count_ff,
            self.count_fb + other.count_fb,
        )

    @property
    def power_ff(self) -> float:
        return self.sum_sq_ff / self.count_ff if self.count_ff else math.nan

    @property
    def power_fb(self) -> float:
        return self.sum_sq_fb / self.count_fb if self.count_fb else math.nan


@dataclass(frozen=True)
class AuditVerdict:
    power_ff: float
    power_fb: float
    ff_ok: bool
    fb_ok: bool

    @property
    def compliant(self) -> bool:
        return self.ff_ok and self.fb_ok


def audit_report(audit: PowerAudit, p_ff: float, p_fb: float | None,
                 tol: float = AUDIT_TOLERANCE) -> AuditVerdict:
    """Compare per-use empirical powers against the constraints.

    A link with no recorded uses (e.g. passive noiseless feedback) passes
    trivially; ``p_fb=None`` means the feedback link is unconstrained.
    """
    if audit.count_ff == 0 and audit.count_fb == 0:
        raise AuditStateError("empty power audit")
    pff, pfb = audit.power_ff, audit.power_fb
    ff_ok = audit.count_ff == 0 or pff <= p_ff * (1.0 + tol)
    fb_ok = audit.count_fb == 0 or p_fb is None or pfb <= p_fb * (1.0 + tol)
    return AuditVerdict(pff, pfb, ff_ok, fb_ok)


@dataclass
class ChannelPair:
    """Feedforward and feedback AWGN links for a batch of trials.

    ``ff_noise`` and ``fb_noise`` hold unit-variance samples of shape
    ``(batch, uses)``; each transmit call consumes the next column.  With a
    batch of one this is a single trial's channel.
    """

    sigma2_ff: float
    sigma2_fb: float
    ff_noise: np.ndarray
    fb_noise: np.ndarray | None = None
    audit: PowerAudit = field(default_factory=PowerAudit)
    _ff_use: int = 0
    _fb_use: int = 0

    def __post_init__(self):
        if not self.sigma2_ff >= 0 or not self.sigma2_fb >= 0:
            raise ValueError("noise variances must be nonnegative")
        self.ff_noise = np.atleast_2d(self.ff_noise)
        if self.fb_noise is not None:
            self.fb_noise = np.atleast_2d(self.fb_noise)

    @property
    def noiseless_feedback(self) -> bool:
        return self.sigma2_fb == 0

    def transmit_ff(self, x):
        z = self.ff_noise[:, self._ff_use]
        self._ff_use += 1
        self.audit.record_ff(x)
        if self.sigma2_ff == 0:
            return np.array(x, dtype=float)
        return x + math.sqrt(self.sigma2_ff) * z

    def transmit_fb(self, x):
        self.audit.record_fb(x)
        if self.sigma2_fb == 0:
            self._fb_use += 1
            return np.array(x, dtype=float)
        z = self.fb_noise[:, self._fb_use]
        self._fb_use += 1
        return x + math.sqrt(self.sigma2_fb) * z
