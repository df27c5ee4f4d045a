"""Schalkwijk-Kailath and Modulo-SK feedback coding over paired AWGN links."""

from .errors import AuditStateError, ConfigurationError
from .modulo_sk import ModuloSkParams, choose_kappa, modulo_sk_schedule
from .sim import BerEstimate, Scheme, StopRule, run_campaign, sweep
from .sk import SkParams, sk_schedule, sk_ser_prediction

__version__ = "0.1.0"

__all__ = [
    "AuditStateError",
    "BerEstimate",
    "ConfigurationError",
    "ModuloSkParams",
    "Scheme",
    "SkParams",
    "StopRule",
    "choose_kappa",
    "modulo_sk_schedule",
    "run_campaign",
    "sk_schedule",
    "sk_ser_prediction",
    "sweep",
]
