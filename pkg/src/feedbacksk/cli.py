"""Command-line front end: figure-style sweeps written as CSV + sidecar.

Every run writes ``<out>`` (CSV) and ``<out minus .csv>.meta``; the sidecar
is itself a valid config file, so ``feedbacksk rerun X.meta`` regenerates
the same CSV byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path

from . import __version__
from .bounds import (CONVERSE_CAVEAT, awgn_capacity, bler_to_ber_lower, msk_ser_upper_bound,
                     no_feedback_converse_bler)
from .errors import ConfigurationError
from .modulo_sk import ModuloSkParams, choose_kappa, feedback_power_check, modulo_sk_schedule
from .numerics import db_to_linear
from .sim import Scheme, StopRule, sweep
from .sk import SkParams, sk_ser_prediction

log = logging.getLogger("feedbacksk")

COMMANDS = ("fb-sweep", "ff-sweep", "sk-curves", "bounds")

FB_SWEEP_COLUMNS = (
    "feedback_snr_db", "ber", "ser", "ci_low", "ci_high", "trials", "bit_errors",
    "bound_ber_upper", "converse_ber_lower_n39", "converse_ber_lower_n150",
    "fb_power_empirical", "compliant",
)
FF_SWEEP_COLUMNS = (
    "n_rounds", "forward_snr_db", "ber", "ser", "ci_low", "ci_high", "trials", "bit_errors",
    "bound_ber_upper", "converse_ber_lower", "fb_power_empirical", "compliant",
)
SK_CURVES_COLUMNS = (
    "k_bits", "n_rounds", "forward_snr_db", "ber", "ser", "ci_low", "ci_high", "trials",
    "bit_errors", "symbol_errors", "sk_ser_prediction",
)
BOUNDS_COLUMNS = (
    "feedback_snr_db", "kappa", "bound_ser_upper", "bound_ber_upper",
    "converse_ber_lower_n39", "converse_ber_lower_n150", "capacity_bits", "rate",
)

_DEFAULTS = {
    "fb-sweep": dict(n_rounds="39", forward_snr_db="0", feedback_snr_db="10:20:1"),
    "ff-sweep": dict(n_rounds="15,39,150", forward_snr_db="-1:2:0.5", feedback_snr_db="27"),
    "sk-curves": dict(n_rounds="15,39,150", forward_snr_db="-3:1:0.25",
                      feedback_snr_db="noiseless"),
    "bounds": dict(n_rounds="39", forward_snr_db="0", feedback_snr_db="10:20:1"),
}


# ---------------------------------------------------------------------------
# config

def _parse_grid(text: str) -> tuple[float, ...]:
    text = str(text).strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ConfigurationError(f"grid {text!r} must be start:stop:step with step > 0")
        start, stop, step = parts
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 10) for i in range(max(count, 0)))
    return tuple(float(x) for x in text.split(",") if x.strip())


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {text!r}")


def _fmt_grid(values) -> str:
    return ",".join(repr(float(v)) for v in values)


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    rate: Fraction = Fraction(1, 3)
    k_bits: int | None = None
    n_rounds: tuple[int, ...] = (39,)
    forward_snr_db: tuple[float, ...] = (0.0,)
    feedback_snr_db: tuple[float, ...] | None = None
    dither: bool = False
    kappa: float | None = None
    seed: int = 1
    dither_seed: int = 2
    max_trials: int = 1_000_000
    target_errors: int = 100
    ber_floor: float = 1e-8
    out: str = "results.csv"

    def k_for(self, n: int) -> int:
        k = self.rate * n
        if k.denominator != 1 or k < 1:
            raise ConfigurationError(f"rate*n_rounds = {k} is not a positive integer (n_rounds={n})")
        if self.k_bits is not None and len(self.n_rounds) == 1 and self.k_bits != int(k):
            raise ConfigurationError(f"k_bits={self.k_bits} disagrees with rate*n_rounds={k}")
        return int(k)

    @property
    def stop(self) -> StopRule:
        return StopRule(self.max_trials, self.target_errors, self.ber_floor)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "rate":
                v = f"{v.numerator}/{v.denominator}"
            elif f.name in ("forward_snr_db",):
                v = _fmt_grid(v)
            elif f.name == "feedback_snr_db":
                v = "noiseless" if v is None else _fmt_grid(v)
            elif f.name == "n_rounds":
                v = ",".join(str(n) for n in v)
            elif f.name == "kappa":
                v = "auto" if v is None else repr(float(v))
            elif f.name == "k_bits":
                v = "auto" if v is None else str(v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_CONVERTERS = {
    "command": str,
    "rate": lambda s: Fraction(str(s).strip()),
    "k_bits": lambda s: None if str(s).strip() == "auto" else int(s),
    "n_rounds": lambda s: tuple(int(x) for x in str(s).split(",") if x.strip()),
    "forward_snr_db": _parse_grid,
    "feedback_snr_db": lambda s: None if str(s).strip() == "noiseless" else _parse_grid(s),
    "dither": _parse_bool,
    "kappa": lambda s: None if str(s).strip() == "auto" else float(s),
    "seed": int,
    "dither_seed": int,
    "max_trials": int,
    "target_errors": int,
    "ber_floor": float,
    "out": str,
}


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        values[key] = value
    return values


def build_config(command: str, raw: dict) -> ExperimentConfig:
    unknown = set(raw) - set(_CONVERTERS)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(_DEFAULTS[command])
    merged.update({k: v for k, v in raw.items() if v is not None})
    merged["command"] = command
    try:
        kwargs = {k: _CONVERTERS[k](v) for k, v in merged.items()}
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"bad config value: {exc}") from exc
    cfg = ExperimentConfig(**kwargs)
    if not cfg.n_rounds:
        raise ConfigurationError("n_rounds list is empty")
    if not cfg.forward_snr_db:
        raise ConfigurationError("forward_snr_db grid is empty")
    if cfg.feedback_snr_db is not None and not cfg.feedback_snr_db:
        raise ConfigurationError("feedback_snr_db grid is empty")
    for n in cfg.n_rounds:
        cfg.k_for(n)
    return cfg


# ---------------------------------------------------------------------------
# commands

def _f(x) -> str:
    return "" if x is None else repr(float(x))


def _converse_ber(n: int, rate: Fraction, snr: float) -> float:
    """No-feedback block-error converse per information bit at length ``n``."""
    k = max(1, round(rate * n))
    return bler_to_ber_lower(no_feedback_converse_bler(n, float(rate), snr), k)


def _msk_params(cfg: ExperimentConfig, n: int, fwd_db: float, fb_db: float | None) -> ModuloSkParams:
    return ModuloSkParams.from_snr_db(n, cfg.k_for(n), fwd_db, fb_db,
                                      kappa=cfg.kappa if cfg.kappa is not None else 4.5,
                                      dither_enabled=cfg.dither, dither_seed=cfg.dither_seed)


def _resolve_kappa(cfg: ExperimentConfig, params: ModuloSkParams) -> ModuloSkParams:
    if cfg.kappa is None:
        kappa, _ = choose_kappa(params)
        return params.with_kappa(kappa)
    return params


def _msk_rows(cfg: ExperimentConfig, axis: str, n: int, meta: list[str], workers: int):
    """Simulate one Modulo-SK curve; yields (abscissa, params, result|None, bound)."""
    fwd = cfg.forward_snr_db
    fbs = cfg.feedback_snr_db
    if axis == "feedback_snr_db":
        if len(fwd) != 1:
            raise ConfigurationError("fb-sweep takes a single forward_snr_db value")
        base, grid = _msk_params(cfg, n, fwd[0], fbs[0]), fbs
    else:
        if fbs is not None and len(fbs) != 1:
            raise ConfigurationError("ff-sweep takes a single feedback_snr_db value")
        base = _msk_params(cfg, n, fwd[0], None if fbs is None else fbs[0])
        grid = fwd
    points = sweep(axis, grid, base, cfg.stop, cfg.seed, scheme=Scheme.MODULO_SK,
                   auto_kappa=cfg.kappa is None, workers=workers)
    for pt in points:
        params = pt.params
        bound = None
        if pt.feasible:
            bound = msk_ser_upper_bound(params, modulo_sk_schedule(params))
            meta.append(f"# n_rounds={n} {axis}={pt.abscissa!r}: kappa={params.kappa!r} "
                        f"stop={pt.result.meta['stop_reason']}")
        else:
            meta.append(f"# n_rounds={n} {axis}={pt.abscissa!r}: infeasible ({pt.error})")
        yield pt, bound


def _compliance(params: ModuloSkParams, result) -> tuple[float | None, str, str]:
    audit = result.audit
    if audit.count_fb == 0:
        return None, "true", "no feedback transmissions"
    power = audit.power_fb
    ff_ok = audit.power_ff <= params.p_ff * 1.01
    try:
        verdict = feedback_power_check(audit.sum_sq_fb, audit.count_fb, params, min_symbols=1)
        ok = verdict.compliant and ff_ok and verdict.uniform_match is not False
    except ValueError:
        ok = False
    note = f"fb_power={power!r} ff_power={audit.power_ff!r}"
    return power, "true" if ok else "false", note


def cmd_fig_feedback_sweep(cfg: ExperimentConfig, workers: int = 1) -> tuple[str, list[str]]:
    if cfg.feedback_snr_db is None:
        raise ConfigurationError("fb-sweep needs a feedback_snr_db grid")
    if len(cfg.n_rounds) != 1:
        raise ConfigurationError("fb-sweep takes a single n_rounds value")
    n = cfg.n_rounds[0]
    k = cfg.k_for(n)
    snr = float(db_to_linear(cfg.forward_snr_db[0]))
    conv39 = _converse_ber(39, cfg.rate, snr)
    conv150 = _converse_ber(150, cfg.rate, snr)
    meta: list[str] = []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FB_SWEEP_COLUMNS)
    for pt, bound in _msk_rows(cfg, "feedback_snr_db", n, meta, workers):
        if not pt.feasible:
            w.writerow([_f(pt.abscissa), "", "", "", "", "", "", "", _f(conv39), _f(conv150), "", ""])
            continue
        est = pt.result.estimate
        power, compliant, note = _compliance(pt.params, pt.result)
        meta.append(f"#   audit {note} compliant={compliant}")
        w.writerow([_f(pt.abscissa), _f(est.ber), _f(est.ser), _f(est.ci_low), _f(est.ci_high),
                    est.trials, est.bit_errors, _f(bound / k), _f(conv39), _f(conv150),
                    _f(power), compliant])
    return buf.getvalue(), meta


def cmd_fig_forward_sweep(cfg: ExperimentConfig, workers: int = 1) -> tuple[str, list[str]]:
    if not cfg.n_rounds:
        raise ConfigurationError("ff-sweep needs at least one n_rounds value")
    meta: list[str] = []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FF_SWEEP_COLUMNS)
    for n in cfg.n_rounds:
        k = cfg.k_for(n)
        for pt, bound in _msk_rows(cfg, "forward_snr_db", n, meta, workers):
            conv = _converse_ber(n, cfg.rate, float(db_to_linear(pt.abscissa)))
            if not pt.feasible:
                w.writerow([n, _f(pt.abscissa), "", "", "", "", "", "", "", _f(conv), "", ""])
                continue
            est = pt.result.estimate
            power, compliant, note = _compliance(pt.params, pt.result)
            meta.append(f"#   audit {note} compliant={compliant}")
            w.writerow([n, _f(pt.abscissa), _f(est.ber), _f(est.ser), _f(est.ci_low),
                        _f(est.ci_high), est.trials, est.bit_errors, _f(bound / k), _f(conv),
                        _f(power), compliant])
    return buf.getvalue(), meta


def _censored(ber: float, floor: float) -> str:
    return f"<{floor:g}" if ber < floor else _f(ber)


def cmd_sk_curves(cfg: ExperimentConfig, workers: int = 1) -> tuple[str, list[str]]:
    if cfg.feedback_snr_db is not None:
        raise ConfigurationError(
            "sk-curves is for noiseless feedback; use fb-sweep or ff-sweep for noisy feedback"
        )
    meta: list[str] = []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SK_CURVES_COLUMNS)
    for n in cfg.n_rounds:
        k = cfg.k_for(n)
        base = SkParams.from_snr_db(n, k, cfg.forward_snr_db[0])
        for pt in sweep("forward_snr_db", cfg.forward_snr_db, base, cfg.stop, cfg.seed,
                        scheme=Scheme.SK, workers=workers):
            est = pt.result.estimate
            meta.append(f"# n_rounds={n} forward_snr_db={pt.abscissa!r}: "
                        f"stop={pt.result.meta['stop_reason']}")
            w.writerow([k, n, _f(pt.abscissa), _censored(est.ber, cfg.ber_floor),
                        _censored(est.ser, cfg.ber_floor), _f(est.ci_low), _f(est.ci_high),
                        est.trials, est.bit_errors, est.symbol_errors,
                        _f(sk_ser_prediction(pt.params))])
    return buf.getvalue(), meta


def cmd_bounds_only(cfg: ExperimentConfig, workers: int = 1) -> tuple[str, list[str]]:
    if cfg.feedback_snr_db is None:
        raise ConfigurationError("bounds needs a feedback_snr_db grid")
    n = cfg.n_rounds[0]
    k = cfg.k_for(n)
    rate = float(cfg.rate)
    snr = float(db_to_linear(cfg.forward_snr_db[0]))
    conv39 = _converse_ber(39, cfg.rate, snr)
    conv150 = _converse_ber(150, cfg.rate, snr)
    meta: list[str] = []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BOUNDS_COLUMNS)
    for fb in sorted(cfg.feedback_snr_db):
        params = _msk_params(cfg, n, cfg.forward_snr_db[0], fb)
        kappa = bound = None
        try:
            params = _resolve_kappa(cfg, params)
            bound = msk_ser_upper_bound(params, modulo_sk_schedule(params))
            kappa = params.kappa
        except ConfigurationError as exc:
            meta.append(f"# feedback_snr_db={fb!r}: infeasible ({exc})")
        w.writerow([_f(fb), _f(kappa), _f(bound), _f(None if bound is None else bound / k),
                    _f(conv39), _f(conv150), _f(awgn_capacity(snr)), _f(rate)])
    return buf.getvalue(), meta


_HANDLERS = {
    "fb-sweep": cmd_fig_feedback_sweep,
    "ff-sweep": cmd_fig_forward_sweep,
    "sk-curves": cmd_sk_curves,
    "bounds": cmd_bounds_only,
}


def sidecar_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_suffix(".meta") if out.suffix == ".csv" else out.with_name(out.name + ".meta")


def run_command(cfg: ExperimentConfig, workers: int = 1) -> tuple[Path, Path]:
    """Run ``cfg`` and write its CSV and sidecar; returns both paths."""
    csv_text, notes = _HANDLERS[cfg.command](cfg, workers)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv_text)
    side = sidecar_path(out)
    header = [f"# feedbacksk {__version__} run metadata",
              "# rerun with: feedbacksk rerun " + side.name]
    if cfg.command in ("fb-sweep", "ff-sweep", "bounds"):
        header.append("# caveat: " + CONVERSE_CAVEAT)
    side.write_text("\n".join(header) + "\n" + cfg.to_text() + "\n".join(notes) + "\n")
    return out, side


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feedbacksk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--rate")
        p.add_argument("--k-bits")
        p.add_argument("--n-rounds", help="comma-separated list")
        p.add_argument("--forward-snr-db", help="value, list a,b,c or grid start:stop:step")
        p.add_argument("--feedback-snr-db", help="value, list, grid, or 'noiseless'")
        p.add_argument("--dither", action="store_const", const="true", default=None)
        p.add_argument("--kappa", help="margin or 'auto'")
        p.add_argument("--seed")
        p.add_argument("--dither-seed")
        p.add_argument("--max-trials")
        p.add_argument("--target-errors")
        p.add_argument("--ber-floor")
        p.add_argument("--out")
        p.add_argument("--workers", type=int, default=1)
    r = sub.add_parser("rerun", help="repeat a run from its .meta sidecar")
    r.add_argument("sidecar")
    r.add_argument("--out")
    r.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "rerun":
            raw = parse_config_text(Path(args.sidecar).read_text())
            command = raw.pop("command")
            if args.out:
                raw["out"] = args.out
            cfg = build_config(command, raw)
        else:
            raw = parse_config_text(Path(args.config).read_text()) if args.config else {}
            raw.pop("command", None)
            for key in _CONVERTERS:
                val = getattr(args, key, None)
                if val is not None and key != "command":
                    raw[key] = val
            cfg = build_config(args.command, raw)
        out, side = run_command(cfg, workers=args.workers)
    except (ConfigurationError, OSError) as exc:
        print(f"feedbacksk: error: {exc}", file=sys.stderr)
        return 2
    log.info("wrote %s and %s", out, side)
    return 0


if __name__ == "__main__":
    sys.exit(main())
