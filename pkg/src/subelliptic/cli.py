"""Command-line front end: ``subell check|certify|estimate|examples list``.

Exit codes: 0 pass, 1 malformed input, 2 failed check or certificate,
3 unstable decay fit.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .certify import GridSpec, certify
from .circle import check_H2
from .decay import DecayGrid, bump_problem, sweep_and_fit
from .errors import (CertificateRefused, ConditionFailure, ConstraintViolation, FitUnstable,
                     MalformedInput, SubellError, SwapImpossible, WeightViolation)
from .symbols import BUILTINS, builtin, negate, parse_symbol, swap_variables

log = logging.getLogger("subelliptic")

DIRECTIONS = {"pos": ("xi_positive",), "neg": ("xi_negative",),
              "both": ("xi_positive", "xi_negative")}
_DIR_ALIASES = {"xi_positive": "pos", "xi_negative": "neg", "positive": "pos", "negative": "neg"}


@dataclass
class RunConfig:
    symbol: dict
    direction: str = "pos"
    swap: bool = False
    grid: GridSpec = field(default_factory=GridSpec)
    decay_grid: DecayGrid = field(default_factory=DecayGrid)
    sweep: dict = field(default_factory=lambda: {"xi_min": 1e2, "xi_max": 1e5, "n_points": 13})
    operator_ratio: bool = True
    n_samples: int = 4096
    output_dir: str = "subell-out"
    seed: int = 0

    def to_json(self):
        return {
            "symbol": self.symbol, "direction": self.direction, "swap": self.swap,
            "grid": self.grid.to_json(), "decay_grid": self.decay_grid.to_json(),
            "sweep": dict(self.sweep), "operator_ratio": self.operator_ratio,
            "n_samples": self.n_samples, "seed": self.seed,
        }


def _dataclass_from(cls, obj, what):
    if not isinstance(obj, dict):
        raise MalformedInput(f"{what} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(obj) - names
    if unknown:
        raise MalformedInput(f"unknown {what} keys: {sorted(unknown)}")
    try:
        return cls(**obj)
    except (TypeError, ValueError) as exc:
        raise MalformedInput(f"bad {what}: {exc}") from None


def load_config(args) -> RunConfig:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise MalformedInput(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise MalformedInput("config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise MalformedInput(f"unknown config keys: {sorted(unknown)}")
    if args.builtin:
        raw["symbol"] = {"builtin": args.builtin}
    if "symbol" not in raw:
        raise MalformedInput("no symbol given (use --builtin or a config with 'symbol')")
    if args.direction:
        raw["direction"] = args.direction
    if args.out:
        raw["output_dir"] = args.out
    if args.seed is not None:
        raw["seed"] = args.seed
    raw["direction"] = _DIR_ALIASES.get(raw.get("direction", "pos"), raw.get("direction", "pos"))
    if raw["direction"] not in DIRECTIONS:
        raise MalformedInput(f"direction must be one of {sorted(DIRECTIONS)}")
    if "grid" in raw:
        raw["grid"] = _dataclass_from(GridSpec, raw["grid"], "grid")
    if "decay_grid" in raw:
        raw["decay_grid"] = _dataclass_from(DecayGrid, raw["decay_grid"], "decay_grid")
    cfg = RunConfig(**raw)
    sw = dict(RunConfig(symbol={}).sweep, **cfg.sweep)
    try:
        sw = {"xi_min": float(sw["xi_min"]), "xi_max": float(sw["xi_max"]), "n_points": int(sw["n_points"])}
    except (TypeError, ValueError, KeyError):
        raise MalformedInput("sweep needs numeric xi_min, xi_max, n_points") from None
    if not (0 < sw["xi_min"] < sw["xi_max"]):
        raise MalformedInput("sweep bounds must satisfy 0 < xi_min < xi_max")
    cfg.sweep = sw
    if not isinstance(cfg.seed, int):
        raise MalformedInput("seed must be an integer")
    return cfg


def resolve_symbol(cfg: RunConfig):
    spec = cfg.symbol
    if isinstance(spec, str):
        spec = {"builtin": spec}
    if isinstance(spec, dict) and "builtin" in spec and spec["builtin"] not in BUILTINS:
        raise MalformedInput(f"unknown builtin {spec['builtin']!r}")
    if not cfg.swap:
        return parse_symbol(spec)
    return swap_variables(parse_symbol(spec, check_constraints=False))


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _write_json(path: Path, obj):
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _signed(sym, direction):
    return sym if direction == "xi_positive" else negate(sym)


# ---------------------------------------------------------------- commands

def cmd_check(cfg: RunConfig, out: Path):
    sym = resolve_symbol(cfg)
    result, ok = {}, True
    for d in DIRECTIONS[cfg.direction]:
        v = check_H2(_signed(sym, d), cfg.n_samples)
        result[d] = v.to_json()
        ok &= v.ok
        failed = v.failed_items()
        print(f"{d}: H2 {'pass' if v.ok else 'FAIL'}"
              + (f", p = {v.p_global}" if v.p_global is not None else "")
              + (f", failing items {failed}" if failed else ""))
    _write_json(out / "verdict.json", {"config": cfg.to_json(), "verdicts": result, "pass": ok})
    return (0 if ok else 2), result


def _certify_direction(sym, d, cfg):
    """Returns (json record, certificate or None)."""
    s = _signed(sym, d)
    verdict = check_H2(s, cfg.n_samples)
    try:
        cert = certify(s, verdict, grid=cfg.grid, seed=cfg.seed, direction=d)
    except CertificateRefused as exc:
        return {"direction": d, "pass": False, "refused": str(exc),
                "witness": {"failed_items": verdict.failed_items(),
                            "items": {str(k): r.to_json() for k, r in verdict.items.items()}}}, None
    except ConditionFailure as exc:
        return {"direction": d, "pass": False, "error": type(exc).__name__, "message": str(exc),
                "witness": exc.witness}, None
    return cert.to_json(), cert


def cmd_certify(cfg: RunConfig, out: Path):
    sym = resolve_symbol(cfg)
    result, certs, ok = {}, {}, True
    for d in DIRECTIONS[cfg.direction]:
        rec, cert = _certify_direction(sym, d, cfg)
        result[d] = rec
        certs[d] = cert
        good = cert is not None and cert.ok
        ok &= good
        if cert is not None:
            print(f"{d}: certificate {'pass' if good else 'FAIL'}, a = {cert.a}, s = {cert.s_order}, "
                  f"C1 = {cert.C1:.4g}, C2 = {cert.C2:.4g}, C3 = {cert.C3:.4g}")
        else:
            print(f"{d}: certificate refused ({rec.get('refused') or rec.get('message')})")
    _write_json(out / "certificate.json", {"config": cfg.to_json(), "certificates": result, "pass": ok})
    return (0 if ok else 2), certs


def cmd_estimate(cfg: RunConfig, out: Path):
    code, certs = cmd_certify(cfg, out)
    sym = resolve_symbol(cfg)
    reports, rows, status = {}, ["direction,xi,M,operator_ratio"], code
    for d, cert in certs.items():
        if cert is None or not cert.ok:
            continue
        s = _signed(sym, d)
        rhs = None
        if cfg.operator_ratio:
            radius = 0.9 * cert.omega_radius
            rhs = lambda xi, s=s, radius=radius: bump_problem(s, radius, xi)[1]
        sw = cfg.sweep
        try:
            rep = sweep_and_fit(s, cert.plans, sw["xi_min"], sw["xi_max"], sw["n_points"],
                                cfg.decay_grid, a=float(cert.a), rhs=rhs)
        except FitUnstable as exc:
            rep = exc.report
            status = max(status, 3)
            print(f"{d}: decay fit unstable ({exc})")
        reports[d] = rep.to_json()
        reports[d]["relative_error"] = rep.relative_error
        rows.extend(d + "," + line for line in rep.csv_rows().splitlines()[1:])
        print(f"{d}: fitted slope {rep.fitted_slope:.4f}, predicted {rep.predicted_slope:.4f} "
              f"(relative error {rep.relative_error:.2%})")
    (out / "decay.csv").write_text("\n".join(rows) + "\n")
    _write_json(out / "report.json", {"config": cfg.to_json(), "reports": reports})
    return status, reports


def cmd_examples_list():
    for name in sorted(BUILTINS):
        sym = builtin(name)
        w = sym.weights
        terms = " + ".join(f"{c:g} t^{j} s^{k}" for j, k, c in sym.monomials)
        print(f"{name:22s} weights ({w.l1}, {w.l2}) m = {w.m}  phi = {terms}")
    return 0


# ---------------------------------------------------------------- entry point

def build_parser():
    p = argparse.ArgumentParser(prog="subell", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("check", "certify", "estimate"):
        q = sub.add_parser(name)
        q.add_argument("--config")
        q.add_argument("--builtin")
        q.add_argument("--direction", choices=sorted(DIRECTIONS))
        q.add_argument("--out")
        q.add_argument("--seed", type=int)
        q.add_argument("-v", "--verbose", action="store_true")
    ex = sub.add_parser("examples")
    ex.add_argument("action", choices=["list"])
    return p


COMMANDS = {"check": cmd_check, "certify": cmd_certify, "estimate": cmd_estimate}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    if args.command == "examples":
        return cmd_examples_list()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.time()
    try:
        cfg = load_config(args)
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        code, _ = COMMANDS[args.command](cfg, out)
    except (MalformedInput, ConstraintViolation, WeightViolation, SwapImpossible) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except SubellError as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    # timestamps live in a sidecar so the main outputs stay byte-identical
    _write_json(out / "meta.json", {"command": args.command, "started": t0,
                                    "elapsed_s": round(time.time() - t0, 3),
                                    "backend": kernels.BACKEND, "version": __version__})
    return code
