"""Command line interface: ``obcal estimate | simulate | enumerate``.

Exit codes: 0 success, 1 input/output or data errors, 2 invalid
configuration. Output files are written to a temporary file and renamed, so
a failed run never leaves a partial report behind.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .estimators import BASE_LEARNERS, ESTIMATORS, compute_estimators
from .experiment import (
    ENUMERATION_CAP,
    DataFormatError,
    load_csv,
    load_population_csv,
)
from .inference import report_from_output
from .simulation import exact_randomization_distribution, simulate_table

logger = logging.getLogger("obcal")

COMMANDS = ("estimate", "simulate", "enumerate")
EXTRA_FEATURES = ("none", "identity")


class ConfigError(ValueError):
    pass


class InputError(RuntimeError):
    pass


@dataclass
class RunConfig:
    command: str
    input_path: Optional[str] = None
    output_path: Optional[str] = None
    family: Optional[str] = None
    estimators: tuple[str, ...] = ()
    extra_features: str = "identity"
    level: float = 0.95
    seed: int = 0
    S: int = 100
    B: int = 500
    N: tuple[int, ...] = (1000,)
    n1_frac: float = 0.3
    n1: Optional[int] = None
    cap: int = ENUMERATION_CAP
    workers: int = field(default=1, compare=False)

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.family is None:
            self.family = "logistic" if self.command == "simulate" else "ols"
        if self.family not in BASE_LEARNERS:
            raise ConfigError(f"family must be one of {BASE_LEARNERS}, got {self.family!r}")
        if not self.estimators:
            self.estimators = {
                "estimate": ("unadj", "lin", "gob", "gbcal", "cal"),
                "simulate": ("gob", "gbcal", "cal"),
                "enumerate": ("unadj",),
            }[self.command]
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ConfigError(f"unknown estimators {bad}; choose from {ESTIMATORS}")
        if self.extra_features not in EXTRA_FEATURES:
            raise ConfigError(f"extra-features must be one of {EXTRA_FEATURES}")
        if "cal2" in self.estimators and self.extra_features == "none":
            raise ConfigError("cal2 needs extra features; use --extra-features identity")
        if not 0 < self.level < 1:
            raise ConfigError(f"level must be in (0, 1), got {self.level}")
        if self.command in ("estimate", "enumerate") and not self.input_path:
            raise ConfigError(f"{self.command} requires --input")
        if self.command == "simulate":
            if self.S < 1:
                raise ConfigError(f"S must be at least 1, got {self.S}")
            if self.B < 2:
                raise ConfigError(f"B must be at least 2 (variance undefined), got {self.B}")
            if not self.N or any(n < 2 for n in self.N):
                raise ConfigError(f"invalid N values {self.N}")
            if not 0 < self.n1_frac < 1:
                raise ConfigError(f"n1-frac must be in (0, 1), got {self.n1_frac}")
            if not [e for e in self.estimators if e != "unadj"]:
                raise ConfigError("simulate needs at least one adjusted estimator")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.cap < 1:
            raise ConfigError("cap must be positive")
        return self

    def echo(self) -> dict:
        """Configuration as recorded in output files (no scheduling knobs)."""
        d = {
            "command": self.command,
            "family": self.family,
            "estimators": list(self.estimators),
            "level": self.level,
            "extra_features": self.extra_features,
        }
        if self.command == "simulate":
            d.update(S=self.S, B=self.B, N=list(self.N), n1_frac=self.n1_frac, seed=self.seed)
        else:
            d["input"] = self.input_path
        if self.command == "enumerate":
            d.update(n1=self.n1, cap=self.cap)
        return d


def _csv_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of flat key/value settings; flags override it")
    common.add_argument("--input")
    common.add_argument("--output", help="report path (default: stdout)")
    common.add_argument("--family", choices=BASE_LEARNERS)
    common.add_argument("--estimators", type=_csv_list, help="comma-separated subset of " + ",".join(ESTIMATORS))
    common.add_argument("--extra-features", dest="extra_features", choices=EXTRA_FEATURES)
    common.add_argument("--level", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--S", dest="S", type=int)
    common.add_argument("--B", dest="B", type=int)
    common.add_argument("--N", dest="N", type=lambda s: [int(v) for v in _csv_list(s)])
    common.add_argument("--n1-frac", dest="n1_frac", type=float)
    common.add_argument("--n1", type=int)
    common.add_argument("--cap", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="obcal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("estimate", parents=[common], help="estimate effects from a z,y,x... CSV")
    sub.add_parser("simulate", parents=[common], help="variance-ratio simulation table")
    sub.add_parser("enumerate", parents=[common], help="exact randomization distribution from a y0,y1,x... CSV")
    return parser


_CONFIG_KEYS = {
    "input": "input_path",
    "output": "output_path",
    "family": "family",
    "estimators": "estimators",
    "extra_features": "extra_features",
    "level": "level",
    "seed": "seed",
    "S": "S",
    "B": "B",
    "N": "N",
    "n1_frac": "n1_frac",
    "n1": "n1",
    "cap": "cap",
    "workers": "workers",
}


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a flat JSON object")
    unknown = set(raw) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    return raw


def make_config(args: argparse.Namespace) -> RunConfig:
    settings: dict = {}
    if args.config:
        settings.update(_load_config_file(args.config))
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    kwargs = {_CONFIG_KEYS[k]: v for k, v in settings.items()}
    try:
        if isinstance(kwargs.get("estimators"), str):
            kwargs["estimators"] = _csv_list(kwargs["estimators"])
        if "estimators" in kwargs:
            kwargs["estimators"] = tuple(kwargs["estimators"])
        if "N" in kwargs:
            N = kwargs["N"]
            kwargs["N"] = tuple(int(n) for n in (N if isinstance(N, (list, tuple)) else [N]))
        for key, typ in (("S", int), ("B", int), ("seed", int), ("cap", int),
                         ("workers", int), ("level", float), ("n1_frac", float)):
            if key in kwargs:
                kwargs[key] = typ(kwargs[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    return RunConfig(command=args.command, **kwargs).validate()


def _write_atomic(path: Optional[str], document: dict) -> None:
    text = json.dumps(document, indent=2, allow_nan=False) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _meta(cfg: RunConfig) -> dict:
    return {"version": __version__, "seed": cfg.seed, "config": cfg.echo()}


def cmd_estimate(cfg: RunConfig) -> dict:
    obs = load_csv(cfg.input_path)
    if min(obs.n0, obs.n1) < 2:
        raise InputError(f"each arm needs at least 2 units for a standard error (n0={obs.n0}, n1={obs.n1})")
    extra = obs.X if cfg.extra_features == "identity" else None
    outputs = compute_estimators(obs, cfg.estimators, family=cfg.family, extra_features=extra)
    results = []
    for name in cfg.estimators:
        report = report_from_output(obs, outputs[name], cfg.level)
        if not report.diagnostics.base_converged:
            logger.warning("%s: base %s fit did not converge; estimate reported with diagnostics set",
                           name, cfg.family)
        results.append(report.to_dict())
    doc = {"meta": _meta(cfg), "results": results}
    _write_atomic(cfg.output_path, doc)
    return doc


def cmd_simulate(cfg: RunConfig) -> dict:
    start = time.perf_counter()
    table = simulate_table(
        cfg.N,
        S=cfg.S,
        B=cfg.B,
        family=cfg.family,
        estimators=cfg.estimators,
        seed=cfg.seed,
        n1_fraction=cfg.n1_frac,
        workers=cfg.workers,
    )
    rows = []
    for row in table.rows:
        if row.flagged_populations:
            logger.warning("N=%d: %d populations had more than 5%% of allocations skipped",
                           row.N, row.flagged_populations)
        rows.append({
            "N": row.N,
            "ratios": row.ratios,
            "skipped": row.skipped,
            "flagged_populations": row.flagged_populations,
            "excluded_populations": row.excluded_populations,
        })
    doc = {"meta": _meta(cfg), "rows": rows}
    _write_atomic(cfg.output_path, doc)
    logger.info("simulation finished in %.1fs", time.perf_counter() - start)
    return doc


def cmd_enumerate(cfg: RunConfig) -> dict:
    pop = load_population_csv(cfg.input_path)
    n1 = cfg.n1 if cfg.n1 is not None else int(math.floor(cfg.n1_frac * pop.N + 1e-9))
    if not 1 <= n1 <= pop.N - 1:
        raise ConfigError(f"n1={n1} leaves an arm empty for N={pop.N}")
    count = math.comb(pop.N, n1)
    if count > cfg.cap:
        raise InputError(f"C({pop.N}, {n1}) = {count} allocations exceeds the cap {cfg.cap}")
    dists = exact_randomization_distribution(pop, n1, cfg.family, cfg.estimators, cap=cfg.cap)
    doc = {
        "meta": _meta(cfg),
        "N": pop.N,
        "n1": n1,
        "allocations": count,
        "tau_bar": pop.tau_bar,
        "results": {name: d.to_dict() for name, d in dists.items()},
    }
    _write_atomic(cfg.output_path, doc)
    return doc


HANDLERS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "enumerate": cmd_enumerate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = make_config(args)
        HANDLERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"obcal: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (InputError, DataFormatError, OSError, ValueError) as exc:
        print(f"obcal: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
