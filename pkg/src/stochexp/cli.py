"""Command-line front end.

Subcommands
-----------
``run``       condition check, ``E z_T``, localisation ladder and verdict as JSON
``check``     growth-condition report only
``girsanov``  ``E_P[z_T f]`` against ``E_Q[f]`` for one or all functionals
``catalog``   ``catalog list`` prints the reference models

Settings come from flags, from a ``--config`` file of ``key = value``
lines with dotted keys (``model.name``, ``model.param.rate``, ``sim.dt``,
``sim.paths``, ``sim.seed``, ``sim.levels``, ``sim.workers``, ``sim.T``,
``output.out``, ``output.csv_paths``), and from ``STOCHEXP_SEED``.  Flags
override the file, the file overrides the environment.

Exit codes: 0 on success, 1 on usage or model errors, 2 when the verdict
is ``contradiction``.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import time
from itertools import islice

import numpy as np

from . import __version__
from .catalog import catalog_get, catalog_list
from .conditions import benes_verdict
from .diagnostics import DEFAULT_LEVELS, ladder_ensemble, martingale_verdict
from .errors import StochExpError, UnknownModel
from .estimates import _jsonable
from .measure_change import FUNCTIONALS, girsanov_consistency
from .simulate import StoppingRule, TimeGrid, simulate_ensemble, write_paths_csv

__all__ = ["RunConfig", "load_config", "main"]

CSV_PATH_LIMIT = 100

_FLAG_KEYS = {
    "model": "model.name", "T": "sim.T", "dt": "sim.dt", "paths": "sim.paths",
    "seed": "sim.seed", "levels": "sim.levels", "workers": "sim.workers",
    "out": "output.out", "csv_paths": "output.csv_paths",
}
_KNOWN = set(_FLAG_KEYS.values()) | {"sim.checkpoints", "girsanov.functional", "girsanov.level"}


class UsageError(StochExpError):
    """Invalid command-line or configuration input."""


class RunConfig:
    """Resolved settings of one command.

    Numeric fields are validated on construction; ``seed`` is required.
    """

    def __init__(self, model: str, seed: int, T: float | None = None, dt: float = 1e-3,
                 paths: int = 100_000, levels=DEFAULT_LEVELS, workers: int = 1,
                 params: dict | None = None, out: str | None = None,
                 csv_paths: str | None = None, checkpoints: int = 10):
        self.model = model
        self.seed = int(seed)
        self.T = None if T is None else float(T)
        self.dt = float(dt)
        self.paths = int(paths)
        self.levels = tuple(float(v) for v in levels)
        self.workers = int(workers)
        self.params = dict(params or {})
        self.out = out
        self.csv_paths = csv_paths
        self.checkpoints = int(checkpoints)
        for name in ("dt", "paths", "workers", "checkpoints"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        if self.T is not None and not self.T > 0:
            raise UsageError("T must be positive")
        if self.seed < 0:
            raise UsageError("seed must be non-negative")
        if any(not v > 0 for v in self.levels) or list(self.levels) != sorted(self.levels):
            raise UsageError("levels must be positive and increasing")

    def to_dict(self) -> dict:
        return {"model": self.model, "params": dict(self.params), "T": self.T, "dt": self.dt,
                "paths": self.paths, "seed": self.seed, "levels": list(self.levels),
                "workers": self.workers, "checkpoints": self.checkpoints,
                "out": self.out, "csv_paths": self.csv_paths}


def load_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (p.strip() for p in line.split("=", 1))
            if key not in _KNOWN and not key.startswith("model.param."):
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    return text


def _levels(text: str):
    try:
        return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)
    except ValueError:
        raise UsageError(f"bad level list {text!r}") from None


def _resolve(args) -> RunConfig:
    settings = load_config(args.config) if getattr(args, "config", None) else {}
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            settings[key] = value
    for item in getattr(args, "param", None) or []:
        if "=" not in item:
            raise UsageError(f"--param expects name=value, got {item!r}")
        name, value = item.split("=", 1)
        settings[f"model.param.{name.strip()}"] = value.strip()
    if "model.name" not in settings:
        raise UsageError("no model given (--model or model.name)")
    seed = settings.get("sim.seed", os.environ.get("STOCHEXP_SEED"))
    if seed is None:
        raise UsageError("a seed is required (--seed, sim.seed or STOCHEXP_SEED)")
    params = {k[len("model.param."):]: _number(str(v))
              for k, v in settings.items() if k.startswith("model.param.")}
    try:
        return RunConfig(
            model=str(settings["model.name"]), seed=int(seed),
            T=None if settings.get("sim.T") is None else float(settings["sim.T"]),
            dt=float(settings.get("sim.dt", 1e-3)),
            paths=int(float(settings.get("sim.paths", 100_000))),
            levels=_levels(settings["sim.levels"]) if "sim.levels" in settings
            else DEFAULT_LEVELS,
            workers=int(settings.get("sim.workers", 1)), params=params,
            out=settings.get("output.out"), csv_paths=settings.get("output.csv_paths"),
            checkpoints=int(settings.get("sim.checkpoints", 10)))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _entry_and_grid(cfg: RunConfig):
    try:
        entry = catalog_get(cfg.model, **cfg.params)
    except TypeError as exc:
        raise UsageError(f"bad parameters for {cfg.model}: {exc}") from None
    spec = entry.spec
    if cfg.T is not None and cfg.T != spec.horizon:
        try:
            entry = catalog_get(cfg.model, **{**cfg.params, "horizon": cfg.T})
        except TypeError:
            raise UsageError(f"{cfg.model} has a fixed horizon {spec.horizon:g}") from None
    try:
        grid = TimeGrid(entry.spec.horizon, cfg.dt)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return entry, grid


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True, allow_nan=True)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _runtime(start: float, stamp: bool) -> dict:
    if not stamp:
        return {"seconds": None, "timestamp": None}
    return {"seconds": round(time.perf_counter() - start, 3),
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()}


def cmd_run(cfg: RunConfig, stamp: bool = True, girsanov: bool = False) -> tuple[dict, int]:
    """Full pipeline for one model; returns the report and the exit code."""
    start = time.perf_counter()
    entry, grid = _entry_and_grid(cfg)
    spec = entry.spec
    cond = benes_verdict(spec)
    ens = ladder_ensemble(spec, grid, cfg.levels, cfg.paths, cfg.seed, cfg.workers,
                          entry.variant)
    rec = martingale_verdict(spec, grid, cfg.paths, cfg.seed, cfg.levels, cfg.workers,
                             variant=entry.variant, conditions=cond, ensemble=ens)
    gir = None
    if girsanov:
        reps = girsanov_consistency(spec, list(FUNCTIONALS), grid, cfg.paths, cfg.seed,
                                    workers=cfg.workers, verdict=cond.verdict,
                                    variant=entry.variant)
        gir = [r.to_dict() for r in reps]
    if cfg.csv_paths:
        rule = StoppingRule(cfg.levels[-1], entry.variant)
        n = min(cfg.paths, CSV_PATH_LIMIT)
        write_paths_csv(cfg.csv_paths, islice(
            simulate_ensemble(spec, grid, rule, n, cfg.seed, cfg.workers), n))
    report = {
        "config": cfg.to_dict(),
        "conditions": cond.to_dict(),
        "ez": None if rec.ez is None else rec.ez.to_dict(),
        "ladder": rec.ladder.to_dict(),
        "ui_diagnostic": rec.ui.to_dict(),
        "girsanov": gir,
        "verdict": {**rec.to_dict(), "expected_condition_verdict": entry.expected_verdict,
                    "expected_ez": str(entry.expected_ez)},
        "runtime": _runtime(start, stamp),
        "version": __version__,
    }
    return report, (2 if rec.category == "contradiction" else 0)


def cmd_check(model: str, params: dict | None = None) -> dict:
    """Growth-condition report of a catalog model."""
    entry = catalog_get(model, **(params or {}))
    rep = benes_verdict(entry.spec)
    return {"model": model, "expected_verdict": entry.expected_verdict,
            "conditions": rep.to_dict(), "version": __version__}


def cmd_girsanov(cfg: RunConfig, functional: str = "all", level: float | None = None,
                 stamp: bool = True) -> dict:
    """P-side against Q-side comparison for one or all functionals."""
    start = time.perf_counter()
    entry, grid = _entry_and_grid(cfg)
    names = list(FUNCTIONALS) if functional == "all" else [functional]
    reps = girsanov_consistency(entry.spec, names, grid, cfg.paths, cfg.seed, level=level,
                                workers=cfg.workers, variant=entry.variant)
    return {"config": cfg.to_dict(), "girsanov": [r.to_dict() for r in reps],
            "runtime": _runtime(start, stamp), "version": __version__}


def cmd_catalog() -> str:
    """Tab-separated listing: name, dependence, expected verdict, provenance."""
    rows = [f"{e.name}\t{e.dependence}\t{e.expected_verdict}/{e.expected_ez}\t{e.provenance}"
            for e in catalog_list()]
    return "\n".join(rows)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model")
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--param", action="append", metavar="NAME=VALUE",
                        help="model factory parameter (repeatable)")
    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--T", type=float)
    sim.add_argument("--dt", type=float)
    sim.add_argument("--paths", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--levels", help="comma-separated increasing stopping levels")
    sim.add_argument("--workers", type=int)
    sim.add_argument("--out")
    sim.add_argument("--no-timestamp", action="store_true")

    p = argparse.ArgumentParser(prog="stochexp", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"stochexp {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common, sim], help="full pipeline as JSON")
    run.add_argument("--csv-paths", dest="csv_paths",
                     help=f"write the first {CSV_PATH_LIMIT} paths as CSV")
    run.add_argument("--girsanov", action="store_true", help="add the Girsanov comparison")
    check = sub.add_parser("check", parents=[common], help="growth conditions only")
    check.add_argument("--out")
    gir = sub.add_parser("girsanov", parents=[common, sim], help="measure-change comparison")
    gir.add_argument("--functional", default="all", choices=("all", *FUNCTIONALS))
    gir.add_argument("--level", type=float)
    cat = sub.add_parser("catalog", help="reference models")
    cat.add_argument("action", choices=("list",))
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 1
    try:
        if args.command == "catalog":
            print(cmd_catalog())
            return 0
        if args.command == "check":
            model = args.model
            if args.config and model is None:
                model = load_config(args.config).get("model.name")
            if model is None:
                raise UsageError("no model given (--model or model.name)")
            params = {}
            for item in args.param or []:
                name, _, value = item.partition("=")
                params[name.strip()] = _number(value.strip())
            _emit(cmd_check(model, params), args.out)
            return 0
        cfg = _resolve(args)
        if args.command == "run":
            report, code = cmd_run(cfg, stamp=not args.no_timestamp, girsanov=args.girsanov)
            _emit(report, cfg.out)
            return code
        report = cmd_girsanov(cfg, args.functional, args.level, stamp=not args.no_timestamp)
        _emit(report, cfg.out)
        return 0
    except UnknownModel as exc:
        print(f"stochexp: {exc.args[0]}", file=sys.stderr)
        return 1
    except (UsageError, OSError, ValueError) as exc:
        print(f"stochexp: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
