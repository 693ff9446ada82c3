"""``osc-sde`` command line.

Exit codes: 0 success, 2 configuration error, 3 numerical blow-up, 4 a check
failed in ``validate``.  Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .core import BlowUpError
from .schemes import SCHEMES

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_CHECK = 0, 2, 3, 4

_POWER = re.compile(r"^\s*([0-9.]+)\s*\^\s*(-?[0-9]+)\s*$")


class ConfigError(ValueError):
    pass


def parse_number(text: str) -> float:
    """A float, or a power written ``2^-4``."""
    m = _POWER.match(text)
    if m:
        return float(m.group(1)) ** int(m.group(2))
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None


def parse_list(text: str) -> tuple:
    items = [t for t in re.split(r"[,\s]+", text.strip()) if t]
    if not items:
        raise ConfigError("empty list")
    return tuple(parse_number(t) for t in items)


def read_config_file(path) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment; keys use flag names."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


_FIELDS = {
    "problem": str,
    "scheme": str,
    "eps": parse_list,
    "h": parse_list,
    "samples": lambda s: int(parse_number(s)),
    "final_time": parse_number,
    "seed": int,
    "out": str,
    "format": str,
    "threads": int,
    "test_fn": str,
    "ref_refinement": int,
    "x0": parse_list,
    "noise_scale": parse_number,
    "period_scale": parse_number,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osc-sde",
        description="Uniformly accurate schemes for SDEs with oscillatory drift.")
    parser.add_argument("experiment", choices=ex.EXPERIMENTS)
    parser.add_argument("--config", help="key=value file; command-line flags override it")
    parser.add_argument("--problem", help="catalog name (or 'all' for validate)")
    parser.add_argument("--scheme", help="em, integral, micro-macro or all (comma-separated)")
    parser.add_argument("--eps", help="comma-separated epsilons, e.g. 2^-4,2^-6")
    parser.add_argument("--h", help="comma-separated step sizes, e.g. 2^-1,2^-2")
    parser.add_argument("--samples", help="Monte Carlo sample count M")
    parser.add_argument("--final-time", help="final time T")
    parser.add_argument("--seed", help="master seed (falls back on $OSC_SDE_SEED)")
    parser.add_argument("--out", help="output file (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument("--threads", help="worker threads; never changes results")
    parser.add_argument("--test-fn", help="weak test function: x1 or sum")
    parser.add_argument("--ref-refinement", help="reference refinement below the finest h")
    parser.add_argument("--x0", help="initial state override")
    parser.add_argument("--noise-scale", help="override the problem's noise amplitude")
    parser.add_argument("--period-scale", help="validate: multiply catalog periods (fault injection)")
    return parser


def _schemes(text):
    names = []
    for item in text.split(","):
        item = item.strip()
        if item == "all":
            names.extend(SCHEMES)
        elif item in SCHEMES:
            names.append(item)
        else:
            raise ConfigError(f"unknown scheme {item!r}")
    return tuple(dict.fromkeys(names))


def resolve_config(args, environ=os.environ) -> ex.ExperimentConfig:
    """Defaults, then config file, then ``$OSC_SDE_SEED`` for the seed, then flags."""
    raw = read_config_file(args.config) if args.config else {}
    for key in raw:
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
    for key in _FIELDS:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    if "seed" not in raw and environ.get("OSC_SDE_SEED"):
        raw["seed"] = environ["OSC_SDE_SEED"]

    config = ex.default_config(args.experiment)
    updates = {}
    try:
        for key, text in raw.items():
            value = _FIELDS[key](text)
            if key == "scheme":
                updates["schemes"] = _schemes(value)
            else:
                updates[key] = value
        if args.experiment == "resonance" and "h" not in updates and "eps" in updates:
            updates["h"] = (0.99 * 2.0 * math.pi * updates["eps"][0],)
        return replace(config, **updates)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _error(kind, message, code, **extra):
    record = {"error": kind, "message": message, "exit_code": code, **extra}
    sys.stderr.write(json.dumps(record) + "\n")
    return code


def execute(config: ex.ExperimentConfig) -> int:
    prov = config.provenance()
    if config.experiment in ("weak-conv", "strong-conv", "sweep"):
        runner = {"weak-conv": ex.run_weak_conv, "strong-conv": ex.run_strong_conv,
                  "sweep": ex.run_sweep}[config.experiment]
        table = runner(config)
        _emit(table.to_csv(prov) if config.format == "csv" else table.to_json(prov), config.out)
        return EXIT_OK

    if config.experiment == "resonance":
        doc = ex.resonance_document(ex.run_resonance(config), config)
        if config.format == "json":
            _emit(json.dumps(doc, indent=1) + "\n", config.out)
            return EXIT_OK
        table = ex.ErrorTable()
        for name, err in doc["endpoint_errors"].items():
            table.add(ex.ErrorRow("resonance", config.problem, name, doc["epsilon"], doc["h"], 1,
                                  math.inf if err is None else err, 0.0, seed=config.seed))
        _emit(table.to_csv(prov), config.out)
        if config.out:
            Path(str(config.out) + ".paths.json").write_text(json.dumps(doc, indent=1) + "\n")
        return EXIT_OK

    checks = ex.run_validate(config)
    lines = "".join(c.line() + "\n" for c in checks)
    if config.out:
        report = {"config": prov, "checks": [c.__dict__ for c in checks]}
        Path(config.out).write_text(json.dumps(report, indent=1) + "\n")
    sys.stdout.write(lines)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
    except (ConfigError, OSError) as exc:
        return _error("config", str(exc), EXIT_CONFIG)
    try:
        return execute(config)
    except BlowUpError as exc:
        return _error("blow-up", str(exc), EXIT_BLOWUP, step=exc.step, path=exc.path)
    except ValueError as exc:
        return _error("config", str(exc), EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
