"""Command line entry point ``pinlab``.

Environment overrides (used when the matching flag is absent):
``PINLAB_OUT_DIR`` for the output directory and ``PINLAB_WORKERS`` for the
worker count.  Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from pinlab.experiment_cli.config import ConfigError, parse_config, validate
from pinlab.experiment_cli.outputs import emit_outputs, load_result, stem
from pinlab.experiment_cli.svg import render_plot

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pinlab", description="Run pinning-model experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("config", help="path to the config JSON")
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--out", default=None, help="output directory")
    o = sub.add_parser("oracle-suite", help="brute-force equivalence checks on small systems")
    o.add_argument("--tuples", type=int, default=50)
    o.add_argument("--n-max", type=int, default=14)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--workers", type=int, default=None)
    o.add_argument("--out", default=None)
    p = sub.add_parser("plot", help="re-render the SVG of a saved result")
    p.add_argument("result", help="path to a result JSON")
    p.add_argument("--axes", choices=("auto", "linear", "log"), default=None)
    p.add_argument("--out", default=None, help="SVG path (default: next to the JSON)")
    return ap


def _env_int(name: str):
    v = os.environ.get(name)
    if v is None:
        return None
    try:
        return int(v)
    except ValueError:
        raise ConfigError([f"{name}: expected an integer, got {v!r}"]) from None


def _execute(cfg, workers, out) -> int:
    from pinlab.experiment_cli.runner import run_experiment

    workers = workers or _env_int("PINLAB_WORKERS") or cfg.run["workers"]
    if workers < 1:
        raise ConfigError(["workers: must be a positive integer"])
    out = out or os.environ.get("PINLAB_OUT_DIR") or cfg.run["out_dir"]
    result = run_experiment(cfg, workers=workers)
    paths = emit_outputs(result, out, cfg.run["formats"])
    for fmt, path in paths.items():
        print(f"{fmt}: {path}")
    print(json.dumps(result.summary, sort_keys=True))
    if cfg.experiment == "oracle-suite" and result.summary["failed"]:
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            try:
                text = Path(args.config).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError([f"cannot read {args.config}: {exc}"]) from None
            return _execute(parse_config(text), args.workers, args.out)
        if args.command == "oracle-suite":
            cfg = validate({"experiment": "oracle-suite",
                            "params": {"oracle_tuples": args.tuples, "oracle_N_max": args.n_max},
                            "run": {"seed_base": args.seed}})
            return _execute(cfg, args.workers, args.out)
        result = load_result(args.result)
        svg = render_plot(result.rows, result.plot, args.axes or result.config.get("run", {}).get("axes", "auto"))
        if svg is None:
            print(f"{result.kind}: nothing to plot", file=sys.stderr)
            return EXIT_RUNTIME
        target = Path(args.out) if args.out else Path(args.result).with_name(stem(result) + ".svg")
        target.write_text(svg, encoding="utf-8")
        print(f"svg: {target}")
        return EXIT_OK
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
