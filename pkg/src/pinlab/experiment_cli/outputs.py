"""Persist an ExperimentResult as JSON, CSV and SVG with atomic writes."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

from pinlab.experiment_cli.runner import ExperimentResult
from pinlab.experiment_cli.svg import render_plot


def _atomic_write(path: Path, text: str) -> None:
    """Write to a temporary file in the same directory, then rename over ``path``."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def stem(result: ExperimentResult) -> str:
    return f"{result.kind}-{result.config_hash[:12]}"


def to_csv(rows: list[dict]) -> str:
    cols: list[str] = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\r\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})
    return buf.getvalue()


def emit_outputs(result: ExperimentResult, out_dir: str | os.PathLike, formats=("json", "csv", "svg")) -> dict:
    """Write the requested formats; returns {format: path}.  The SVG is skipped for
    results that have nothing to plot."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    base = stem(result)
    written = {}
    if "json" in formats:
        p = out / f"{base}.json"
        _atomic_write(p, json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
        written["json"] = p
    if "csv" in formats:
        p = out / f"{base}.csv"
        _atomic_write(p, to_csv(result.rows))
        written["csv"] = p
    if "svg" in formats:
        svg = render_plot(result.rows, result.plot, result.config.get("run", {}).get("axes", "auto"))
        if svg is not None:
            p = out / f"{base}.svg"
            _atomic_write(p, svg)
            written["svg"] = p
    return written


def load_result(path: str | os.PathLike) -> ExperimentResult:
    with open(path, encoding="utf-8") as fh:
        return ExperimentResult.from_dict(json.load(fh))
