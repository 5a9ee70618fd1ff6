"""CSV/JSON serialization of result tables with a provenance header."""

from __future__ import annotations

import json
import math

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .runner import Table


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.8e}"


def _jsonable(v):
    # round-trip through the CSV formatting so both formats carry the same digits
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, str):
        return v
    x = float(f"{float(v):.8e}")
    return x if math.isfinite(x) else str(x)


def _meta(obj):
    if isinstance(obj, dict):
        return {str(k): _meta(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_meta(v) for v in obj]
    return _jsonable(obj)


def header_lines(table: Table, cfg: ExperimentConfig) -> list[str]:
    return [
        f"# pulselock {__version__}",
        f"# command: {table.command}",
        f"# config_sha256: {cfg.digest()}",
        f"# config: {cfg.canonical_json()}",
        f"# meta: {json.dumps(_meta(table.meta), sort_keys=True, separators=(',', ':'))}",
    ]


def to_csv(table: Table, cfg: ExperimentConfig) -> str:
    lines = header_lines(table, cfg)
    lines.append(",".join(table.columns))
    lines += [",".join(_fmt(v) for v in row) for row in table.rows]
    return "\n".join(lines) + "\n"


def to_json(table: Table, cfg: ExperimentConfig) -> str:
    doc = {
        "version": __version__,
        "command": table.command,
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "meta": _meta(table.meta),
        "columns": table.columns,
        "rows": [[_jsonable(v) for v in row] for row in table.rows],
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def render(table: Table, cfg: ExperimentConfig, fmt: str = "csv") -> str:
    if fmt == "csv":
        return to_csv(table, cfg)
    if fmt == "json":
        return to_json(table, cfg)
    raise ValueError(f"unknown output format {fmt!r}")
