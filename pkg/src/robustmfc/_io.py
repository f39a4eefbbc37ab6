"""Deterministic CSV/JSON serialization shared by the experiment harnesses."""

from __future__ import annotations

import json
import math
from typing import Iterable, Mapping

BREAKDOWN_SENTINEL = "breakdown"


def fmt(x: float) -> str:
    """17-significant-digit decimal form; round-trips float64 exactly."""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def write_csv(path: str, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    """Write rows of floats/strings; floats serialized via fmt."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(cell if isinstance(cell, str) else fmt(cell)
                              for cell in row) + "\n")


def write_json(path: str, obj: Mapping) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def provenance(command: str, params_dict: Mapping, extra: Mapping | None = None,
               wall_time_s: float | None = None) -> dict:
    """Sidecar payload: resolved config + run metadata (wall time varies run to run)."""
    from . import __version__

    out = {
        "command": command,
        "params": dict(params_dict),
        "version": __version__,
        "wall_time_s": wall_time_s,
    }
    if extra:
        out.update(extra)
    return out
