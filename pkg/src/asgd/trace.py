"""Run traces and their on-disk formats.

A trace has one row per iterate, k = 0..K, where row 0 describes the start
point (step, batch, delay, and rejection fields are zero there). The CSV
column order is fixed; floats are written with 17 significant digits so that
reading a trace back reproduces the run bit for bit. The summary is a JSON
object with sorted keys.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["COLUMNS", "RunTrace", "write_trace", "read_trace", "write_summary"]

COLUMNS = (
    "k",
    "gamma",
    "batch",
    "grad_norm_sq",
    "objective",
    "lyapunov",
    "max_delay",
    "mean_delay",
    "vtime",
    "rejections",
)

_INT_COLUMNS = {"k", "batch", "max_delay", "rejections"}


@dataclass
class RunTrace:
    k: np.ndarray
    gamma: np.ndarray
    batch: np.ndarray
    grad_norm_sq: np.ndarray
    objective: np.ndarray
    lyapunov: np.ndarray  # nan where not recorded
    max_delay: np.ndarray
    mean_delay: np.ndarray
    vtime: np.ndarray
    rejections: np.ndarray
    summary: dict = field(default_factory=dict)
    iterates: np.ndarray | None = None
    delay_groups: list | None = None

    def __len__(self) -> int:
        return self.k.size

    def column(self, name: str) -> np.ndarray:
        if name not in COLUMNS:
            raise KeyError(f"unknown trace column {name!r}")
        return getattr(self, name)


def _format(name: str, value) -> str:
    if name in _INT_COLUMNS:
        return str(int(value))
    v = float(value)
    if name == "lyapunov" and math.isnan(v):
        return ""
    return format(v, ".17g")


def write_trace(trace: RunTrace, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        cols = [trace.column(c) for c in COLUMNS]
        for i in range(len(trace)):
            writer.writerow(_format(name, col[i]) for name, col in zip(COLUMNS, cols))


def read_trace(path: str | Path) -> RunTrace:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != COLUMNS:
            raise ValueError(f"{path}: not a trace file (bad header)")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: trace has no rows")
    data = {}
    for j, name in enumerate(COLUMNS):
        if name in _INT_COLUMNS:
            data[name] = np.array([int(r[j]) for r in rows], dtype=np.int64)
        elif name == "lyapunov":
            data[name] = np.array(
                [float(r[j]) if r[j] else math.nan for r in rows], dtype=float
            )
        else:
            data[name] = np.array([float(r[j]) for r in rows], dtype=float)
    return RunTrace(**data)


def write_summary(summary: dict, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
