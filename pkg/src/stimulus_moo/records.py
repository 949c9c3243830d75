"""Run trajectories and their CSV serialization.

A :class:`RunRecord` holds one row per recorded iteration, columnar. The
CSV schema is::

    t,ifo,stationarity,d_norm_sq,loss_0..loss_{S-1}[,dist_sq]

The ``ifo`` column is the cumulative sample count spent to *produce* the
iterate of that row (so row 0 is always 0 and the last row is the run
total). ``stationarity`` is empty on iterations the metric cadence skipped;
``d_norm_sq`` is empty on the final row (no step was taken from it).
Floats are rendered with 17 significant digits, which round-trips float64
exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

__all__ = ["RunRecord", "emit_csv", "read_csv"]


@dataclass
class RunRecord:
    variant: str
    seed: int
    config: dict
    t: np.ndarray
    ifo: np.ndarray
    stationarity: np.ndarray
    d_norm_sq: np.ndarray
    losses: np.ndarray
    dist_sq: np.ndarray | None = None
    trajectory: np.ndarray | None = None  # kept in memory only, never serialized

    @property
    def num_tasks(self) -> int:
        return self.losses.shape[1]

    @property
    def final_stationarity(self) -> float:
        return float(self.stationarity[-1])

    @property
    def final_losses(self) -> np.ndarray:
        return self.losses[-1]

    @property
    def total_ifo(self) -> int:
        return int(self.ifo[-1])

    def first_iteration_at_stationarity(self, level: float) -> int | None:
        """Earliest recorded t whose stationarity is <= level, if any."""
        mask = np.isfinite(self.stationarity) & (self.stationarity <= level)
        hits = np.nonzero(mask)[0]
        return int(self.t[hits[0]]) if hits.size else None

    def first_ifo_at_stationarity(self, level: float) -> int | None:
        """Cumulative IFO spent to produce the first iterate at <= level."""
        mask = np.isfinite(self.stationarity) & (self.stationarity <= level)
        hits = np.nonzero(mask)[0]
        return int(self.ifo[hits[0]]) if hits.size else None


def _fmt(value: float) -> str:
    return "" if not np.isfinite(value) else f"{value:.17g}"


def emit_csv(record: RunRecord, path) -> None:
    """Write one run as CSV at ``path`` (see module docstring for schema)."""
    S = record.num_tasks
    header = ["t", "ifo", "stationarity", "d_norm_sq"] + [f"loss_{s}" for s in range(S)]
    if record.dist_sq is not None:
        header.append("dist_sq")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(record.t.size):
            row = [
                str(int(record.t[i])),
                str(int(record.ifo[i])),
                _fmt(record.stationarity[i]),
                _fmt(record.d_norm_sq[i]),
            ]
            row.extend(_fmt(record.losses[i, s]) for s in range(S))
            if record.dist_sq is not None:
                row.append(_fmt(record.dist_sq[i]))
            writer.writerow(row)


def read_csv(path) -> SimpleNamespace:
    """Read an emitted CSV back into columnar arrays (empty fields -> NaN)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    loss_cols = [name for name in header if name.startswith("loss_")]
    has_dist = "dist_sq" in header
    col = {name: header.index(name) for name in header}

    def grab_float(name):
        return np.array(
            [float(r[col[name]]) if r[col[name]] != "" else np.nan for r in rows]
        )

    return SimpleNamespace(
        t=np.array([int(r[col["t"]]) for r in rows], dtype=np.int64),
        ifo=np.array([int(r[col["ifo"]]) for r in rows], dtype=np.int64),
        stationarity=grab_float("stationarity"),
        d_norm_sq=grab_float("d_norm_sq"),
        losses=np.column_stack([grab_float(name) for name in loss_cols]),
        dist_sq=grab_float("dist_sq") if has_dist else None,
    )
