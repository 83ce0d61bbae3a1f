"""Per-round traces: global cost, test error, disagreement, communication.

Traces are append-only rows keyed by the round index and serialize to CSV
with the fixed header ``n,alpha,cost,test_metric,disagreement,scalars_cum,ms``
(plus a trailing ``block_ms`` column when block-parallel solves ran).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset
from .mlp import NetArch, forward

__all__ = ["TraceRow", "TraceSet", "disagreement", "test_metric", "comm_account", "TRACE_HEADER"]

TRACE_HEADER = ("n", "alpha", "cost", "test_metric", "disagreement", "scalars_cum", "ms")


@dataclass(frozen=True)
class TraceRow:
    n: int
    alpha: float
    cost: float
    test_metric: float
    disagreement: float
    scalars_cum: int
    ms: float
    block_ms: float | None = None


@dataclass
class TraceSet:
    """Strictly round-ordered rows with nondecreasing counters."""

    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        if self.rows:
            last = self.rows[-1]
            if row.n <= last.n:
                raise ValueError("rows must be strictly increasing in the round index")
            if row.scalars_cum < last.scalars_cum:
                raise ValueError("cumulative counters cannot decrease")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    def column(self, name: str) -> np.ndarray:
        return np.asarray([getattr(r, name) for r in self.rows])

    def to_csv(self, path) -> None:
        has_block = any(r.block_ms is not None for r in self.rows)
        header = TRACE_HEADER + (("block_ms",) if has_block else ())
        with open(path, "wt", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for r in self.rows:
                # repr keeps full round-trip precision so summaries can be
                # recomputed from the files exactly.
                cells = [r.n, repr(r.alpha), repr(r.cost), repr(r.test_metric),
                         repr(r.disagreement), r.scalars_cum, f"{r.ms:.6g}"]
                if has_block:
                    cells.append("" if r.block_ms is None else f"{r.block_ms:.6g}")
                writer.writerow(cells)

    @classmethod
    def from_csv(cls, path) -> "TraceSet":
        trace = cls()
        with open(path, "rt", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header[:7]) != TRACE_HEADER:
                raise ValueError(f"{path}: unexpected trace header {header!r}")
            for row in reader:
                block_ms = None
                if len(row) > 7 and row[7] != "":
                    block_ms = float(row[7])
                trace.append(TraceRow(int(row[0]), float(row[1]), float(row[2]), float(row[3]),
                                      float(row[4]), int(row[5]), float(row[6]), block_ms))
        return trace


def disagreement(weights) -> float:
    """Average max-norm deviation of the agents from their mean.

    ``D = (1/I) * sum_i ||w_i - mean w||_inf``, the empirical consensus
    metric; zero when every agent holds the same vector.
    """
    ws = np.atleast_2d(np.asarray(weights, dtype=float))
    mean = ws.mean(axis=0)
    return float(np.abs(ws - mean).max(axis=1).mean())


def test_metric(arch: NetArch, w: np.ndarray, test: Dataset) -> float:
    """Held-out error: mean squared error or misclassification rate.

    Regression returns the mean squared error over the test rows;
    classification thresholds the output at 0.5 (ties go to class 1) and
    returns the fraction of mismatches.
    """
    if len(test) == 0:
        raise ValueError("empty test set")
    f = forward(arch, w, test.inputs).output
    if test.task == "regression":
        return float(np.mean((f - test.targets) ** 2))
    predicted = (f >= 0.5).astype(float)
    return float(np.mean(predicted != test.targets))


def comm_account(num_directed_edges: int, q: int, algo: str) -> int:
    """Scalars crossing the network in one round.

    Tracking-based rounds ship both the staged iterate and the tracker
    per directed edge (``2 * Q`` scalars); plain diffusion ships only the
    iterate (``Q`` scalars).
    """
    kind = algo.lower()
    if kind == "next":
        return 2 * q * num_directed_edges
    if kind == "distgrad":
        return q * num_directed_edges
    raise ValueError(f"unknown algorithm {algo!r}")
