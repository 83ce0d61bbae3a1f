"""Dataset loading, min-max normalization, splitting, and per-agent partitioning.

The interchange format is a plain CSV file with a header row and numeric
columns, paired with a small JSON schema naming the target column and the
task ("regression" or "classification"). Rows containing a missing value
are dropped, then every column (inputs and target alike) is min-max
normalized to [0, 1] on the full dataset before any splitting happens.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "PartitionedData",
    "load_dataset",
    "load_schema",
    "split_and_partition",
    "synthetic_regression",
]

TASKS = ("regression", "classification")

# Cell contents treated as a missing value (case-insensitive).
MISSING_TOKENS = {"", "na", "n/a", "nan", "?", "null"}


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix plus target vector for one task."""

    inputs: np.ndarray
    targets: np.ndarray
    task: str

    def __post_init__(self):
        inputs = np.ascontiguousarray(self.inputs, dtype=float)
        targets = np.ascontiguousarray(self.targets, dtype=float)
        if inputs.ndim != 2 or targets.ndim != 1 or inputs.shape[0] != targets.shape[0]:
            raise ValueError("inputs must be (N, d) and targets (N,)")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        inputs.flags.writeable = False
        targets.flags.writeable = False
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def num_features(self) -> int:
        return self.inputs.shape[1]

    def take(self, indices) -> "Dataset":
        """New dataset holding the given rows, in the given order."""
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.inputs[idx], self.targets[idx], self.task)


@dataclass(frozen=True)
class PartitionedData:
    """Held-out test rows plus one local dataset per agent."""

    test: Dataset
    per_agent: tuple[Dataset, ...]

    @property
    def num_agents(self) -> int:
        return len(self.per_agent)


def load_schema(path) -> dict:
    """Read a JSON schema file with keys ``target`` and ``task``."""
    with open(path, "rt", encoding="utf-8") as fh:
        schema = json.load(fh)
    if "target" not in schema or schema.get("task") not in TASKS:
        raise ValueError(f"schema must name a target column and a task in {TASKS}")
    return schema


def minmax_normalize(columns: np.ndarray) -> np.ndarray:
    """Scale every column to [0, 1]; constant columns map to all zeros."""
    lo = columns.min(axis=0)
    hi = columns.max(axis=0)
    span = hi - lo
    out = np.zeros_like(columns)
    nonconst = span > 0
    out[:, nonconst] = (columns[:, nonconst] - lo[nonconst]) / span[nonconst]
    return out


def load_dataset(path, schema) -> Dataset:
    """Load a CSV file and normalize it according to ``schema``.

    Parameters
    ----------
    path : str or Path
        CSV file with a header row and numeric cells.
    schema : mapping or str or Path
        Either an already-loaded schema mapping or the path of a JSON
        schema file. The schema names the target column and the task.

    Returns
    -------
    Dataset
        Rows with any missing cell removed; every remaining column
        (inputs and target) min-max normalized to [0, 1].
    """
    if isinstance(schema, (str, Path)):
        schema = load_schema(schema)
    target_col = schema["target"]
    task = schema["task"]

    with open(path, "rt", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if target_col not in header:
            raise ValueError(f"{path}: no column named {target_col!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            cells = [c.strip() for c in row]
            if any(c.lower() in MISSING_TOKENS for c in cells):
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric cell") from None

    if not rows:
        raise ValueError(f"{path}: no complete rows")
    table = minmax_normalize(np.asarray(rows, dtype=float))
    t = header.index(target_col)
    feature_cols = [k for k in range(len(header)) if k != t]
    return Dataset(table[:, feature_cols], table[:, t], task)


def split_and_partition(ds: Dataset, test_frac: float, num_agents: int, seed) -> PartitionedData:
    """Shuffle, hold out a test split, and deal the rest across agents.

    The first ``ceil(N * test_frac)`` rows of a seeded shuffle become the
    test set; the remaining rows go round-robin to the agents, so local
    sizes differ by at most one. Deterministic per seed.
    """
    if not 0.0 < test_frac < 1.0:
        raise ValueError("test_frac must lie in (0, 1)")
    if num_agents < 1:
        raise ValueError("need at least one agent")
    n = len(ds)
    n_test = math.ceil(n * test_frac)
    if n - n_test < num_agents:
        raise ValueError(f"{n} rows cannot supply {num_agents} agents after a {test_frac} test split")
    perm = np.random.default_rng(seed).permutation(n)
    test = ds.take(perm[:n_test])
    rest = perm[n_test:]
    per_agent = tuple(ds.take(rest[k::num_agents]) for k in range(num_agents))
    return PartitionedData(test=test, per_agent=per_agent)


def synthetic_regression(num_samples: int, input_dim: int, hidden, noise: float, seed) -> Dataset:
    """Regression data from a random teacher network plus Gaussian noise.

    Inputs are uniform on [0, 1]; targets are the teacher's outputs with
    additive noise, then the whole table is min-max normalized like a
    loaded benchmark file. Useful for offline testing.
    """
    from .mlp import NetArch, forward, init_weights  # deferred to avoid an import cycle

    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(num_samples, input_dim))
    teacher = NetArch(input_dim, tuple(hidden), output_activation="tanh")
    w = init_weights(teacher, rng.integers(2**32))
    y = forward(teacher, w, x).output + rng.normal(scale=noise, size=num_samples)
    table = minmax_normalize(np.column_stack([x, y]))
    return Dataset(table[:, :-1], table[:, -1], "regression")
