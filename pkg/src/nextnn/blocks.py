"""Block decomposition of the quadratic local solve across simulated cores.

The parameter vector is split into contiguous non-overlapping blocks, one
per core. Each core minimizes the quadratic model restricted to its own
block with every other block frozen at the round's incoming iterate, so
all block solves are independent and may run concurrently; the assembled
solution keeps the original index order.
"""

from __future__ import annotations

import time
from concurrent.futures import Executor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .surrogates import QuadraticModel

__all__ = ["BlockPartition", "block_partition", "block_solve_ridge", "BlockSolveResult"]


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous, ordered, non-overlapping ranges covering ``range(dim)``."""

    ranges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "ranges", tuple((int(a), int(b)) for a, b in self.ranges))
        expect = 0
        for start, stop in self.ranges:
            if start != expect or stop <= start:
                raise ValueError("ranges must be contiguous, ordered, and non-empty")
            expect = stop

    @property
    def dim(self) -> int:
        return self.ranges[-1][1]

    @property
    def num_blocks(self) -> int:
        return len(self.ranges)


def block_partition(dim: int, num_blocks: int) -> BlockPartition:
    """Split ``range(dim)`` into ``num_blocks`` even contiguous blocks.

    Sizes differ by at most one; when the split is uneven the leading
    blocks take the extra entry. Deterministic.
    """
    if num_blocks < 1:
        raise ValueError("need at least one block")
    if num_blocks > dim:
        raise ValueError(f"cannot split {dim} coordinates into {num_blocks} blocks")
    base, extra = divmod(dim, num_blocks)
    ranges = []
    start = 0
    for c in range(num_blocks):
        stop = start + base + (1 if c < extra else 0)
        ranges.append((start, stop))
        start = stop
    return BlockPartition(tuple(ranges))


@dataclass(frozen=True)
class BlockSolveResult:
    """Assembled block solution plus per-block solve times in seconds."""

    w: np.ndarray
    block_seconds: tuple[float, ...]


def _solve_one_block(model: QuadraticModel, lam: float, w_now: np.ndarray,
                     start: int, stop: int) -> tuple[np.ndarray, float]:
    t0 = time.perf_counter()
    a_block = model.A[start:stop, start:stop]
    # Cross-coupling with the frozen blocks enters through the right-hand side.
    coupling = model.A[start:stop, :] @ w_now - a_block @ w_now[start:stop]
    rhs = model.b[start:stop] - coupling
    m = a_block + (0.5 * lam) * np.eye(stop - start)
    if not np.all(np.isfinite(m)) or not np.all(np.isfinite(rhs)):
        raise ValueError("quadratic model has non-finite entries")
    sol = cho_solve(cho_factor(m, lower=True), rhs)
    return sol, time.perf_counter() - t0


def block_solve_ridge(model: QuadraticModel, lam: float, partition: BlockPartition,
                      w_now: np.ndarray, executor: Executor | None = None) -> BlockSolveResult:
    """Per-block ridge solves with the other blocks frozen at ``w_now``.

    Each block ``c`` solves ``(A_cc + (lam/2) I) w_c = b_c - A_c,-c w_now,-c``
    independently; results are concatenated in index order, so the outcome
    does not depend on how many workers run the blocks.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    w_now = np.asarray(w_now, dtype=float)
    if partition.dim != model.dim or w_now.shape != (model.dim,):
        raise ValueError("partition, model, and iterate dimensions disagree")
    if executor is None:
        pieces = [_solve_one_block(model, lam, w_now, start, stop)
                  for start, stop in partition.ranges]
    else:
        futures = [executor.submit(_solve_one_block, model, lam, w_now, start, stop)
                   for start, stop in partition.ranges]
        pieces = [f.result() for f in futures]
    w = np.concatenate([sol for sol, _ in pieces])
    return BlockSolveResult(w, tuple(seconds for _, seconds in pieces))
