"""Loss functions, regularization penalties, and the global training cost.

The training problem minimized by every solver in this package is

    U(w) = sum_i g_i(w) + r(w),

where ``g_i`` sums a convex per-sample loss over agent ``i``'s local data
and ``r`` is one of the penalties below. Losses are summed, not averaged,
so step sizes must account for dataset scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "Loss",
    "L2Penalty",
    "L1Penalty",
    "GroupPenalty",
    "loss_value",
    "global_cost",
    "PRED_CLAMP",
]

# Predictions are clamped this far away from {0, 1} before taking logs.
PRED_CLAMP = 1e-12


class Loss(Enum):
    """Per-sample loss kinds."""

    SQUARED = "squared"
    CROSS_ENTROPY = "cross_entropy"


def loss_value(loss: Loss, d: float, f: float) -> float:
    """Evaluate a single-sample loss ``l(d, f)``.

    Parameters
    ----------
    loss : Loss
        ``SQUARED`` gives ``(d - f)**2``; ``CROSS_ENTROPY`` gives
        ``-d log(f) - (1 - d) log(1 - f)``.
    d : float
        Target value. Must be 0 or 1 for the cross-entropy loss.
    f : float
        Model prediction. Clamped to ``[PRED_CLAMP, 1 - PRED_CLAMP]``
        before the logarithms.

    Returns
    -------
    float
        Nonnegative loss value.
    """
    if loss is Loss.SQUARED:
        return float((d - f) ** 2)
    if loss is Loss.CROSS_ENTROPY:
        if d not in (0.0, 1.0):
            raise ValueError(f"cross-entropy target must be 0 or 1, got {d}")
        f = min(max(f, PRED_CLAMP), 1.0 - PRED_CLAMP)
        return float(-d * math.log(f) - (1.0 - d) * math.log(1.0 - f))
    raise ValueError(f"unknown loss {loss!r}")


class NondifferentiableError(TypeError):
    """Raised when a gradient is requested from a nonsmooth penalty."""


@dataclass(frozen=True)
class L2Penalty:
    """Squared-norm weight decay ``(lam / 2) * ||w||^2``."""

    lam: float
    differentiable = True

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")

    def value(self, w: np.ndarray) -> float:
        return 0.5 * self.lam * float(np.dot(w, w))

    def gradient(self, w: np.ndarray) -> np.ndarray:
        return self.lam * w


@dataclass(frozen=True)
class L1Penalty:
    """Sparsity-promoting penalty ``lam * ||w||_1``."""

    lam: float
    differentiable = False

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")

    def value(self, w: np.ndarray) -> float:
        return self.lam * float(np.abs(w).sum())

    def gradient(self, w: np.ndarray) -> np.ndarray:
        raise NondifferentiableError("l1 penalty has no gradient")


@dataclass(frozen=True)
class GroupPenalty:
    """Group-sparse penalty ``lam * sum_p sqrt(r_p) * ||w_p||``.

    ``groups`` is a partition of the weight indices into half-open
    ``(start, stop)`` ranges, one per source neuron (input neurons,
    hidden neurons, and per-layer bias units all count as neurons, so
    any of them can be zeroed out as a whole). The factor ``sqrt(r_p)``
    weighs each group by the square root of its dimension.
    """

    lam: float
    groups: tuple[tuple[int, int], ...]
    differentiable = False

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        object.__setattr__(self, "groups", tuple((int(a), int(b)) for a, b in self.groups))

    def check_partition(self, dim: int) -> None:
        """Raise unless the groups exactly partition ``range(dim)``."""
        spans = sorted(self.groups)
        expect = 0
        for start, stop in spans:
            if start != expect or stop <= start:
                raise ValueError(f"groups do not partition [0, {dim})")
            expect = stop
        if expect != dim:
            raise ValueError(f"groups cover [0, {expect}) but the vector has {dim} entries")

    def value(self, w: np.ndarray) -> float:
        self.check_partition(len(w))
        total = 0.0
        for start, stop in self.groups:
            total += math.sqrt(stop - start) * float(np.linalg.norm(w[start:stop]))
        return self.lam * total

    def gradient(self, w: np.ndarray) -> np.ndarray:
        raise NondifferentiableError("group penalty has no gradient")


def global_cost(arch, w, datasets, loss: Loss, reg=None) -> float:
    """Global cost ``U(w) = sum_i g_i(w) + r(w)``.

    Parameters
    ----------
    arch : NetArch
        Network architecture shared by all agents.
    w : ndarray
        Either a single flat weight vector of shape ``(Q,)`` or a stack
        of per-agent estimates of shape ``(I, Q)``. A stack is reduced to
        the network average before evaluation, which is the quantity
        tracked by the per-round traces.
    datasets : sequence of Dataset
        One local dataset per agent.
    loss : Loss
        Per-sample loss kind.
    reg : penalty or None
        Optional regularization term.
    """
    from .mlp import local_cost  # deferred to avoid an import cycle

    w = np.asarray(w, dtype=float)
    if w.ndim == 2:
        w = w.mean(axis=0)
    total = sum(local_cost(arch, w, ds, loss) for ds in datasets)
    if reg is not None:
        total += reg.value(w)
    return float(total)
