"""Reference solvers: a tracking-free distributed baseline and centralized loops.

The distributed baseline alternates one local gradient step (on the local
cost plus the agent's share of the penalty) with the same doubly
stochastic mixing used by the engine, but never exchanges trackers, so it
ships half as many scalars per round. The centralized solvers (steepest
descent, diagonally adaptive descent, and the Gauss-Newton convex-
combination loop) run on the pooled dataset and provide the comparison
curves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datasets import Dataset
from .engine import RunResult, AgentState, StepSizeSchedule, step_size_next
from .metrics import TraceRow, TraceSet, comm_account, disagreement, test_metric
from .mlp import NetArch, init_weights, local_gradient
from .objectives import Loss, global_cost
from .surrogates import pl_quadratic_model, pl_solve_ridge
from .topology import MixingMatrix, TopologySchedule

__all__ = [
    "CentralizedState",
    "distgrad_round",
    "distgrad_run",
    "centralized_step",
    "centralized_run",
    "CENTRALIZED_KINDS",
]

CENTRALIZED_KINDS = ("gd", "adagrad", "pl-sca")


def distgrad_round(weights: Sequence[np.ndarray], mixing: MixingMatrix, eta: float,
                   arch: NetArch, datasets: Sequence[Dataset], loss: Loss, reg) -> list[np.ndarray]:
    """One diffusion round: local gradient step, then consensus averaging.

    ``z_i = w_i - eta * (grad g_i + grad r / I)`` followed by
    ``w_i <- sum_j c_ij z_j``. The penalty must be differentiable.
    """
    if not getattr(reg, "differentiable", False):
        raise ValueError("the diffusion baseline needs a differentiable penalty")
    num_agents = len(weights)
    staged = []
    for w, data in zip(weights, datasets):
        grad = local_gradient(arch, w, data, loss) + reg.gradient(w) / num_agents
        staged.append(w - eta * grad)
    mixed = mixing.entries @ np.stack(staged)
    return [mixed[i] for i in range(num_agents)]


def distgrad_run(arch: NetArch, datasets: Sequence[Dataset], test: Dataset | None,
                 schedule: TopologySchedule, steps: StepSizeSchedule, loss: Loss, reg,
                 max_epochs: int = 1000, tol: float = 1e-8, seed=0,
                 metric_every: int = 1, init: Sequence[np.ndarray] | None = None) -> RunResult:
    """Run the diffusion baseline with the same trace layout as the engine."""
    num_agents = len(datasets)
    if init is None:
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        init = [init_weights(arch, child) for child in seq.spawn(num_agents)]
    weights = [np.array(w, dtype=float) for w in init]
    q = arch.num_params
    trace = TraceSet()

    def record(n, eta, scalars, ms):
        ws = np.stack(weights)
        cost = global_cost(arch, ws, datasets, loss, reg)
        err = float("nan") if test is None else test_metric(arch, ws.mean(axis=0), test)
        trace.append(TraceRow(n=n, alpha=eta, cost=cost, test_metric=err,
                              disagreement=disagreement(ws), scalars_cum=scalars, ms=ms))

    eta = steps.alpha0
    scalars = 0
    record(0, eta, scalars, 0.0)
    for n in range(max_epochs):
        t0 = time.perf_counter()
        graph, mixing = schedule.at(n)
        new_weights = distgrad_round(weights, mixing, eta, arch, datasets, loss, reg)
        movement = max(float(np.abs(new - old).max()) for new, old in zip(new_weights, weights))
        weights = new_weights
        scalars += comm_account(graph.num_directed_edges, q, "distgrad")
        eta = step_size_next(eta, steps.eps)
        elapsed = 1e3 * (time.perf_counter() - t0)
        done = n + 1 == max_epochs or movement < tol
        if (n + 1) % metric_every == 0 or done:
            record(n + 1, eta, scalars, elapsed)
        if movement < tol:
            break
    states = [AgentState(w=w, y=np.zeros(q), pi=np.zeros(q), z=w.copy(), last_grad=np.zeros(q))
              for w in weights]
    return RunResult(trace=trace, states=states)


@dataclass
class CentralizedState:
    """Weight vector plus the per-coordinate squared-gradient accumulator."""

    w: np.ndarray
    acc: np.ndarray | None = None

    def __post_init__(self):
        self.w = np.array(self.w, dtype=float)
        if self.acc is None:
            self.acc = np.zeros_like(self.w)
        if self.acc.shape != self.w.shape or np.any(self.acc < 0):
            raise ValueError("accumulator must be a nonnegative vector matching w")


def centralized_step(kind: str, state: CentralizedState, arch: NetArch, data: Dataset,
                     loss: Loss, reg, step: float) -> None:
    """Advance one centralized iteration in place.

    ``gd``: ``w -= step * grad U``. ``adagrad``: per-coordinate steps
    ``step / sqrt(acc + 1e-8)`` with ``acc += grad**2``. ``pl-sca``:
    Gauss-Newton model on the pooled data followed by the convex
    combination ``w += step * (w_tilde - w)`` (squared loss with the l2
    penalty only); here ``step`` is the combination weight.
    """
    if kind in ("gd", "adagrad"):
        grad = local_gradient(arch, state.w, data, loss) + reg.gradient(state.w)
        if kind == "gd":
            state.w = state.w - step * grad
        else:
            state.acc = state.acc + grad * grad
            state.w = state.w - step * grad / np.sqrt(state.acc + 1e-8)
        return
    if kind == "pl-sca":
        if loss is not Loss.SQUARED or not hasattr(reg, "lam") or not reg.differentiable:
            raise ValueError("the centralized convex-combination loop needs squared loss and l2 penalty")
        model = pl_quadratic_model(arch, state.w, data, np.zeros(arch.num_params))
        w_tilde = pl_solve_ridge(model, reg.lam)
        state.w = state.w + step * (w_tilde - state.w)
        return
    raise ValueError(f"unknown centralized solver {kind!r}; pick one of {CENTRALIZED_KINDS}")


def centralized_run(kind: str, arch: NetArch, data: Dataset, test: Dataset | None,
                    loss: Loss, reg, max_epochs: int = 1000, eta: float = 0.01,
                    steps: StepSizeSchedule | None = None, tol: float = 1e-8,
                    seed=0, metric_every: int = 1, init: np.ndarray | None = None) -> tuple[TraceSet, CentralizedState]:
    """Run a centralized solver with the shared trace layout.

    ``gd`` and ``adagrad`` use the fixed step ``eta``; the convex-
    combination loop follows the same diminishing schedule as the
    distributed runs.
    """
    if init is None:
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        init = init_weights(arch, seq.spawn(1)[0])
    state = CentralizedState(w=init)
    if steps is None:
        steps = StepSizeSchedule()
    alpha = steps.alpha0
    trace = TraceSet()

    def record(n, used_step, ms):
        cost = global_cost(arch, state.w, [data], loss, reg)
        err = float("nan") if test is None else test_metric(arch, state.w, test)
        trace.append(TraceRow(n=n, alpha=used_step, cost=cost, test_metric=err,
                              disagreement=0.0, scalars_cum=0, ms=ms))

    record(0, alpha if kind == "pl-sca" else eta, 0.0)
    for n in range(max_epochs):
        t0 = time.perf_counter()
        step = alpha if kind == "pl-sca" else eta
        w_before = state.w
        centralized_step(kind, state, arch, data, loss, reg, step)
        if kind == "pl-sca":
            alpha = step_size_next(alpha, steps.eps)
        movement = float(np.abs(state.w - w_before).max())
        elapsed = 1e3 * (time.perf_counter() - t0)
        done = n + 1 == max_epochs or movement < tol
        if (n + 1) % metric_every == 0 or done:
            record(n + 1, alpha if kind == "pl-sca" else eta, elapsed)
        if movement < tol:
            break
    return trace, state
