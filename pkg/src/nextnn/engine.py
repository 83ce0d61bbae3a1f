"""Synchronous-round distributed training engine.

Every round each agent (S.2) minimizes its strongly convex local
surrogate, moves a convex-combination step toward the minimizer, then
(S.3) mixes the staged iterates and trackers with its neighbors under a
doubly stochastic matrix and refreshes its estimate of the other agents'
summed gradients via dynamic consensus. Rounds are synchronous: mixing
reads an immutable snapshot of the round's values, so results do not
depend on evaluation order or worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import blocks as blocks_mod
from .datasets import Dataset
from .metrics import TraceRow, TraceSet, comm_account, disagreement, test_metric
from .mlp import NetArch, init_weights, local_gradient
from .objectives import Loss, global_cost
from .surrogates import Linearization, SurrogateSpec, pl_quadratic_model, solve_surrogate
from .topology import MixingMatrix, TopologySchedule

__all__ = [
    "AgentState",
    "StepSizeSchedule",
    "RunConfig",
    "RunResult",
    "EngineError",
    "step_size_next",
    "init_states",
    "sca_local_update",
    "consensus_round",
    "run",
]


class EngineError(RuntimeError):
    """A local solve failed; the message carries round and agent."""


@dataclass
class AgentState:
    """One agent's iterate, tracker, gradient estimate, and staging slot.

    Initialization follows the algorithm's data line: the tracker starts
    at the local gradient and the estimate of the others' summed
    gradients at ``I * y - grad``, which is exactly zero for one agent.
    """

    w: np.ndarray
    y: np.ndarray
    pi: np.ndarray
    z: np.ndarray
    last_grad: np.ndarray


def step_size_next(alpha_prev: float, eps: float) -> float:
    """Quadratically decreasing rule ``alpha * (1 - eps * alpha)``.

    Keeps the sequence positive and nonincreasing whenever
    ``alpha_prev * eps < 1``, while the partial sums still diverge.
    """
    return alpha_prev * (1.0 - eps * alpha_prev)


@dataclass(frozen=True)
class StepSizeSchedule:
    """Parameters of the diminishing step-size recursion."""

    alpha0: float = 1.0
    eps: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.alpha0 <= 1.0:
            raise ValueError("alpha0 must lie in (0, 1]")
        if not 0.0 < self.eps <= 1.0:
            raise ValueError("eps must lie in (0, 1]")
        if self.alpha0 * self.eps >= 1.0:
            raise ValueError("alpha0 * eps must stay below 1 so steps remain positive")


@dataclass
class RunConfig:
    """Everything one engine run needs besides the data itself."""

    surrogate: SurrogateSpec
    schedule: TopologySchedule
    steps: StepSizeSchedule = field(default_factory=StepSizeSchedule)
    max_epochs: int = 1000
    tol: float = 1e-8
    seed: int | np.random.SeedSequence = 0
    metric_every: int = 1
    cores: int = 1
    init: Sequence[np.ndarray] | None = None

    def __post_init__(self):
        if self.max_epochs < 0:
            raise ValueError("max_epochs cannot be negative")
        if self.metric_every < 1:
            raise ValueError("metric_every must be positive")
        if self.cores < 1:
            raise ValueError("cores must be positive")


@dataclass
class RunResult:
    trace: TraceSet
    states: list[AgentState]


def init_states(arch: NetArch, datasets: Sequence[Dataset], loss: Loss,
                seed, init: Sequence[np.ndarray] | None = None) -> list[AgentState]:
    """Per-agent states with independent weight draws and fresh trackers."""
    num_agents = len(datasets)
    if init is None:
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        init = [init_weights(arch, child) for child in seq.spawn(num_agents)]
    if len(init) != num_agents:
        raise ValueError("need one initial weight vector per agent")
    states = []
    for w0, data in zip(init, datasets):
        w = np.array(w0, dtype=float)
        grad = local_gradient(arch, w, data, loss)
        y = grad.copy()
        states.append(AgentState(w=w, y=y, pi=num_agents * y - grad, z=w.copy(), last_grad=grad))
    return states


def _local_solve(state: AgentState, spec: SurrogateSpec, arch: NetArch, data: Dataset,
                 partition=None, executor=None):
    """Surrogate minimizer and per-block seconds (block path only)."""
    if (partition is not None and spec.strategy is Linearization.PARTIAL
            and spec.loss is Loss.SQUARED and partition.num_blocks > 1):
        model = pl_quadratic_model(arch, state.w, data, state.pi)
        res = blocks_mod.block_solve_ridge(model, spec.reg.lam, partition, state.w, executor)
        return res.w, res.block_seconds
    result = solve_surrogate(spec, arch, data, state.w, state.pi, grad_now=state.last_grad)
    return result.w, None


def sca_local_update(state: AgentState, spec: SurrogateSpec, alpha: float,
                     arch: NetArch, data: Dataset) -> np.ndarray:
    """Solve the local surrogate and stage ``z = w + alpha * (w_tilde - w)``."""
    w_tilde, _ = _local_solve(state, spec, arch, data)
    state.z = state.w + alpha * (w_tilde - state.w)
    return state.z


def consensus_round(states: Sequence[AgentState], mixing: MixingMatrix,
                    arch: NetArch, datasets: Sequence[Dataset], loss: Loss) -> None:
    """Mix staged iterates and trackers, then refresh gradients in place.

    For each agent: ``w <- sum_j c_ij z_j``; with the new gradients,
    ``y <- sum_j c_ij y_j - grad_old + grad_new`` and
    ``pi <- I * y - grad_new``. All mixing reads the pre-round snapshot,
    and the update order makes a single agent's ``pi`` exactly zero.
    """
    num_agents = len(states)
    c = mixing.entries
    z_snap = np.stack([s.z for s in states])
    y_snap = np.stack([s.y for s in states])
    w_new = c @ z_snap
    y_mixed = c @ y_snap
    for i, state in enumerate(states):
        state.w = w_new[i]
        try:
            grad_new = local_gradient(arch, state.w, datasets[i], loss)
        except Exception as exc:
            raise EngineError(f"gradient refresh failed for agent {i}: {exc}") from exc
        state.y = (y_mixed[i] - state.last_grad) + grad_new
        state.pi = num_agents * state.y - grad_new
        state.last_grad = grad_new


def run(config: RunConfig, arch: NetArch, datasets: Sequence[Dataset],
        test: Dataset | None = None,
        observer: Callable[[int, list[AgentState]], None] | None = None) -> RunResult:
    """Drive synchronous rounds until the movement tolerance or the epoch cap.

    Records one trace row for the initial state and one per round
    (subject to ``metric_every``; the final round is always recorded).
    ``observer`` is called after initialization and after every round
    with the round index and the live states. Deterministic given the
    config and seed, independent of worker count.
    """
    spec = config.surrogate
    states = init_states(arch, datasets, spec.loss, config.seed, config.init)
    num_agents = len(states)
    q = arch.num_params

    partition = None
    executor = None
    if config.cores > 1 and spec.strategy is Linearization.PARTIAL and spec.loss is Loss.SQUARED:
        partition = blocks_mod.block_partition(q, config.cores)
        executor = ThreadPoolExecutor(max_workers=config.cores)

    trace = TraceSet()

    def record(n, alpha, scalars, ms, block_ms=None):
        ws = np.stack([s.w for s in states])
        cost = global_cost(arch, ws, datasets, spec.loss, spec.reg)
        err = float("nan") if test is None else test_metric(arch, ws.mean(axis=0), test)
        trace.append(TraceRow(n=n, alpha=alpha, cost=cost, test_metric=err,
                              disagreement=disagreement(ws), scalars_cum=scalars,
                              ms=ms, block_ms=block_ms))

    alpha = config.steps.alpha0
    scalars = 0
    record(0, alpha, scalars, 0.0)
    if observer is not None:
        observer(0, states)

    try:
        for n in range(config.max_epochs):
            t0 = time.perf_counter()
            graph, mixing = config.schedule.at(n)
            block_ms = None
            for i, state in enumerate(states):
                try:
                    w_tilde, block_seconds = _local_solve(state, spec, arch, datasets[i],
                                                          partition, executor)
                except Exception as exc:
                    raise EngineError(f"local solve failed at round {n}, agent {i}: {exc}") from exc
                state.z = state.w + alpha * (w_tilde - state.w)
                if block_seconds is not None:
                    block_ms = (block_ms or 0.0) + 1e3 * sum(block_seconds)
            w_before = np.stack([s.w for s in states])
            try:
                consensus_round(states, mixing, arch, datasets, spec.loss)
            except EngineError as exc:
                raise EngineError(f"round {n}, {exc}") from exc
            scalars += comm_account(graph.num_directed_edges, q, "next")
            alpha = step_size_next(alpha, config.steps.eps)
            movement = max(float(np.abs(s.w - w_before[i]).max()) for i, s in enumerate(states))
            elapsed_ms = 1e3 * (time.perf_counter() - t0)
            done = n + 1 == config.max_epochs or movement < config.tol
            if (n + 1) % config.metric_every == 0 or done:
                record(n + 1, alpha, scalars, elapsed_ms, block_ms)
            if observer is not None:
                observer(n + 1, states)
            if movement < config.tol:
                break
    finally:
        if executor is not None:
            executor.shutdown(wait=False)
    return RunResult(trace=trace, states=states)
