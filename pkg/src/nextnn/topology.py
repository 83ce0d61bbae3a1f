"""Agent communication graphs and doubly stochastic mixing matrices.

Graphs are directed edge sets over ``range(num_agents)``; an edge
``(j, i)`` means agent ``j`` can send to agent ``i``. Self-loops are
never stored, every node implicitly belongs to its own in-neighborhood
and mixing matrices carry the corresponding diagonal weight. Schedules
map round indices to ``(Graph, MixingMatrix)`` pairs so time-varying
connectivity can be validated against a strong-connectivity window.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "Graph",
    "MixingMatrix",
    "TopologySchedule",
    "undirected_graph",
    "random_connected_graph",
    "metropolis_mixing",
    "is_strongly_connected",
    "validate_schedule",
    "graph_to_edge_text",
    "graph_from_edge_text",
]

STOCHASTICITY_TOL = 1e-12


@dataclass(frozen=True)
class Graph:
    """Directed communication graph on ``num_agents`` vertices."""

    num_agents: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        object.__setattr__(self, "edges", frozenset((int(j), int(i)) for j, i in self.edges))
        if self.num_agents < 1:
            raise ValueError("need at least one agent")
        for j, i in self.edges:
            if j == i:
                raise ValueError("self-loops are implicit and must not be stored")
            if not (0 <= j < self.num_agents and 0 <= i < self.num_agents):
                raise ValueError(f"edge ({j}, {i}) outside [0, {self.num_agents})")

    @property
    def num_directed_edges(self) -> int:
        return len(self.edges)

    @property
    def is_symmetric(self) -> bool:
        return all((i, j) in self.edges for j, i in self.edges)

    def in_neighbors(self, i: int) -> tuple[int, ...]:
        """Senders ``j != i`` that can reach ``i`` (self excluded)."""
        return tuple(sorted(j for j, k in self.edges if k == i))

    def degree(self, i: int) -> int:
        return len(self.in_neighbors(i))

    def adjacency(self) -> np.ndarray:
        """Boolean matrix with ``adj[i, j]`` true when j can send to i."""
        adj = np.zeros((self.num_agents, self.num_agents), dtype=bool)
        for j, i in self.edges:
            adj[i, j] = True
        return adj


def undirected_graph(num_agents: int, pairs) -> Graph:
    """Build a symmetric graph from unordered vertex pairs."""
    edges = set()
    for a, b in pairs:
        edges.add((a, b))
        edges.add((b, a))
    return Graph(num_agents, frozenset(edges))


def is_strongly_connected(graph: Graph) -> bool:
    """Every node reaches every other following edge directions."""
    n = graph.num_agents
    if n == 1:
        return True
    fwd = [[] for _ in range(n)]
    bwd = [[] for _ in range(n)]
    for j, i in graph.edges:
        fwd[j].append(i)
        bwd[i].append(j)

    def reached(adj):
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen)

    return reached(fwd) == n and reached(bwd) == n


def random_connected_graph(num_agents: int, edge_prob: float, seed, max_attempts: int = 10_000) -> Graph:
    """Symmetric Erdos-Renyi graph resampled until connected.

    Each unordered pair is included independently with probability
    ``edge_prob``; sampling repeats until the graph is connected.
    Deterministic per seed. Raises after ``max_attempts`` failures,
    which signals infeasible parameters rather than bad luck.
    """
    if num_agents < 1:
        raise ValueError("need at least one agent")
    if not 0.0 < edge_prob <= 1.0:
        raise ValueError("edge_prob must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(num_agents, k=1)
    for _ in range(max_attempts):
        mask = rng.random(iu.size) < edge_prob
        graph = undirected_graph(num_agents, zip(iu[mask].tolist(), ju[mask].tolist()))
        if is_strongly_connected(graph):
            return graph
    raise RuntimeError(f"no connected graph in {max_attempts} attempts (I={num_agents}, p={edge_prob})")


class MixingMatrix:
    """Doubly stochastic combination weights aligned with a graph.

    Entry ``(i, j)`` is the weight agent ``i`` gives to agent ``j``'s
    message. Rows and columns must each sum to one within
    ``STOCHASTICITY_TOL`` and all entries must be nonnegative; violations
    raise at construction.
    """

    def __init__(self, entries: np.ndarray):
        entries = np.array(entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("mixing matrix must be square")
        if not np.all(np.isfinite(entries)):
            raise ValueError("mixing matrix has non-finite entries")
        if entries.min() < 0:
            raise ValueError("mixing matrix has negative entries")
        residual = max(
            np.abs(entries.sum(axis=1) - 1.0).max(),
            np.abs(entries.sum(axis=0) - 1.0).max(),
        )
        if residual >= STOCHASTICITY_TOL:
            raise ValueError(f"matrix is not doubly stochastic (residual {residual:.3e})")
        entries.flags.writeable = False
        self.entries = entries

    @property
    def num_agents(self) -> int:
        return self.entries.shape[0]

    @property
    def stochasticity_residual(self) -> float:
        """Largest deviation of any row or column sum from one."""
        return float(max(
            np.abs(self.entries.sum(axis=1) - 1.0).max(),
            np.abs(self.entries.sum(axis=0) - 1.0).max(),
        ))

    @property
    def min_positive_entry(self) -> float:
        positive = self.entries[self.entries > 0]
        return float(positive.min()) if positive.size else 0.0

    def matches_sparsity(self, graph: Graph) -> bool:
        """Off-diagonal support must sit inside the graph's edge set."""
        if graph.num_agents != self.num_agents:
            return False
        for i in range(self.num_agents):
            for j in range(self.num_agents):
                if i != j and self.entries[i, j] > 0 and (j, i) not in graph.edges:
                    return False
        return True

    def __repr__(self):
        return f"MixingMatrix(I={self.num_agents})"


def metropolis_mixing(graph: Graph) -> MixingMatrix:
    """Metropolis-Hastings weights for a symmetric graph.

    ``c_ij = 1 / (max(deg_i, deg_j) + 1)`` for neighbors ``i != j`` and
    ``c_ii = 1 - sum_j c_ij``, which is doubly stochastic by symmetry.
    """
    if not graph.is_symmetric:
        raise ValueError("Metropolis weights require a symmetric graph")
    n = graph.num_agents
    deg = [graph.degree(i) for i in range(n)]
    entries = np.zeros((n, n))
    for j, i in graph.edges:
        entries[i, j] = 1.0 / (max(deg[i], deg[j]) + 1.0)
    for i in range(n):
        entries[i, i] = 1.0 - entries[i].sum()
    return MixingMatrix(entries)


@dataclass
class TopologySchedule:
    """Round-indexed source of ``(Graph, MixingMatrix)`` pairs.

    ``window`` is the number of consecutive rounds whose edge union is
    expected to be strongly connected (1 for a static connected graph).
    """

    provider: Callable[[int], tuple[Graph, MixingMatrix]]
    window: int = 1

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be a positive integer")

    def at(self, n: int) -> tuple[Graph, MixingMatrix]:
        return self.provider(n)

    @classmethod
    def static(cls, graph: Graph, mixing: MixingMatrix | None = None, window: int = 1) -> "TopologySchedule":
        if mixing is None:
            mixing = metropolis_mixing(graph)
        pair = (graph, mixing)
        return cls(provider=lambda n: pair, window=window)

    @classmethod
    def cycle(cls, pairs, window: int | None = None) -> "TopologySchedule":
        pairs = list(pairs)
        return cls(provider=lambda n: pairs[n % len(pairs)], window=window or len(pairs))


@dataclass(frozen=True)
class RoundCheck:
    round: int
    row_residual: float
    col_residual: float
    sparsity_ok: bool


@dataclass(frozen=True)
class WindowCheck:
    start: int
    stop: int
    connected: bool


@dataclass(frozen=True)
class ScheduleReport:
    rounds: tuple[RoundCheck, ...]
    windows: tuple[WindowCheck, ...]
    passed: bool


def validate_schedule(schedule: TopologySchedule, horizon: int) -> ScheduleReport:
    """Check stochasticity, sparsity, and windowed connectivity up to ``horizon``.

    Failures are reported, never raised: the report carries per-round
    stochasticity residuals and sparsity matches, plus the strong
    connectivity of every complete ``window``-round edge union. The
    schedule passes when all residuals stay below ``STOCHASTICITY_TOL``,
    every matrix matches its graph, and every window is connected.
    """
    if horizon < schedule.window:
        raise ValueError("horizon must cover at least one window")
    rounds = []
    graphs = []
    for n in range(horizon):
        graph, mixing = schedule.at(n)
        graphs.append(graph)
        rounds.append(RoundCheck(
            round=n,
            row_residual=float(np.abs(mixing.entries.sum(axis=1) - 1.0).max()),
            col_residual=float(np.abs(mixing.entries.sum(axis=0) - 1.0).max()),
            sparsity_ok=mixing.matches_sparsity(graph),
        ))
    windows = []
    b = schedule.window
    for start in range(0, horizon - b + 1, b):
        union = frozenset().union(*(g.edges for g in graphs[start:start + b]))
        merged = Graph(graphs[0].num_agents, union)
        windows.append(WindowCheck(start=start, stop=start + b, connected=is_strongly_connected(merged)))
    passed = (
        all(r.row_residual < STOCHASTICITY_TOL and r.col_residual < STOCHASTICITY_TOL and r.sparsity_ok
            for r in rounds)
        and all(w.connected for w in windows)
    )
    return ScheduleReport(tuple(rounds), tuple(windows), passed)


def graph_to_edge_text(graph: Graph) -> str:
    """One ``sender receiver`` pair per line, sorted, for reproducibility dumps."""
    return "\n".join(f"{j} {i}" for j, i in sorted(graph.edges)) + ("\n" if graph.edges else "")


def graph_from_edge_text(text: str, num_agents: int) -> Graph:
    edges = set()
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        j, i = line.split()
        edges.add((int(j), int(i)))
    return Graph(num_agents, frozenset(edges))
