"""Proximity communication graphs, Metropolis mixing weights and a synchronous bus."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class InputError(ValueError):
    pass


class ProtocolError(RuntimeError):
    """Raised when the round barrier or neighbor bookkeeping is violated."""


@dataclass(frozen=True)
class CommGraph:
    """Undirected graph on ``n`` agents; self-loops are implicit.

    ``edges`` holds unordered pairs stored as ``(min, max)``. ``weights`` is
    ``None`` until :func:`metropolis_weights` fills it in.
    """

    n: int
    edges: frozenset[tuple[int, int]]
    weights: np.ndarray | None = field(default=None, compare=False)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "CommGraph":
        normed = set()
        for i, j in edges:
            if i == j:
                continue
            if not (0 <= i < n and 0 <= j < n):
                raise InputError(f"edge ({i}, {j}) out of range for n={n}")
            normed.add((min(i, j), max(i, j)))
        return cls(n=n, edges=frozenset(normed))

    def has_edge(self, i: int, j: int) -> bool:
        return i == j or (min(i, j), max(i, j)) in self.edges

    def neighbors(self, i: int) -> list[int]:
        """Neighbor set of ``i`` including ``i`` itself, sorted."""
        out = [i]
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def degree(self, i: int) -> int:
        return sum(1 for a, b in self.edges if a == i or b == i)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        for a, b in self.edges:
            adj[a, b] = adj[b, a] = True
        return adj

    def edge_list(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


def build_proximity_graph(positions, radius: float) -> CommGraph:
    """Connect every pair of agents closer than ``radius`` (inclusive)."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise InputError(f"positions must be (n, 3), got {pos.shape}")
    if not np.all(np.isfinite(pos)):
        raise InputError("non-finite position")
    if not radius > 0:
        raise InputError(f"radius must be positive, got {radius}")
    n = pos.shape[0]
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    ii, jj = np.nonzero(np.triu(dist <= radius, k=1))
    return CommGraph(n=n, edges=frozenset(zip(ii.tolist(), jj.tolist())))


def metropolis_weights(graph: CommGraph, laziness: float = 0.0) -> CommGraph:
    """Return a copy of ``graph`` carrying Metropolis-Hastings weights.

    a_ij = 1 / (1 + max(deg_i, deg_j)) on edges, the diagonal takes the
    remainder of each row. With ``laziness`` theta the matrix is blended as
    (1 - theta) A + theta I, which keeps it doubly stochastic.
    """
    if not 0.0 <= laziness < 1.0:
        raise InputError(f"laziness must lie in [0, 1), got {laziness}")
    n = graph.n
    deg = graph.degrees()
    A = np.zeros((n, n))
    for i, j in graph.edges:
        A[i, j] = A[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    # diagonal computed last so each row sums to one exactly up to rounding
    A[np.diag_indices(n)] = 1.0 - A.sum(axis=1)
    if laziness:
        A = (1.0 - laziness) * A + laziness * np.eye(n)
    return CommGraph(n=n, edges=graph.edges, weights=A)


def weight_floor(graph: CommGraph) -> float:
    """Smallest positive entry of the weight matrix."""
    if graph.weights is None:
        raise InputError("graph has no weights")
    w = graph.weights
    return float(w[w > 0].min())


def _connected(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    if n <= 1:
        return True
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == n


def check_b_connectivity(graphs: Sequence[CommGraph], B: int) -> list[bool]:
    """For each t, whether the union of edge sets over t..t+B is connected.

    Windows running past the end of ``graphs`` use the available suffix.
    """
    if B < 1:
        raise InputError(f"B must be a positive integer, got {B}")
    if not graphs:
        return []
    n = graphs[0].n
    if any(g.n != n for g in graphs):
        raise InputError("all graphs must share n")
    out = []
    for t in range(len(graphs)):
        union: set[tuple[int, int]] = set()
        for g in graphs[t : t + B + 1]:
            union |= g.edges
        out.append(_connected(n, union))
    return out


@dataclass(frozen=True)
class Message:
    sender: int
    s: np.ndarray
    y: np.ndarray


@dataclass
class Mailbox:
    owner: int
    messages: list[Message] = field(default_factory=list)

    def senders(self) -> list[int]:
        return [m.sender for m in self.messages]

    def by_sender(self) -> dict[int, Message]:
        return {m.sender: m for m in self.messages}


def exchange(graph: CommGraph, outbound: Sequence[tuple[np.ndarray, np.ndarray]]) -> list[Mailbox]:
    """Deliver each agent's (s, y) pair to all of its neighbors, itself included."""
    if len(outbound) != graph.n:
        raise ProtocolError(f"expected {graph.n} outbound messages, got {len(outbound)}")
    frozen = []
    for i, (s, y) in enumerate(outbound):
        s = np.array(s, dtype=float)
        y = np.array(y, dtype=float)
        if s.shape != (3,) or y.shape != (3,):
            raise ProtocolError(f"agent {i}: payload must be two 3-vectors")
        s.flags.writeable = False
        y.flags.writeable = False
        frozen.append(Message(i, s, y))
    return [Mailbox(i, [frozen[j] for j in graph.neighbors(i)]) for i in range(graph.n)]


class SyncBus:
    """Round-barrier message bus.

    Agents ``post`` their payload for round t; nothing is readable until
    every agent has posted and ``deliver`` closes the round. The counters let
    tests assert that no mailbox was read early.
    """

    def __init__(self, n: int):
        self.n = n
        self.round = 0
        self._pending: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._boxes: list[Mailbox] | None = None
        self.sent = 0
        self.delivered = 0
        self.early_reads = 0

    def post(self, i: int, s, y) -> None:
        if self._boxes is not None:
            raise ProtocolError("post after delivery; call next_round first")
        if i in self._pending:
            raise ProtocolError(f"agent {i} posted twice in round {self.round}")
        self._pending[i] = (s, y)
        self.sent += 1

    def deliver(self, graph: CommGraph) -> list[Mailbox]:
        if len(self._pending) != self.n:
            missing = sorted(set(range(self.n)) - set(self._pending))
            raise ProtocolError(f"round {self.round}: missing posts from {missing}")
        self._boxes = exchange(graph, [self._pending[i] for i in range(self.n)])
        self.delivered += sum(len(b.messages) for b in self._boxes)
        return self._boxes

    def mailbox(self, i: int) -> Mailbox:
        if self._boxes is None:
            self.early_reads += 1
            raise ProtocolError(f"agent {i} read its mailbox before the round-{self.round} barrier")
        return self._boxes[i]

    def next_round(self) -> None:
        self._pending = {}
        self._boxes = None
        self.round += 1
