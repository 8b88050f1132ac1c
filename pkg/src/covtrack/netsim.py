"""Synchronous message passing between robots, with byte accounting.

Communication happens in rounds: every robot hands over its outbox, the
round delivers each message exactly once to recipients that are graph
neighbors of the sender, and messages to anyone else are dropped with a
warning. Inboxes come back sorted by sender id, so a round is a pure
function of its inputs.

Byte accounting follows a fixed wire model regardless of the in-memory
payloads: 8 bytes per coordinate pair or scalar, 12 bytes per target
record.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

COORD_PAIR_BYTES = 8
TARGET_RECORD_BYTES = 12
SCALAR_BYTES = 8


def payload_bytes(coord_pairs: int = 0, target_records: int = 0,
                  scalars: int = 0) -> int:
    """Wire size of a message under the fixed accounting model."""
    return (COORD_PAIR_BYTES * coord_pairs
            + TARGET_RECORD_BYTES * target_records
            + SCALAR_BYTES * scalars)


def bandwidth_model(method: str, n_neighbors: int, n_targets: int,
                    hz: float = 1.0) -> float:
    """Per-robot outbound bytes per second for the partition exchange.

    Diagram methods broadcast one generator coordinate pair per neighbor;
    the capacity-constrained method additionally ships one record per
    detected target.
    """
    if method in ("voronoi", "power"):
        per_neighbor = payload_bytes(coord_pairs=1)
    elif method == "ccvd":
        per_neighbor = payload_bytes(coord_pairs=1, target_records=n_targets)
    else:
        raise ValueError(f"no bandwidth model for method {method!r}")
    return per_neighbor * n_neighbors * hz


@dataclass(frozen=True)
class NeighborGraph:
    """Undirected communication graph over robot ids 0..n-1."""

    n: int
    edges: frozenset

    def __post_init__(self):
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n) or i >= j:
                raise ValueError(f"bad edge ({i}, {j})")

    def neighbors(self, i: int) -> list[int]:
        out = [b if a == i else a for a, b in self.edges if i in (a, b)]
        return sorted(out)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a

    def degree(self, i: int) -> int:
        return sum(1 for a, b in self.edges if i in (a, b))

    def max_degree(self) -> int:
        if not self.edges:
            return 0
        return int(self.adjacency().sum(axis=1).max())

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        return (min(i, j), max(i, j)) in self.edges

    def edge_list(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    @classmethod
    def complete(cls, n: int) -> "NeighborGraph":
        return cls(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))


def build_graph(positions, radius: float) -> NeighborGraph:
    """Connect every pair of robots within ``radius`` of each other."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(pos)
    edges = set()
    for i in range(n):
        d = np.hypot(pos[i + 1:, 0] - pos[i, 0], pos[i + 1:, 1] - pos[i, 1])
        for k in np.nonzero(d <= radius)[0]:
            edges.add((i, i + 1 + int(k)))
    return NeighborGraph(n, frozenset(edges))


def connectivity_check(graph: NeighborGraph) -> bool:
    """True when every robot can reach every other robot."""
    if graph.n == 0:
        return True
    adj = graph.adjacency()
    seen = np.zeros(graph.n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.nonzero(adj[i])[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return bool(seen.all())


@dataclass
class Message:
    sender: int
    recipient: int
    kind: str
    payload: object
    size_bytes: int


class TrafficLedger:
    """Cumulative per-robot, per-kind byte and message counters.

    ``set_step`` stamps subsequent traffic with the current simulation
    step; per-step rows come out of :meth:`rows` ready for CSV export.
    Counters only ever grow.
    """

    def __init__(self):
        self.step = 0
        self._rows = defaultdict(lambda: [0, 0])   # (step, robot, kind) -> [bytes, msgs]
        self.total_sent = defaultdict(lambda: [0, 0])  # (robot, kind) -> [bytes, msgs]
        self.dropped = 0

    def set_step(self, step: int):
        self.step = int(step)

    def record(self, robot: int, kind: str, size_bytes: int, messages: int = 1):
        cell = self._rows[(self.step, robot, kind)]
        cell[0] += int(size_bytes)
        cell[1] += int(messages)
        tot = self.total_sent[(robot, kind)]
        tot[0] += int(size_bytes)
        tot[1] += int(messages)

    def rows(self) -> list[tuple]:
        """(step, robot, kind, bytes, messages) rows in deterministic order."""
        return [
            (step, robot, kind, vals[0], vals[1])
            for (step, robot, kind), vals in sorted(self._rows.items())
        ]

    def robot_bytes(self, robot: int) -> int:
        return sum(v[0] for (r, _), v in self.total_sent.items() if r == robot)

    def rate_per_second(self, robot: int, duration_s: float) -> float:
        if duration_s <= 0:
            raise ValueError("duration must be positive")
        return self.robot_bytes(robot) / duration_s


def exchange_round(graph: NeighborGraph, outboxes: dict,
                   ledger: TrafficLedger | None = None) -> dict:
    """Deliver one synchronous round of messages.

    ``outboxes`` maps sender id to a list of :class:`Message`. Messages
    addressed to non-neighbors are dropped with a warning. Returns the
    inboxes, keyed by recipient, each sorted by sender id (then original
    order), so processing order never depends on dict iteration.
    """
    inboxes = {i: [] for i in range(graph.n)}
    for sender in sorted(outboxes):
        for msg in outboxes[sender]:
            if msg.sender != sender:
                raise ValueError("message sender does not match outbox owner")
            if not graph.has_edge(sender, msg.recipient):
                log.warning(
                    "dropping %s message %d -> %d: not neighbors",
                    msg.kind, sender, msg.recipient,
                )
                if ledger is not None:
                    ledger.dropped += 1
                continue
            inboxes[msg.recipient].append(msg)
            if ledger is not None:
                ledger.record(sender, msg.kind, msg.size_bytes)
    for inbox in inboxes.values():
        inbox.sort(key=lambda m: m.sender)
    return inboxes
