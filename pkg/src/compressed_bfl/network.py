"""
Simulated device networks: graph construction, Metropolis-Hastings mixing
matrices and a synchronous, lossless message fabric with traffic accounting.
"""

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import ArgumentError, DimensionError, RngStream, SparseDelta
from .logging import logger

FLOAT_BYTES = 8
INDEX_BYTES = 8


class GraphKind(str, Enum):
    COMPLETE = "complete"
    RING = "ring"
    ERDOS_RENYI = "erdos-renyi"


@dataclass(frozen=True)
class DeviceGraph:
    """
    Undirected device graph over ``n_devices`` nodes.

    Edges are stored as ``(i, j)`` pairs with ``i < j``; self-membership of a
    neighborhood is a convention handled by the mixing matrix.
    """

    n_devices: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n_devices < 1:
            raise ArgumentError(f"Need at least one device, got {self.n_devices}")
        normalized = set()
        for i, j in self.edges:
            if i == j:
                raise ArgumentError(f"Self-loop ({i}, {j}) is not allowed")
            if not (0 <= i < self.n_devices and 0 <= j < self.n_devices):
                raise ArgumentError(f"Edge ({i}, {j}) outside of {self.n_devices} devices")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(normalized))

    @classmethod
    def single(cls) -> "DeviceGraph":
        return cls(1)

    @property
    def K(self) -> int:
        return self.n_devices

    @property
    def n_directed_edges(self) -> int:
        return 2 * len(self.edges)

    def neighbors(self, k: int) -> list[int]:
        """Neighbors of ``k`` in increasing order, excluding ``k`` itself."""
        out = [j for i, j in self.edges if i == k] + [i for i, j in self.edges if j == k]
        return sorted(out)

    def degree(self, k: int) -> int:
        return len(self.neighbors(k))

    def degrees(self) -> np.ndarray:
        return np.array([self.degree(k) for k in range(self.n_devices)])

    def adjacency(self) -> np.ndarray:
        adjacency = np.zeros((self.n_devices, self.n_devices), dtype=np.int64)
        for i, j in self.edges:
            adjacency[i, j] = adjacency[j, i] = 1
        return adjacency

    def is_connected(self) -> bool:
        seen, queue = {0}, deque([0])
        while queue:
            node = queue.popleft()
            for other in self.neighbors(node):
                if other not in seen:
                    seen.add(other)
                    queue.append(other)
        return len(seen) == self.n_devices


def build_graph(
    kind: GraphKind,
    K: int,
    rng: Optional[RngStream] = None,
    edge_prob: float = 0.5,
    max_attempts: int = 1000,
) -> DeviceGraph:
    """
    Build a connected device graph.

    Parameters
    ----------
    kind : GraphKind
        ``complete``, ``ring`` or ``erdos-renyi``.
    K : int
        Number of devices (at least 2).
    rng : RngStream, optional
        Required for ``erdos-renyi``.
    edge_prob : float
        Edge probability of ``erdos-renyi``.
    max_attempts : int
        Number of rejection-sampling draws before giving up.
    """
    kind = GraphKind(kind)
    if K < 2:
        raise ArgumentError(f"A device graph needs K >= 2, got {K}")
    if kind is GraphKind.COMPLETE:
        edges = {(i, j) for i in range(K) for j in range(i + 1, K)}
        return DeviceGraph(K, frozenset(edges))
    if kind is GraphKind.RING:
        edges = {(min(i, (i + 1) % K), max(i, (i + 1) % K)) for i in range(K)}
        return DeviceGraph(K, frozenset(edges))
    if rng is None:
        raise ArgumentError("erdos-renyi graphs need a random stream")
    if not 0 < edge_prob <= 1:
        raise ArgumentError(f"Edge probability must lie in (0, 1], got {edge_prob}")
    pairs = [(i, j) for i in range(K) for j in range(i + 1, K)]
    for attempt in range(1, max_attempts + 1):
        keep = rng.uniform(len(pairs)) < edge_prob
        graph = DeviceGraph(K, frozenset(p for p, k in zip(pairs, keep) if k))
        if graph.is_connected():
            logger.debug(f"Connected erdos-renyi graph after {attempt} draw(s)")
            return graph
    raise ArgumentError(
        f"No connected erdos-renyi graph with K={K}, q={edge_prob} "
        f"after {max_attempts} attempts"
    )


def metropolis_weights(graph: DeviceGraph) -> np.ndarray:
    """
    Metropolis-Hastings mixing matrix of ``graph``.

    ``w_kj = 1 / (1 + max(deg k, deg j))`` on edges and
    ``w_kk = 1 - sum_{j != k} w_kj``, which is symmetric and doubly stochastic.
    """
    if not graph.is_connected():
        raise ArgumentError("Mixing weights need a connected graph")
    degrees = graph.degrees()
    omega = np.zeros((graph.n_devices, graph.n_devices))
    for i, j in graph.edges:
        omega[i, j] = omega[j, i] = 1.0 / (1.0 + max(degrees[i], degrees[j]))
    for k in range(graph.n_devices):
        omega[k, k] = 1.0 - (omega[k].sum() - omega[k, k])
    return omega


@dataclass(frozen=True)
class MixingDiagnostics:
    symmetric: bool
    nonnegative: bool
    max_row_deviation: float
    max_col_deviation: float
    second_largest_modulus: float

    @property
    def spectral_gap(self) -> float:
        return 1.0 - self.second_largest_modulus

    @property
    def is_valid(self) -> bool:
        return (
            self.symmetric
            and self.nonnegative
            and self.max_row_deviation < 1e-12
            and self.max_col_deviation < 1e-12
        )


def second_largest_modulus(
    omega: np.ndarray, tol: float = 1e-15, max_iter: int = 100_000
) -> float:
    """
    Largest singular value of ``omega - (1/K) 11^T`` by power iteration on
    ``B^T B``. For a doubly stochastic ``omega`` this is the second-largest
    eigenvalue modulus.
    """
    K = omega.shape[0]
    deflated = omega - np.full((K, K), 1.0 / K)
    gram = deflated.T @ deflated
    vector = np.random.default_rng(0).standard_normal(K)
    vector /= np.linalg.norm(vector)
    estimate = 0.0
    for _ in range(max_iter):
        image = gram @ vector
        norm = np.linalg.norm(image)
        if norm == 0:
            return 0.0
        vector = image / norm
        updated = float(vector @ gram @ vector)
        if abs(updated - estimate) <= tol * max(1.0, updated):
            estimate = updated
            break
        estimate = updated
    return float(np.sqrt(max(estimate, 0.0)))


def validate_mixing(omega: np.ndarray) -> MixingDiagnostics:
    omega = np.asarray(omega, dtype=np.float64)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise DimensionError(f"Mixing matrix must be square, got shape {omega.shape}")
    return MixingDiagnostics(
        symmetric=bool(np.allclose(omega, omega.T, rtol=0.0, atol=1e-12)),
        nonnegative=bool(np.all(omega >= 0)),
        max_row_deviation=float(np.max(np.abs(omega.sum(axis=1) - 1.0))),
        max_col_deviation=float(np.max(np.abs(omega.sum(axis=0) - 1.0))),
        second_largest_modulus=second_largest_modulus(omega),
    )


@dataclass(frozen=True)
class RoundTraffic:
    """Traffic of one synchronous round."""

    values: int
    indices: int
    broadcast_values: int

    @property
    def bytes(self) -> int:
        return FLOAT_BYTES * self.values + INDEX_BYTES * self.indices

    @property
    def value_bytes(self) -> int:
        return FLOAT_BYTES * self.values


class CommLedger:
    """
    Cumulative communication accounting.

    "values" counts every directed neighbor transmission separately; the
    broadcast convention (one transmission per sending device) is tracked
    alongside. Sparse messages add one index per value.
    """

    def __init__(self, n_devices: int):
        self.n_devices = n_devices
        self.rounds: list[RoundTraffic] = []
        self.device_values = np.zeros(n_devices, dtype=np.int64)
        self.device_indices = np.zeros(n_devices, dtype=np.int64)

    def record_round(self, sent_values: Sequence[int], sent_indices: Sequence[int], broadcast: int):
        sent_values = np.asarray(sent_values, dtype=np.int64)
        sent_indices = np.asarray(sent_indices, dtype=np.int64)
        self.device_values += sent_values
        self.device_indices += sent_indices
        traffic = RoundTraffic(int(sent_values.sum()), int(sent_indices.sum()), int(broadcast))
        self.rounds.append(traffic)
        return traffic

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    @property
    def total_values(self) -> int:
        return int(sum(r.values for r in self.rounds))

    @property
    def total_indices(self) -> int:
        return int(sum(r.indices for r in self.rounds))

    @property
    def total_broadcast_values(self) -> int:
        return int(sum(r.broadcast_values for r in self.rounds))

    @property
    def total_bytes(self) -> int:
        return int(sum(r.bytes for r in self.rounds))

    @property
    def total_value_bytes(self) -> int:
        return FLOAT_BYTES * self.total_values

    def cumulative_values(self) -> np.ndarray:
        return np.cumsum([r.values for r in self.rounds], dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "rounds": self.n_rounds,
            "values_sent": self.total_values,
            "index_overhead": self.total_indices,
            "broadcast_values_sent": self.total_broadcast_values,
            "value_bytes": self.total_value_bytes,
            "total_bytes": self.total_bytes,
            "per_device_values": self.device_values.tolist(),
        }

    @classmethod
    def dense_reference(cls, graph: DeviceGraph, dim: int, rounds: int) -> "CommLedger":
        """Ledger of exchanging full ``dim``-vectors over ``graph`` for ``rounds`` rounds."""
        ledger = cls(graph.n_devices)
        degrees = graph.degrees()
        broadcast = dim * int(np.count_nonzero(degrees))
        for _ in range(rounds):
            ledger.record_round(dim * degrees, np.zeros_like(degrees), broadcast)
        return ledger


def exchange(
    messages: Mapping[int, SparseDelta] | Sequence[SparseDelta],
    graph: DeviceGraph,
    ledger: CommLedger,
    indexed: Optional[bool] = None,
) -> tuple[dict[int, dict[int, SparseDelta]], CommLedger]:
    """
    Deliver every device's message to all of its neighbors.

    ``indexed`` says whether messages carry their indices on the wire; sparse
    compressors set it even when they keep every coordinate. By default a
    message is indexed unless it lists every coordinate.

    Returns the map ``receiver -> {sender: message}`` and the updated ledger.
    Delivery does not depend on the order in which devices are visited.
    """
    if not isinstance(messages, Mapping):
        messages = dict(enumerate(messages))
    if set(messages) != set(range(graph.n_devices)):
        raise ArgumentError(
            f"Expected one message per device 0..{graph.n_devices - 1}, "
            f"got {sorted(messages)}"
        )
    delivered = {k: {} for k in range(graph.n_devices)}
    sent_values = np.zeros(graph.n_devices, dtype=np.int64)
    sent_indices = np.zeros(graph.n_devices, dtype=np.int64)
    broadcast = 0
    for sender in range(graph.n_devices):
        message = messages[sender]
        neighbors = graph.neighbors(sender)
        for receiver in neighbors:
            delivered[receiver][sender] = message
        sent_values[sender] = message.nnz * len(neighbors)
        carries_indices = not message.is_dense if indexed is None else indexed
        if carries_indices:
            sent_indices[sender] = message.nnz * len(neighbors)
        if neighbors:
            broadcast += message.nnz
    traffic = ledger.record_round(sent_values, sent_indices, broadcast)
    logger.debug(
        f"Round {ledger.n_rounds}: {traffic.values} values, {traffic.indices} indices sent"
    )
    return delivered, ledger
