"""Networks, scenario sets and capacity reservation instances."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Network",
    "ScenarioSet",
    "Instance",
    "ValidationReport",
    "validate",
    "check_feasibility",
    "split_capacitated_node",
    "split_capacitated_node_instance",
    "checked",
    "InfeasibleInstance",
]

COLUMN_SUM_RTOL = 1e-9


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Network:
    """Directed graph with per-edge capacity and reservation price.

    Nodes are ``0 .. n-1``. Edge ``j`` runs from ``tail[j]`` to ``head[j]``.
    The incidence matrix has ``+1`` at the head and ``-1`` at the tail, so
    conservation for a source vector ``s`` reads ``A f + s = 0``.
    """

    n: int
    tail: np.ndarray
    head: np.ndarray
    capacity: np.ndarray
    price: np.ndarray

    def __post_init__(self):
        tail = _frozen(self.tail, dtype=np.int64).reshape(-1)
        head = _frozen(self.head, dtype=np.int64).reshape(-1)
        cap = _frozen(self.capacity).reshape(-1)
        price = _frozen(self.price).reshape(-1)
        m = tail.shape[0]
        if head.shape[0] != m or cap.shape[0] != m or price.shape[0] != m:
            raise ValueError("tail, head, capacity and price must have equal length")
        if int(self.n) < 1:
            raise ValueError("network needs at least one node")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "tail", tail)
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "capacity", cap)
        object.__setattr__(self, "price", price)

    @classmethod
    def from_edges(cls, n, edges, capacity=None, price=None):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        m = edges.shape[0]
        capacity = np.ones(m) if capacity is None else capacity
        price = np.ones(m) if price is None else price
        return cls(n, edges[:, 0], edges[:, 1], capacity, price)

    @property
    def m(self) -> int:
        return self.tail.shape[0]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.tail.tolist(), self.head.tolist()))

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Sparse n-by-m incidence matrix."""
        m = self.m
        cols = np.concatenate([np.arange(m), np.arange(m)])
        rows = np.concatenate([self.head, self.tail])
        vals = np.concatenate([np.ones(m), -np.ones(m)])
        A = sp.csr_matrix((vals, (rows, cols)), shape=(self.n, m))
        return A

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        if self.m == 0:
            return False
        adj = sp.coo_matrix(
            (np.ones(self.m), (self.tail, self.head)), shape=(self.n, self.n)
        )
        ncomp, _ = connected_components(adj, directed=False)
        return ncomp == 1

    def with_prices(self, price) -> "Network":
        return Network(self.n, self.tail, self.head, self.capacity, price)

    def with_capacity(self, capacity) -> "Network":
        return Network(self.n, self.tail, self.head, capacity, self.price)


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Source vectors, one column per scenario (``n x K``)."""

    sources: np.ndarray

    def __post_init__(self):
        S = _frozen(self.sources)
        if S.ndim == 1:
            S = _frozen(S.reshape(-1, 1))
        if S.ndim != 2 or S.shape[1] < 1:
            raise ValueError("scenario matrix must be n x K with K >= 1")
        object.__setattr__(self, "sources", S)

    @property
    def K(self) -> int:
        return self.sources.shape[1]

    @property
    def n(self) -> int:
        return self.sources.shape[0]

    def column(self, k: int) -> np.ndarray:
        return self.sources[:, k]


@dataclass(frozen=True, eq=False)
class Instance:
    network: Network
    scenarios: ScenarioSet
    feasible: bool = field(default=False)

    def __post_init__(self):
        if not isinstance(self.scenarios, ScenarioSet):
            object.__setattr__(self, "scenarios", ScenarioSet(self.scenarios))

    @property
    def n(self) -> int:
        return self.network.n

    @property
    def m(self) -> int:
        return self.network.m

    @property
    def K(self) -> int:
        return self.scenarios.K

    @property
    def S(self) -> np.ndarray:
        return self.scenarios.sources

    @property
    def p(self) -> np.ndarray:
        return self.network.price

    @property
    def c(self) -> np.ndarray:
        return self.network.capacity

    def replace(self, network=None, sources=None) -> "Instance":
        """New (unchecked) instance with the network or sources swapped."""
        return Instance(
            self.network if network is None else network,
            ScenarioSet(self.S if sources is None else sources),
        )

    def to_dict(self) -> dict:
        """File representation; node ids are 1-based."""
        net = self.network
        return {
            "n": net.n,
            "edges": [[t + 1, h + 1] for t, h in net.edges],
            "capacity": net.capacity.tolist(),
            "price": net.price.tolist(),
            "scenarios": self.S.T.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Instance":
        edges = np.asarray(doc["edges"], dtype=np.int64).reshape(-1, 2) - 1
        net = Network(doc["n"], edges[:, 0], edges[:, 1], doc["capacity"], doc["price"])
        S = np.asarray(doc["scenarios"], dtype=float)
        if S.ndim != 2:
            raise ValueError("scenarios must be a list of source vectors")
        return cls(net, ScenarioSet(S.T))

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate(instance: Instance, rtol: float = COLUMN_SUM_RTOL) -> ValidationReport:
    """Check every structural invariant of ``instance``; never raises."""
    report = ValidationReport()
    v = report.violations
    net = instance.network
    n = net.n
    bad_ids = (net.tail < 0) | (net.tail >= n) | (net.head < 0) | (net.head >= n)
    for j in np.flatnonzero(bad_ids):
        v.append(f"edge {j + 1} has an endpoint outside 1..{n}")
    for j in np.flatnonzero(net.tail == net.head):
        v.append(f"edge {j + 1} is a self-loop")
    for j in np.flatnonzero(~np.isfinite(net.capacity) | (net.capacity < 0)):
        v.append(f"edge {j + 1} has invalid capacity {net.capacity[j]!r}")
    for j in np.flatnonzero(~np.isfinite(net.price) | (net.price < 0)):
        v.append(f"edge {j + 1} has invalid price {net.price[j]!r}")
    if not bad_ids.any() and not net.is_connected():
        v.append("graph not connected")
    S = instance.S
    if S.shape[0] != n:
        v.append(f"scenario dimension {S.shape[0]} does not match node count {n}")
        return report
    if not np.isfinite(S).all():
        v.append("scenario matrix has non-finite entries")
        return report
    sums = S.sum(axis=0)
    scale = np.maximum(1.0, np.abs(S).max(axis=0))
    for k in np.flatnonzero(np.abs(sums) > rtol * scale):
        v.append(f"source column {k + 1} does not sum to zero")
    return report


def check_feasibility(instance: Instance, tol: float = COLUMN_SUM_RTOL) -> np.ndarray:
    """Boolean mask of scenarios that admit ``A f + s = 0, 0 <= f <= c``.

    Each scenario is tested with a phase-one network simplex (artificial arcs
    to a root node, zero edge cost).
    """
    from .netsimplex import network_simplex

    net = instance.network
    zero = np.zeros(net.m)
    out = np.empty(instance.K, dtype=bool)
    for k in range(instance.K):
        s = instance.S[:, k]
        res = network_simplex(net.n, net.tail, net.head, net.capacity, zero, s, tol=tol)
        scale = max(1.0, float(np.abs(s).max(initial=0.0)))
        out[k] = res.artificial_flow <= tol * scale
    return out


def checked(instance: Instance) -> Instance:
    """Validate and feasibility-check ``instance``; return it flagged feasible.

    Raises ``ValueError`` listing every violation or infeasible scenario.
    """
    report = validate(instance)
    if not report.ok:
        raise ValueError("invalid instance: " + "; ".join(report.violations))
    mask = check_feasibility(instance)
    if not mask.all():
        bad = ", ".join(str(k + 1) for k in np.flatnonzero(~mask))
        raise InfeasibleInstance(f"infeasible scenarios: {bad}", np.flatnonzero(~mask))
    return Instance(instance.network, instance.scenarios, feasible=True)


class InfeasibleInstance(ValueError):
    def __init__(self, msg, scenarios=()):
        super().__init__(msg)
        self.scenarios = [int(k) for k in scenarios]


def split_capacitated_node(network: Network, node: int, capacity: float) -> Network:
    """Bound the throughput of ``node`` by splitting it in two.

    Edges into ``node`` keep pointing at it (the in-copy); edges out of it
    leave from a new node ``n`` (the out-copy). A zero-price edge of the given
    capacity joins the two copies and is appended after the original edges.
    """
    if not 0 <= node < network.n:
        raise ValueError(f"node {node} is not in 0..{network.n - 1}")
    if capacity < 0:
        raise ValueError("node capacity must be nonnegative")
    out_node = network.n
    tail = np.where(network.tail == node, out_node, network.tail)
    tail = np.append(tail, node)
    head = np.append(network.head, out_node)
    cap = np.append(network.capacity, float(capacity))
    price = np.append(network.price, 0.0)
    return Network(network.n + 1, tail, head, cap, price)


def split_capacitated_node_instance(instance: Instance, node: int, capacity: float) -> Instance:
    """Instance version of :func:`split_capacitated_node`.

    The out-copy gets a zero source row; injections and withdrawals at
    ``node`` stay on the in-copy, so injected flow must cross the new edge.
    """
    net = split_capacitated_node(instance.network, node, capacity)
    S = np.vstack([instance.S, np.zeros((1, instance.K))])
    return Instance(net, ScenarioSet(S))
