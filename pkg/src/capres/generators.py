"""Deterministic instance generators."""

from __future__ import annotations

import numpy as np

from .model import Instance, Network, ScenarioSet

__all__ = [
    "generate_layered",
    "generate_random",
    "generate_random_with_witness",
    "SOURCE_STYLES",
    "PRICE_STYLES",
]

SOURCE_STYLES = ("continuous", "discrete")
PRICE_STYLES = ("uniform", "ones")


def generate_layered(a: int, eps: float) -> Instance:
    """Three-layer family on which the per-scenario heuristic is nearly K-suboptimal.

    Nodes ``0..a-1`` form the first layer, ``a..2a-1`` the second and ``2a``
    is the sink. Edge ``(i, a+j)`` costs ``eps`` when ``i == j`` and
    ``2 eps`` otherwise (listed row by row); edges ``(a+j, 2a)`` cost 1.
    Scenario ``k`` sends one unit from node ``k`` to the sink. All
    capacities are 1.
    """
    a = int(a)
    if a < 1:
        raise ValueError("a must be a positive integer")
    if eps <= 0:
        raise ValueError("eps must be positive")
    edges, price = [], []
    for i in range(a):
        for j in range(a):
            edges.append((i, a + j))
            price.append(eps if i == j else 2 * eps)
    for j in range(a):
        edges.append((a + j, 2 * a))
        price.append(1.0)
    n = 2 * a + 1
    net = Network.from_edges(n, edges, np.ones(len(edges)), price)
    S = np.zeros((n, a))
    S[np.arange(a), np.arange(a)] = 1.0
    S[2 * a, :] = -1.0
    return Instance(net, ScenarioSet(S))


def _random_graph(n, m, rng):
    if m < n - 1:
        raise ValueError(f"m = {m} edges cannot connect n = {n} nodes")
    if m > n * (n - 1):
        raise ValueError(f"only {n * (n - 1)} distinct directed edges exist on {n} nodes")
    order = rng.permutation(n)
    edges = []
    present = set()
    for i in range(1, n):
        u = int(order[i])
        v = int(order[rng.integers(i)])
        e = (u, v) if rng.random() < 0.5 else (v, u)
        edges.append(e)
        present.add(e)
    extra = m - (n - 1)
    if 4 * extra > n * (n - 1):
        # dense: sample without replacement from the unused ordered pairs
        pool = [(u, v) for u in range(n) for v in range(n) if u != v and (u, v) not in present]
        pick = rng.choice(len(pool), size=extra, replace=False)
        edges.extend(pool[i] for i in sorted(pick.tolist()))
    else:
        while extra > 0:
            u, v = (int(x) for x in rng.integers(n, size=2))
            if u == v or (u, v) in present:
                continue
            present.add((u, v))
            edges.append((u, v))
            extra -= 1
    perm = rng.permutation(m)
    return [edges[i] for i in perm]


def generate_random(n, m, K, source_style="continuous", seed=0, price_style="uniform"):
    """Random connected instance; see ``generate_random_with_witness``."""
    return generate_random_with_witness(n, m, K, source_style, seed, price_style)[0]


def generate_random_with_witness(n, m, K, source_style="continuous", seed=0, price_style="uniform"):
    """Random connected instance with guaranteed-feasible scenarios.

    The graph is a random spanning tree plus ``m - n + 1`` distinct extra
    edges. Capacities are 1, prices uniform on [0, 1] (or all ones), and
    ``s_k = -A z_k`` with ``z_k`` drawn uniformly from [0, 1] (continuous)
    or from {0, 1/3, 2/3, 1} (discrete), so ``z_k`` itself routes ``s_k``.

    Returns ``(instance, Z)`` with ``Z`` the ``m x K`` witness flows.
    """
    if source_style not in SOURCE_STYLES:
        raise ValueError(f"source_style must be one of {SOURCE_STYLES}")
    if price_style not in PRICE_STYLES:
        raise ValueError(f"price_style must be one of {PRICE_STYLES}")
    n, m, K = int(n), int(m), int(K)
    if n < 1 or K < 1:
        raise ValueError("n and K must be positive")
    rng = np.random.default_rng(seed)
    edges = _random_graph(n, m, rng)
    price = rng.uniform(0.0, 1.0, m) if price_style == "uniform" else np.ones(m)
    net = Network.from_edges(n, edges, np.ones(m), price)
    if source_style == "continuous":
        Z = rng.uniform(0.0, 1.0, (m, K))
    else:
        Z = rng.integers(0, 4, (m, K)) / 3.0
    S = -(net.incidence @ Z)
    S = np.where(S == 0, 0.0, S)  # no negative zeros in files
    return Instance(net, ScenarioSet(S)), Z
