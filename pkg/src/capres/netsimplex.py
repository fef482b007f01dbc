"""Primal network simplex for capacitated minimum-cost flow.

Solves ``minimize cost @ f  s.t.  A f + s = 0, 0 <= f <= cap`` on real-valued
data. The starting basis is the all-artificial tree: every node is joined to
an extra root node by an artificial arc priced at a big-M value. Pivoting uses
Bland's rule (lowest eligible index enters, lowest blocking index leaves), so
termination does not depend on nondegeneracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SimplexResult", "network_simplex", "dual_value"]


@dataclass
class SimplexResult:
    flow: np.ndarray
    potential: np.ndarray
    primal: float
    dual: float
    artificial_flow: float
    pivots: int


def dual_value(tail, head, cap, cost, supply, potential):
    """Lagrangian dual bound for node potentials ``potential``.

    Valid for any potentials: with reduced cost ``rc = cost + y[head] - y[tail]``
    the value ``s @ y - sum(cap * max(0, -rc))`` never exceeds the LP optimum.
    """
    rc = cost + potential[head] - potential[tail]
    return float(supply @ potential - cap @ np.maximum(0.0, -rc))


def network_simplex(n, tail, head, cap, cost, supply, tol=1e-9, max_pivots=None):
    """Minimum-cost flow by network simplex.

    Parameters
    ----------
    n : int
        Number of nodes.
    tail, head : array of int
        Edge endpoints.
    cap, cost : array of float
        Edge capacities and nonnegative unit costs.
    supply : array of float
        Node sources ``s`` (positive = injection).
    tol : float
        Relative tolerance used for ties in the ratio test.

    Returns
    -------
    SimplexResult
        ``artificial_flow`` is the total flow left on artificial arcs; a
        positive value means the instance is infeasible.
    """
    tail = np.asarray(tail, dtype=np.int64)
    head = np.asarray(head, dtype=np.int64)
    cap = np.asarray(cap, dtype=float)
    cost = np.asarray(cost, dtype=float)
    supply = np.asarray(supply, dtype=float)
    m = tail.shape[0]
    N = n + 1
    root = n

    cmax = float(cost.max(initial=0.0))
    big_m = cmax * (max(m, n) + 1) if cmax > 0 else 1.0
    cost_eps = 1e-14 * N * big_m
    flow_scale = max(float(np.abs(supply).max(initial=0.0)), float(cap.max(initial=0.0)))
    flow_eps = tol * 1e-3 * (flow_scale if flow_scale > 0 else 1.0)

    nodes = np.arange(n)
    pos = supply >= 0
    a_tail = np.concatenate([tail, np.where(pos, nodes, root)])
    a_head = np.concatenate([head, np.where(pos, root, nodes)])
    a_cap = np.concatenate([cap, np.full(n, np.inf)])
    a_cost = np.concatenate([cost, np.full(n, big_m)])
    flow = np.concatenate([np.zeros(m), np.abs(supply)])
    # +1 at lower bound, -1 at upper bound, 0 in tree
    state = np.concatenate([np.ones(m, dtype=np.int8), np.zeros(n, dtype=np.int8)])

    # spanning tree rooted at ``root``: parent pointers, depths, potentials,
    # and per-node sets of incident tree arcs
    adj = [set() for _ in range(N)]
    for i in range(n):
        adj[i].add(m + i)
        adj[root].add(m + i)
    parent = np.full(N, -1, dtype=np.int64)
    parent_arc = np.full(N, -1, dtype=np.int64)
    parent[:n] = root
    parent_arc[:n] = np.arange(m, m + n)
    depth = np.ones(N, dtype=np.int64)
    depth[root] = 0
    pot = np.zeros(N)
    pot[:n] = np.where(pos, big_m, -big_m)

    def rehang(q, p, e):
        """Re-root the subtree containing ``q`` at ``q`` and hang it from ``p`` via ``e``."""
        stack = [(q, p, e)]
        while stack:
            v, u, arc = stack.pop()
            parent[v] = u
            parent_arc[v] = arc
            depth[v] = depth[u] + 1
            pot[v] = pot[u] - a_cost[arc] if a_tail[arc] == u else pot[u] + a_cost[arc]
            for nxt in adj[v]:
                if nxt != arc:
                    w = a_head[nxt] if a_tail[nxt] == v else a_tail[nxt]
                    stack.append((w, v, nxt))

    if max_pivots is None:
        max_pivots = 50 * (N + m + n) ** 2
    pivots = 0
    while True:
        rc = a_cost + pot[a_head] - pot[a_tail]
        eligible = ((state == 1) & (rc < -cost_eps)) | ((state == -1) & (rc > cost_eps))
        if not eligible.any():
            break
        if pivots >= max_pivots:
            raise RuntimeError("network simplex exceeded its pivot limit")
        pivots += 1
        e_in = int(np.argmax(eligible))
        if state[e_in] == 1:
            a, b, d_in = a_tail[e_in], a_head[e_in], 1
        else:
            a, b, d_in = a_head[e_in], a_tail[e_in], -1

        # cycle: e_in from a to b, then the tree path b -> lca -> a
        up_b, up_a = [], []
        u, v = b, a
        while depth[u] > depth[v]:
            e = parent_arc[u]
            up_b.append((e, 1 if a_tail[e] == u else -1))
            u = parent[u]
        while depth[v] > depth[u]:
            e = parent_arc[v]
            up_a.append((e, 1 if a_tail[e] == parent[v] else -1))
            v = parent[v]
        while u != v:
            e = parent_arc[u]
            up_b.append((e, 1 if a_tail[e] == u else -1))
            u = parent[u]
            e = parent_arc[v]
            up_a.append((e, 1 if a_tail[e] == parent[v] else -1))
            v = parent[v]
        cycle = [(e_in, d_in)] + up_b + up_a

        arcs = np.array([x[0] for x in cycle], dtype=np.int64)
        dirs = np.array([x[1] for x in cycle], dtype=float)
        resid = np.where(dirs > 0, a_cap[arcs] - flow[arcs], flow[arcs])
        delta = float(resid.min())
        if not np.isfinite(delta):
            raise RuntimeError("unbounded cycle in network simplex")
        delta = max(delta, 0.0)
        blocking = arcs[resid <= delta + flow_eps]
        e_out = int(blocking.min())
        flow[arcs] += dirs * delta
        k_out = int(np.flatnonzero(arcs == e_out)[0])
        at_upper = dirs[k_out] > 0
        # snap the blocking arc exactly onto its bound
        flow[e_out] = a_cap[e_out] if at_upper else 0.0
        if e_out == e_in:
            state[e_in] = -state[e_in]
            continue
        state[e_out] = -1 if at_upper else 1
        state[e_in] = 0
        # the endpoint of e_in below the leaving arc carries the re-hung subtree
        if k_out <= len(up_b):
            q, p = b, a
        else:
            q, p = a, b
        adj[a_tail[e_out]].discard(e_out)
        adj[a_head[e_out]].discard(e_out)
        adj[a].add(e_in)
        adj[b].add(e_in)
        rehang(q, p, e_in)

    y = pot[:n] - pot[root]
    f = np.clip(flow[:m], 0.0, cap)
    return SimplexResult(
        flow=f,
        potential=y,
        primal=float(cost @ f),
        dual=dual_value(tail, head, cap, cost, supply, y),
        artificial_flow=float(flow[m:].sum()),
        pivots=pivots,
    )
