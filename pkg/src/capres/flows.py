"""Per-scenario flow solvers.

``prox_flow`` solves the regularized flow problem

    minimize    pi @ f + (rho/2) ||f - anchor||^2
    subject to  A f + s = 0,  0 <= f <= c

and ``min_cost_flow`` the plain linear one (``rho = 0``). Both return node
potentials ``y`` so callers can certify their answers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import Network
from .netsimplex import network_simplex

__all__ = [
    "FlowSolution",
    "KktCache",
    "InfeasibleScenario",
    "build_kkt_cache",
    "prox_flow",
    "min_cost_flow",
    "prox_kkt_residual",
]

DENSE_MAX_NODES = 400
PROX_TOL = 1e-8


class InfeasibleScenario(ValueError):
    """No flow satisfies conservation within the edge capacities."""

    def __init__(self, msg, scenario=None):
        super().__init__(msg)
        self.scenario = scenario


@dataclass
class FlowSolution:
    flow: np.ndarray
    objective: float
    potential: np.ndarray
    multipliers: np.ndarray
    status: str
    residual: float
    iterations: int = 0
    certified: float | None = None


def _topology_key(network: Network) -> str:
    h = hashlib.sha256()
    h.update(np.int64(network.n).tobytes())
    h.update(network.tail.tobytes())
    h.update(network.head.tobytes())
    return h.hexdigest()


class KktCache:
    """Factorized grounded Laplacian ``A A^T`` (last node's potential fixed at 0).

    Depends only on the incidence structure, so one cache serves every
    scenario and every outer iteration. Read-only after construction.
    """

    def __init__(self, network: Network):
        n = network.n
        self.key = _topology_key(network)
        self.n = n
        self.dense = n <= DENSE_MAX_NODES
        A = network.incidence
        if self.dense:
            self.A = A.toarray()
            self.AT = np.ascontiguousarray(self.A.T)
        else:
            self.A = A.tocsr()
            self.AT = A.T.tocsr()
        lap = (A @ A.T).tocsc()[:-1, :-1]
        if n == 1:
            self._solve = lambda b: np.zeros(0)
            return
        if self.dense:
            try:
                cho = la.cho_factor(lap.toarray())
            except la.LinAlgError:
                raise ValueError("incidence matrix has rank below n-1 (graph not connected)")
            self._solve = lambda b: la.cho_solve(cho, b)
        else:
            try:
                lu = spla.splu(lap)
            except RuntimeError:
                raise ValueError("incidence matrix has rank below n-1 (graph not connected)")
            if not np.all(np.abs(lu.U.diagonal()) > 1e-12):
                raise ValueError("incidence matrix has rank below n-1 (graph not connected)")
            self._solve = lu.solve

    def check(self, network: Network):
        if _topology_key(network) != self.key:
            raise ValueError("KKT cache was built for a different network")

    def laplace_solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``A A^T y = b`` with ``y[-1] = 0`` (``b`` must sum to zero)."""
        y = np.zeros(self.n)
        y[:-1] = self._solve(b[:-1])
        return y


def build_kkt_cache(network: Network) -> KktCache:
    return KktCache(network)


def _flow_scale(s, c):
    scale = max(float(np.abs(s).max(initial=0.0)), float(np.abs(c).max(initial=0.0)))
    return scale if scale > 0 else 1.0


def prox_kkt_residual(network, s, pi, anchor, rho, f, y):
    """Projected-gradient KKT residual of the regularized flow problem."""
    A = network.incidence
    grad = pi + rho * (f - anchor) + A.T @ y
    return float(np.abs(f - np.clip(f - grad / rho, 0.0, network.capacity)).max(initial=0.0))


def prox_flow(network, s, pi, anchor, rho, cache=None, tol=PROX_TOL, y0=None, max_iter=None):
    """Unique minimizer of the regularized flow problem.

    The box constraints are handled in the dual: for node potentials ``y``
    the Lagrangian minimizer is ``f(y) = clip(anchor - (pi + A^T y)/rho, 0, c)``
    and conservation ``A f(y) + s = 0`` is driven to ``tol`` (relative to the
    flow scale) by semismooth Newton steps on ``y`` with an exact line
    search along each step. The first guess
    for ``y`` ignores the box and comes from the cached Laplacian solve;
    ``y0`` overrides it (warm start).

    Returns a FlowSolution whose ``flow`` lies in the box exactly; the
    conservation residual is reported in ``residual``.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if cache is None:
        cache = KktCache(network)
    else:
        cache.check(network)
    s = np.asarray(s, dtype=float)
    pi = np.asarray(pi, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    c = network.capacity
    A, AT = cache.A, cache.AT
    n = network.n
    scale = _flow_scale(s, c)
    if max_iter is None:
        max_iter = 10 * network.m + 2000

    if y0 is None:
        w0 = anchor - pi / rho
        y = rho * cache.laplace_solve(A @ w0 + s)
    else:
        # potentials are defined up to a constant; fix the gauge
        y = np.array(y0, dtype=float)
        y -= y[-1]

    def evaluate(y):
        w = anchor - (pi + AT @ y) / rho
        f = np.clip(w, 0.0, c)
        return w, f, A @ f + s

    w, f, r = evaluate(y)
    status = "iteration_limit"
    it = 0
    eye = np.eye(n) if cache.dense else sp.identity(n, format="csr")
    for it in range(1, max_iter + 1):
        rnorm = float(np.abs(r).max(initial=0.0))
        if rnorm <= tol * scale:
            status = "optimal"
            break
        free = ((w > 0) & (w < c)).astype(float)
        delta = max(min(1e-6, rnorm / scale), 1e-12)
        if cache.dense:
            H = (A * free) @ AT + delta * eye
            d = la.solve(H, rho * r, assume_a="pos", check_finite=False)
        else:
            H = (A @ sp.diags(free) @ AT + delta * eye).tocsc()
            d = spla.spsolve(H, rho * r)
        t = _ray_maximizer(w, (AT @ d) / rho, c, rho, float(r @ d))
        if not np.isfinite(t):
            status = "stalled"
            break
        y = y + t * d
        w, f, r = evaluate(y)
    else:
        it = max_iter

    if status != "optimal":
        rnorm = float(np.abs(r).max(initial=0.0))
        if rnorm <= tol * scale:
            status = "optimal"
        else:
            _assert_feasible(network, s)

    grad = pi + rho * (f - anchor) + AT @ y
    d = f - anchor
    return FlowSolution(
        flow=f,
        objective=float(pi @ f + 0.5 * rho * (d @ d)),
        potential=y,
        multipliers=grad,
        status=status,
        residual=float(np.abs(r).max(initial=0.0)),
        iterations=it,
    )


def _ray_maximizer(w, v, c, rho, slope0):
    """Exact line search for the dual along ``y + t d``.

    With ``w(t) = w - t v`` the directional derivative is
    ``slope0 - rho * sum_j v_j * (clip(w_j, 0, c_j) - clip(w_j(t), 0, c_j))``,
    piecewise linear and nonincreasing in ``t``; its breakpoints are where
    an edge enters or leaves the open box. Returns the root (``inf`` when the
    derivative stays positive, i.e. the dual is unbounded along ``d``).
    """
    if slope0 <= 0:
        return 0.0
    nz = v != 0
    v, w, c = v[nz], w[nz], c[nz]
    a = w / v
    b = (w - c) / v
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    v2 = rho * v * v
    slope = -float(v2[(lo <= 0) & (hi > 0)].sum())
    starts, ends = lo > 0, hi > 0
    times = np.concatenate([lo[starts], hi[ends]])
    change = np.concatenate([-v2[starts], v2[ends]])
    order = np.argsort(times, kind="stable")
    times, change = times[order], change[order]
    seg_slope = slope + np.concatenate([[0.0], np.cumsum(change)])
    seg_start = np.concatenate([[0.0], times])
    vals = slope0 + np.concatenate([[0.0], np.cumsum(seg_slope[:-1] * np.diff(seg_start))])
    # vals[i] is the derivative at seg_start[i]; find the segment holding the root
    hit = np.flatnonzero(vals[1:] <= 0)
    i = int(hit[0]) if hit.size else len(times)
    if seg_slope[i] >= 0:
        return float(seg_start[i]) if vals[i] <= 0 else np.inf
    return float(seg_start[i] + vals[i] / -seg_slope[i])


def _assert_feasible(network, s, tol=1e-9):
    res = network_simplex(
        network.n, network.tail, network.head, network.capacity, np.zeros(network.m), s, tol=tol
    )
    if res.artificial_flow > tol * _flow_scale(s, network.capacity):
        raise InfeasibleScenario(
            f"scenario infeasible: {res.artificial_flow:.3g} units cannot be routed"
        )


def min_cost_flow(network, s, pi, tol=1e-9):
    """Optimal flow for ``minimize pi @ f s.t. A f + s = 0, 0 <= f <= c``.

    ``certified`` holds the dual objective of the returned potentials, a
    lower bound on the optimal value that does not rely on primal accuracy.
    ``multipliers`` are the reduced costs ``pi + A^T y``.
    """
    s = np.asarray(s, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if (pi < 0).any():
        raise ValueError("edge prices must be nonnegative")
    res = network_simplex(
        network.n, network.tail, network.head, network.capacity, pi, s, tol=tol
    )
    scale = _flow_scale(s, network.capacity)
    if res.artificial_flow > tol * scale:
        raise InfeasibleScenario(
            f"scenario infeasible: {res.artificial_flow:.3g} units cannot be routed"
        )
    f = res.flow
    y = res.potential
    r = network.incidence @ f + s
    return FlowSolution(
        flow=f,
        objective=res.primal,
        potential=y,
        multipliers=pi + y[network.head] - y[network.tail],
        status="optimal",
        residual=float(np.abs(r).max(initial=0.0)),
        iterations=res.pivots,
        certified=res.dual,
    )
