"""Upper and lower bounds on the optimal reservation cost.

Any set of feasible scenario flows ``F`` gives the upper bound
``p @ max_k F[:, k]``. Any split of the reservation prices into nonnegative
scenario prices (``Pi >= 0``, ``Pi @ 1 = p``) gives a lower bound: the sum
over scenarios of the min-cost-flow value at price ``Pi[:, k]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .flows import min_cost_flow
from .model import Instance

__all__ = [
    "BoundsCertificate",
    "HeuristicResult",
    "LowerBound",
    "OptimalityReport",
    "heuristic_policy",
    "lower_bound",
    "upper_bound",
    "check_prices",
    "verify_optimality",
    "extend_policy",
    "relative_gap",
]

PRICE_TOL = 1e-9
HULL_TOL = 1e-7


def relative_gap(U, L):
    """``(U - L) / L``; zero when both bounds vanish, infinite when only ``L`` does."""
    if L > 0:
        return (U - L) / L
    return 0.0 if U <= L else float("inf")


@dataclass
class BoundsCertificate:
    U: float = float("inf")
    U_flows: np.ndarray | None = None
    U_iter: int = -1
    L: float = float("-inf")
    L_prices: np.ndarray | None = None
    L_iter: int = -1

    @property
    def gap(self) -> float:
        return relative_gap(self.U, self.L)

    def offer_upper(self, U, F, it) -> bool:
        if U < self.U:
            self.U, self.U_flows, self.U_iter = U, F, it
            return True
        return False

    def offer_lower(self, L, Pi, it) -> bool:
        if L > self.L:
            self.L, self.L_prices, self.L_iter = L, Pi, it
            return True
        return False


@dataclass
class HeuristicResult:
    flows: np.ndarray
    J: float
    L_uniform: float
    L_certified: float
    potentials: np.ndarray


def _map(fn, items, pool):
    if pool is None:
        return [fn(x) for x in items]
    return list(pool.map(fn, items))


def heuristic_policy(instance: Instance, tol=1e-9, pool=None) -> HeuristicResult:
    """Route each scenario at minimum cost under the full reservation prices.

    ``J`` is the reservation cost of the resulting policy, an upper bound on
    the optimum that is at most ``K`` times too large. ``L_uniform`` is the
    mean per-scenario routing cost, a lower bound on the optimum.
    """
    net, p, K = instance.network, instance.p, instance.K
    sols = _map(lambda k: min_cost_flow(net, instance.S[:, k], p, tol), range(K), pool)
    F = np.column_stack([s.flow for s in sols])
    costs = np.array([p @ F[:, k] for k in range(K)])
    return HeuristicResult(
        flows=F,
        J=float(p @ F.max(axis=1)),
        L_uniform=float(costs.sum() / K),
        L_certified=float(sum(s.certified for s in sols) / K),
        potentials=np.column_stack([s.potential for s in sols]),
    )


def check_prices(p, Pi, tol=PRICE_TOL):
    """Worst violation of ``Pi >= 0`` and ``Pi @ 1 == p`` (relative to ``max(1, |p|)``)."""
    Pi = np.asarray(Pi, dtype=float)
    scale = max(1.0, float(np.abs(p).max(initial=0.0)))
    neg = max(0.0, -float(Pi.min(initial=0.0))) / scale
    rows = float(np.abs(Pi.sum(axis=1) - p).max(initial=0.0)) / scale
    return neg, rows


@dataclass
class LowerBound:
    value: float
    per_scenario: np.ndarray
    flows: np.ndarray
    potentials: np.ndarray


def lower_bound(instance: Instance, Pi, tol=1e-9, pool=None) -> LowerBound:
    """Certified lower bound from scenario prices ``Pi`` (``m x K``).

    Each term is the dual objective of the network simplex potentials, so the
    bound holds even if the flows are slightly off.
    """
    Pi = np.asarray(Pi, dtype=float)
    if Pi.shape != (instance.m, instance.K):
        raise ValueError(f"Pi must be {instance.m} x {instance.K}")
    neg, rows = check_prices(instance.p, Pi)
    if neg > PRICE_TOL or rows > PRICE_TOL:
        raise ValueError(
            f"invalid scenario prices: negativity {neg:.3g}, row-sum error {rows:.3g}"
        )
    net = instance.network
    Pi = np.maximum(Pi, 0.0)
    sols = _map(lambda k: min_cost_flow(net, instance.S[:, k], Pi[:, k], tol), range(instance.K), pool)
    vals = np.array([s.certified for s in sols])
    return LowerBound(
        value=float(sum(vals.tolist())),
        per_scenario=vals,
        flows=np.column_stack([s.flow for s in sols]),
        potentials=np.column_stack([s.potential for s in sols]),
    )


def feasibility_violations(instance: Instance, F, rtol=1e-6):
    """Per-scenario (conservation residual, box violation), each scaled by ``1 + |s|``."""
    F = np.asarray(F, dtype=float)
    A = instance.network.incidence
    R = A @ F + instance.S
    scale = 1.0 + np.abs(instance.S).max(axis=0)
    cons = np.abs(R).max(axis=0) / scale
    c = instance.c[:, None]
    box = np.maximum(np.maximum(-F, F - c), 0.0).max(axis=0) / scale
    return cons, box


def upper_bound(instance: Instance, F, rtol=1e-6):
    """Reservation cost ``p @ max(F)`` and the reservation itself.

    Raises ``ValueError`` naming the first scenario whose flow violates
    conservation or the capacity box by more than ``rtol * (1 + |s|)``.
    """
    F = np.asarray(F, dtype=float)
    if F.shape != (instance.m, instance.K):
        raise ValueError(f"F must be {instance.m} x {instance.K}")
    cons, box = feasibility_violations(instance, F)
    bad = np.flatnonzero((cons > rtol) | (box > rtol))
    if bad.size:
        k = int(bad[0])
        raise ValueError(
            f"flow for scenario {k + 1} is infeasible "
            f"(conservation {cons[k]:.3g}, bounds {box[k]:.3g})"
        )
    r = F.max(axis=1)
    return float(instance.p @ r), r


@dataclass
class OptimalityReport:
    """Outcome of the optimality checks; each ``*_violation`` is a worst case."""

    prices_ok: bool
    prices_violation: float
    tightness_ok: bool
    tightness_violation: float
    flows_optimal_ok: bool
    flows_optimal_violation: float
    complementarity_ok: bool
    complementarity_violation: float
    feasible_ok: bool
    feasible_violation: float
    details: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            self.prices_ok
            and self.tightness_ok
            and self.flows_optimal_ok
            and self.complementarity_ok
            and self.feasible_ok
        )


def verify_optimality(instance: Instance, F, Pi, tol=1e-6) -> OptimalityReport:
    """Check that flows ``F`` and scenario prices ``Pi`` certify each other.

    Condition 1: ``Pi`` are valid scenario prices. Condition 2: the price
    decomposition is tight, ``p @ max(F) == sum(Pi * F)``. Condition 3:
    each column of ``F`` is a min-cost flow for its price column. The
    complementarity gap ``Pi * (r - F)`` and the feasibility of ``F`` are
    reported alongside. All conditions are evaluated independently.
    """
    F = np.asarray(F, dtype=float)
    Pi = np.asarray(Pi, dtype=float)
    p = instance.p
    details = []

    neg, rows = check_prices(p, Pi)
    c1 = max(neg, rows)
    if neg > tol:
        details.append(f"negative scenario price (worst {neg:.3g})")
    if rows > tol:
        j = int(np.argmax(np.abs(Pi.sum(axis=1) - p)))
        details.append(f"scenario prices of edge {j + 1} do not sum to its price")

    cons, box = feasibility_violations(instance, F)
    feas = float(max(cons.max(initial=0.0), box.max(initial=0.0)))
    if feas > tol:
        details.append(f"flow for scenario {int(np.argmax(np.maximum(cons, box))) + 1} infeasible")

    r = F.max(axis=1)
    U = float(p @ r)
    charges = (Pi * F).sum()
    c2 = abs(U - charges) / (1.0 + abs(U))
    if c2 > tol:
        details.append(f"price decomposition not tight: {U!r} vs {charges!r}")

    pscale = max(1.0, float(np.abs(p).max(initial=0.0)))
    fscale = max(1.0, float(np.abs(F).max(initial=0.0)))
    slack = np.maximum(Pi, 0.0) * (r[:, None] - F)
    c4 = float(slack.max(initial=0.0)) / (pscale * fscale)
    if c4 > tol:
        j, k = np.unravel_index(np.argmax(slack), slack.shape)
        details.append(f"complementarity fails at edge {j + 1}, scenario {k + 1}")

    c3 = 0.0
    if feas <= tol:
        net = instance.network
        Pic = np.maximum(Pi, 0.0)
        for k in range(instance.K):
            sol = min_cost_flow(net, instance.S[:, k], Pic[:, k])
            cost = float(Pic[:, k] @ F[:, k])
            viol = (cost - sol.certified) / (1.0 + abs(cost))
            c3 = max(c3, viol)
        if c3 > tol:
            details.append(f"some scenario flow is not min-cost for its prices ({c3:.3g})")
    else:
        c3 = float("inf")

    return OptimalityReport(
        prices_ok=c1 <= tol,
        prices_violation=c1,
        tightness_ok=c2 <= tol,
        tightness_violation=c2,
        flows_optimal_ok=c3 <= tol,
        flows_optimal_violation=c3,
        complementarity_ok=c4 <= tol,
        complementarity_violation=c4,
        feasible_ok=feas <= tol,
        feasible_violation=feas,
        details=details,
    )


def barycentric_weights(S, s, tol=HULL_TOL, max_rounds=200):
    """Least-norm ``theta >= 0`` with ``sum(theta) == 1`` and ``S @ theta == s``.

    Method of multipliers on the equality constraints: each round solves the
    nonnegative least-squares problem ``min |theta|^2 + w^2 |E theta - t|^2``
    and moves the target ``t`` by the constraint residual. A fixed point
    satisfies the KKT conditions of the least-norm problem exactly.
    """
    S = np.asarray(S, dtype=float)
    s = np.asarray(s, dtype=float)
    n, K = S.shape
    E = np.vstack([S, np.ones((1, K))])
    b = np.append(s, 1.0)
    w = 1e3 / max(1.0, float(np.abs(E).max()))
    M = np.vstack([w * E, np.eye(K)])
    rhs = np.zeros(n + 1 + K)
    target = b.copy()
    limit = 1e-3 * tol * (1.0 + float(np.abs(s).max(initial=0.0)))
    for _ in range(max_rounds):
        rhs[: n + 1] = w * target
        theta, _ = nnls(M, rhs, maxiter=50 * K + 100)
        r = b - E @ theta
        if float(np.abs(r).max()) <= limit:
            break
        target += r
    err = float(np.abs(S @ theta - s).max(initial=0.0))
    if err > tol * (1.0 + float(np.abs(s).max(initial=0.0))) or theta.sum() <= 0:
        raise ValueError(
            f"query source lies outside the convex hull of the scenarios (residual {err:.3g})"
        )
    return theta / theta.sum()


def extend_policy(instance: Instance, F, s):
    """Flow for a source inside the scenarios' convex hull.

    Returns ``(f, theta)`` with ``f = F @ theta``; ``f`` is feasible for ``s``
    and never exceeds the reservation ``max(F)``.
    """
    theta = barycentric_weights(instance.S, s)
    return np.asarray(F, dtype=float) @ theta, theta
