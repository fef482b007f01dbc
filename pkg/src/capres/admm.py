"""Consensus ADMM for the scenario capacity reservation problem.

The flow matrix is duplicated into ``F`` (each column a feasible flow) and
``Ft`` (the copy that carries the reservation cost ``p @ max(Ft)``), tied by
``F == Ft`` with scaled-free dual ``Pi``. Each iteration runs

1. a flow update: ``K`` independent regularized min-cost flows,
2. a reservation update: ``m`` independent weighted-max proxes,
3. a price update of ``Pi``,

then records the upper bound from ``F`` and, every ``lb_every`` iterations,
the lower bound from ``Pi``. The loop stops once the best bounds are within
``eps_rel`` of each other.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bounds import BoundsCertificate, HeuristicResult, heuristic_policy, lower_bound, relative_gap
from .flows import KktCache, prox_flow
from .model import Instance
from .proxmax import reservation_update

__all__ = [
    "SolverConfig",
    "IterateState",
    "HistoryRecord",
    "SolveReport",
    "InvariantViolation",
    "select_rho",
    "initialize",
    "step",
    "solve",
]

log = logging.getLogger(__name__)


class InvariantViolation(AssertionError):
    pass


@dataclass
class SolverConfig:
    mu: float = 0.05
    alpha: float = 1.8
    eps_rel: float = 0.01
    lb_every: int = 10
    max_iters: int = 5000
    prox_tol: float = 1e-8
    lp_tol: float = 1e-9
    feas_rtol: float = 1e-6
    workers: int = 1
    seed: int | None = None
    check_invariants: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.eps_rel <= 0:
            raise ValueError("eps_rel must be positive")
        if self.lb_every < 1:
            raise ValueError("lb_every must be at least 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.workers < 0:
            raise ValueError("workers must be nonnegative (0 = one per CPU)")

    def resolved_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IterateState:
    F: np.ndarray
    Ft: np.ndarray
    Pi: np.ndarray
    rho: float
    l: int = 0
    primal_res: float = float("nan")
    dual_res: float = float("nan")
    # per-scenario node potentials, reused to warm-start the flow update
    Y: np.ndarray | None = None
    max_flow_residual: float = 0.0


@dataclass
class HistoryRecord:
    iter: int
    U: float
    U_best: float
    L: float | None
    L_best: float
    rel_gap: float
    primal_res: float
    dual_res: float
    elapsed_s: float
    # dual-iterate diagnostics (not written to the CSV)
    price_negativity: float = 0.0
    price_rowsum_error: float = 0.0
    tightness_error: float = 0.0


@dataclass
class SolveReport:
    reservation: np.ndarray
    flows: np.ndarray
    prices: np.ndarray
    certificate: BoundsCertificate
    history: list[HistoryRecord]
    termination: str
    iterations: int
    rho: float
    heuristic: HeuristicResult
    initial_gap: float
    config: SolverConfig
    timings: dict = field(default_factory=dict)
    final_state: IterateState | None = None

    @property
    def objective(self) -> float:
        return self.certificate.U

    @property
    def lower(self) -> float:
        return self.certificate.L

    @property
    def gap(self) -> float:
        return self.certificate.gap

    @property
    def charges(self) -> np.ndarray:
        """Per-scenario share ``Pi[:, k] @ F[:, k]`` of the reservation cost."""
        return (self.prices * self.flows).sum(axis=0)


def select_rho(instance: Instance, F_heur, mu: float) -> float:
    """Penalty ``mu * sum(p) / max_k sum(F_heur[:, k])``.

    Falls back to ``mu`` when either sum vanishes (all-zero demand or free
    edges), where the ratio is undefined.
    """
    num = float(instance.p.sum())
    den = float(np.asarray(F_heur).sum(axis=0).max(initial=0.0))
    if num <= 0 or den <= 0:
        log.warning("rho ratio undefined (sum(p)=%g, max flow sum=%g); using rho = mu", num, den)
        return float(mu)
    return mu * num / den


def initialize(instance: Instance, heur: HeuristicResult, rho: float) -> IterateState:
    """Start from the heuristic flows and uniform scenario prices ``p / K``."""
    K = instance.K
    F0 = np.array(heur.flows, dtype=float)
    Pi0 = np.repeat(instance.p[:, None] / K, K, axis=1)
    # heuristic potentials scaled by 1/K are optimal for the first flow update
    Y0 = None if heur.potentials is None else heur.potentials / K
    return IterateState(F=F0.copy(), Ft=F0, Pi=Pi0, rho=rho, l=0, Y=Y0)


def _flow_update(instance, state, cache, tol, pool):
    net, S = instance.network, instance.S
    Pi, Ft, Y, rho = state.Pi, state.Ft, state.Y, state.rho

    def solve_k(k):
        y0 = None if Y is None else Y[:, k]
        try:
            return prox_flow(net, S[:, k], Pi[:, k], Ft[:, k], rho, cache, tol, y0=y0)
        except Exception as exc:
            raise RuntimeError(f"flow update failed for scenario {k + 1}: {exc}") from exc

    ks = range(instance.K)
    sols = [solve_k(k) for k in ks] if pool is None else list(pool.map(solve_k, ks))
    F = np.column_stack([s.flow for s in sols])
    Y = np.column_stack([s.potential for s in sols])
    resid = np.array([s.residual for s in sols])
    return F, Y, resid


def step(state: IterateState, instance: Instance, config: SolverConfig, cache=None, pool=None):
    """One ADMM iteration; returns the state at ``l + 1``."""
    if cache is None:
        cache = KktCache(instance.network)
    rho, alpha = state.rho, config.alpha
    F, Y, resid = _flow_update(instance, state, cache, config.prox_tol, pool)
    Ft = reservation_update(F, state.Ft, state.Pi, instance.p, rho, alpha)
    Pi = state.Pi + rho * (alpha * F + (1 - alpha) * state.Ft - Ft)
    scale = 1.0 + np.abs(instance.S).max(axis=0)
    return IterateState(
        F=F,
        Ft=Ft,
        Pi=Pi,
        rho=rho,
        l=state.l + 1,
        primal_res=float(np.linalg.norm(F - Ft)),
        dual_res=float(rho * np.linalg.norm(Ft - state.Ft)),
        Y=Y,
        max_flow_residual=float((resid / scale).max(initial=0.0)),
    )


def dual_iterate_errors(instance: Instance, state: IterateState):
    """(negativity, row-sum error, relative tightness error) of ``(Ft, Pi)``."""
    p = instance.p
    Pi, Ft = state.Pi, state.Ft
    neg = max(0.0, -float(Pi.min(initial=0.0)))
    rows = float(np.abs(Pi.sum(axis=1) - p).max(initial=0.0))
    U_t = float(p @ Ft.max(axis=1))
    tight = abs(float((Pi * Ft).sum()) - U_t) / (1.0 + abs(U_t))
    return neg, rows, tight


def solve(instance: Instance, config: SolverConfig | None = None, heuristic=None) -> SolveReport:
    """Run ADMM until the certified relative gap drops below ``eps_rel``.

    The instance must be feasible; infeasible scenarios surface as
    ``InfeasibleScenario`` from the heuristic solve. ``heuristic`` may carry a
    precomputed ``HeuristicResult``.
    """
    config = config or SolverConfig()
    workers = config.resolved_workers()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        return _solve(instance, config, heuristic, pool)
    finally:
        if pool is not None:
            pool.shutdown()


def _solve(instance, config, heur, pool):
    t0 = time.perf_counter()
    p = instance.p
    cache = KktCache(instance.network)
    if heur is None:
        heur = heuristic_policy(instance, config.lp_tol, pool)
    t_heur = time.perf_counter() - t0
    rho = select_rho(instance, heur.flows, config.mu)
    state = initialize(instance, heur, rho)

    cert = BoundsCertificate()
    cert.offer_upper(heur.J, heur.flows, 0)
    cert.offer_lower(heur.L_certified, state.Pi, 0)
    initial_gap = cert.gap
    log.info("heuristic J=%.6g L=%.6g gap=%.3g rho=%.4g", heur.J, cert.L, initial_gap, rho)

    history = []
    termination = "iteration-limit"
    t_lb = 0.0
    for it in range(1, config.max_iters + 1):
        state = step(state, instance, config, cache, pool)
        if state.max_flow_residual <= config.feas_rtol:
            U = float(p @ state.F.max(axis=1))
            cert.offer_upper(U, state.F, it)
        else:
            U = math.nan
            log.warning("iteration %d: flow residual %.3g, upper bound skipped", it, state.max_flow_residual)
        L = None
        if it % config.lb_every == 0:
            t1 = time.perf_counter()
            L = lower_bound(instance, state.Pi, config.lp_tol, pool).value
            t_lb += time.perf_counter() - t1
            cert.offer_lower(L, state.Pi, it)
        neg, rows, tight = dual_iterate_errors(instance, state)
        if config.check_invariants:
            _assert_dual_iterate(instance, neg, rows, tight, it)
        history.append(
            HistoryRecord(
                iter=it,
                U=U,
                U_best=cert.U,
                L=L,
                L_best=cert.L,
                rel_gap=cert.gap,
                primal_res=state.primal_res,
                dual_res=state.dual_res,
                elapsed_s=time.perf_counter() - t0,
                price_negativity=neg,
                price_rowsum_error=rows,
                tightness_error=tight,
            )
        )
        if cert.U - cert.L <= config.eps_rel * cert.L:
            termination = "converged"
            break
    iterations = state.l
    log.info("%s after %d iterations: U=%.8g L=%.8g", termination, iterations, cert.U, cert.L)
    F_best = cert.U_flows
    return SolveReport(
        reservation=F_best.max(axis=1),
        flows=F_best,
        prices=cert.L_prices,
        certificate=cert,
        history=history,
        termination=termination,
        iterations=iterations,
        rho=rho,
        heuristic=heur,
        initial_gap=initial_gap,
        config=config,
        timings={
            "total_s": time.perf_counter() - t0,
            "heuristic_s": t_heur,
            "lower_bound_s": t_lb,
        },
        final_state=state,
    )


def _assert_dual_iterate(instance, neg, rows, tight, it):
    if neg > 1e-10:
        raise InvariantViolation(f"iteration {it}: negative scenario price {-neg:.3g}")
    if rows > 1e-8:
        raise InvariantViolation(f"iteration {it}: scenario prices miss p by {rows:.3g}")
    if tight > 1e-6:
        raise InvariantViolation(f"iteration {it}: price decomposition loose by {tight:.3g}")
