"""Proximal operator of a weighted maximum.

For ``u`` in R^K and ``beta >= 0`` the problem

    minimize  beta * t + 0.5 * ||x - u||^2   subject to  x_i <= t

has the solution ``x = min(t, u)`` where ``t`` solves
``sum((u - t)_+) = beta``. Sorting ``u`` in descending order, ``t`` is
``(cumsum_k - beta) / k`` for the first ``k`` whose next sorted entry does
not exceed that value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ProxMaxResult", "prox_weighted_max", "prox_weighted_max_rows", "reservation_update"]


@dataclass
class ProxMaxResult:
    x: np.ndarray
    t: float
    k: int


def prox_weighted_max(u, beta) -> ProxMaxResult:
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size == 0:
        raise ValueError("u must have at least one entry")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        t = float(u.max())
        return ProxMaxResult(u.copy(), t, int(np.count_nonzero(u == t)))
    x, t, k = prox_weighted_max_rows(u[None, :], np.array([beta], dtype=float))
    return ProxMaxResult(x[0], float(t[0]), int(k[0]))


def prox_weighted_max_rows(U, beta):
    """Row-wise prox for an ``m x K`` matrix and per-row weights ``beta``.

    Returns ``(X, t, k)``: the minimizers, the row thresholds and the number
    of entries clipped to the threshold in each row.
    """
    U = np.asarray(U, dtype=float)
    beta = np.asarray(beta, dtype=float)
    m, K = U.shape
    # stable sort on the negated rows: descending, ties by original index
    srt = -np.sort(-U, axis=1, kind="stable")
    csum = np.cumsum(srt, axis=1)
    ks = np.arange(1, K + 1)
    cand = (csum - beta[:, None]) / ks
    nxt = np.empty_like(srt)
    nxt[:, :-1] = srt[:, 1:]
    nxt[:, -1] = -np.inf
    stop = nxt <= cand
    idx = np.argmax(stop, axis=1)  # stop[:, -1] is always true
    t = cand[np.arange(m), idx]
    zero = beta == 0
    if zero.any():
        t[zero] = srt[zero, 0]
    X = np.minimum(U, t[:, None])
    return X, t, idx + 1


def reservation_update(F_new, F_tilde_old, Pi_old, p, rho, alpha):
    """Rows of the new consensus iterate.

    Row ``j`` is the prox of ``alpha f_j + (1 - alpha) ftilde_j + pi_j / rho``
    with weight ``p_j / rho``.
    """
    F_new = np.asarray(F_new, dtype=float)
    F_tilde_old = np.asarray(F_tilde_old, dtype=float)
    Pi_old = np.asarray(Pi_old, dtype=float)
    p = np.asarray(p, dtype=float)
    if F_new.shape != F_tilde_old.shape or F_new.shape != Pi_old.shape:
        raise ValueError("F, F_tilde and Pi must have the same shape")
    if F_new.ndim != 2 or p.shape != (F_new.shape[0],):
        raise ValueError("p must have one entry per row of F")
    if rho <= 0:
        raise ValueError("rho must be positive")
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    U = alpha * F_new + (1 - alpha) * F_tilde_old + Pi_old / rho
    X, _, _ = prox_weighted_max_rows(U, p / rho)
    return X
