"""Instance, result and history files."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .admm import SolveReport
from .bounds import check_prices, feasibility_violations, lower_bound, relative_gap
from .model import Instance, check_feasibility, validate

__all__ = [
    "read_instance",
    "write_instance",
    "result_document",
    "heuristic_document",
    "write_result",
    "read_result",
    "history_csv",
    "write_history",
    "CheckReport",
    "check_result",
    "HISTORY_COLUMNS",
]

RESULT_FORMAT = "capres-result/1"
HISTORY_COLUMNS = (
    "iter", "U", "U_best", "L", "L_best", "rel_gap", "primal_res", "dual_res", "elapsed_s",
)


def _dumps(doc) -> str:
    # json writes floats with repr, the shortest string that parses back exactly
    return json.dumps(doc, indent=1, allow_nan=True) + "\n"


def read_instance(path) -> Instance:
    """Load and validate an instance file; raises ``ValueError`` on violations."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        inst = Instance.from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed instance file ({exc})") from exc
    report = validate(inst)
    if not report.ok:
        raise ValueError(f"{path}: " + "; ".join(report.violations))
    return inst


def write_instance(instance: Instance, path):
    Path(path).write_text(_dumps(instance.to_dict()))


def _float(x):
    return float(x) if x is not None else None


def result_document(instance: Instance, report: SolveReport, include_flows=False) -> dict:
    cert = report.certificate
    doc = {
        "format": RESULT_FORMAT,
        "instance_fingerprint": instance.fingerprint(),
        "termination": report.termination,
        "iterations": report.iterations,
        "objective": float(cert.U),
        "lower_bound": float(cert.L),
        "gap": float(relative_gap(cert.U, cert.L)),
        "upper_iter": cert.U_iter,
        "lower_iter": cert.L_iter,
        "reservation": report.reservation.tolist(),
        "prices": report.prices.T.tolist(),
        "charges": report.charges.tolist(),
        "heuristic": {
            "objective": float(report.heuristic.J),
            "lower_bound": float(report.heuristic.L_uniform),
        },
        "rho": float(report.rho),
        "initial_gap": float(report.initial_gap),
        "config": report.config.to_dict(),
        "timing": {k: float(v) for k, v in report.timings.items()},
    }
    if include_flows:
        doc["flows"] = report.flows.T.tolist()
    return doc


def heuristic_document(instance: Instance, heur, include_flows=False, elapsed=0.0) -> dict:
    """Result document for the per-scenario heuristic alone (no ADMM)."""
    K = instance.K
    Pi = np.repeat(instance.p[:, None] / K, K, axis=1)
    F = heur.flows
    doc = {
        "format": RESULT_FORMAT,
        "instance_fingerprint": instance.fingerprint(),
        "termination": "heuristic",
        "iterations": 0,
        "objective": float(heur.J),
        "lower_bound": float(heur.L_uniform),
        "gap": float(relative_gap(heur.J, heur.L_uniform)),
        "upper_iter": 0,
        "lower_iter": 0,
        "reservation": F.max(axis=1).tolist(),
        "prices": Pi.T.tolist(),
        "charges": (Pi * F).sum(axis=0).tolist(),
        "heuristic": {"objective": float(heur.J), "lower_bound": float(heur.L_uniform)},
        "timing": {"total_s": float(elapsed)},
    }
    if include_flows:
        doc["flows"] = F.T.tolist()
    return doc


def write_result(doc: dict, path):
    Path(path).write_text(_dumps(doc))


def read_result(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != RESULT_FORMAT:
        raise ValueError(f"{path}: not a {RESULT_FORMAT} document")
    return doc


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return repr(x) if isinstance(x, float) else str(x)


def history_csv(history) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    for rec in history:
        writer.writerow([_cell(getattr(rec, col)) for col in HISTORY_COLUMNS])
    return buf.getvalue()


def write_history(history, path):
    Path(path).write_text(history_csv(history))


@dataclass
class CheckReport:
    failures: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    recomputed_upper: float = math.nan
    recomputed_lower: float = math.nan

    @property
    def ok(self) -> bool:
        return not self.failures


def check_result(instance: Instance, doc: dict, tol=1e-6) -> CheckReport:
    """Independently re-verify a result document against its instance.

    Raises ``ValueError`` if the document belongs to a different instance.
    """
    if doc.get("instance_fingerprint") != instance.fingerprint():
        raise ValueError("fingerprint mismatch: result was produced for another instance")
    rep = CheckReport()
    fail = rep.failures
    m, K = instance.m, instance.K
    p, c = instance.p, instance.c

    r = np.asarray(doc["reservation"], dtype=float)
    Pi = np.asarray(doc["prices"], dtype=float).T
    U_doc, L_doc = float(doc["objective"]), float(doc["lower_bound"])
    if r.shape != (m,):
        fail.append(f"reservation has {r.size} entries, expected {m}")
        return rep
    if Pi.shape != (m, K):
        fail.append(f"prices must be {K} vectors of length {m}")
        return rep

    ctol = tol * max(1.0, float(np.abs(c).max(initial=0.0)))
    for j in np.flatnonzero((r < -ctol) | (r > c + ctol)):
        fail.append(f"reservation of edge {j + 1} outside [0, capacity]")

    # upper bound: the reservation must support every scenario
    U = float(p @ r)
    rep.recomputed_upper = U
    if abs(U - U_doc) > tol * (1.0 + abs(U_doc)):
        fail.append(f"objective {U_doc!r} does not match p @ reservation = {U!r}")
    if "flows" in doc:
        F = np.asarray(doc["flows"], dtype=float).T
        if F.shape != (m, K):
            fail.append(f"flows must be {K} vectors of length {m}")
        else:
            cons, box = feasibility_violations(instance, F)
            for k in np.flatnonzero(cons > tol):
                fail.append(f"flow for scenario {k + 1} violates conservation ({cons[k]:.3g})")
            for k in np.flatnonzero(box > tol):
                fail.append(f"flow for scenario {k + 1} violates capacity bounds ({box[k]:.3g})")
            over = F - r[:, None]
            for j in np.flatnonzero((over > ctol).any(axis=1)):
                k = int(np.argmax(over[j]))
                fail.append(f"edge {j + 1}: scenario {k + 1} flow exceeds the reservation")
    else:
        capped = instance.replace(network=instance.network.with_capacity(np.clip(r, 0.0, c)))
        ok = check_feasibility(capped, tol=tol)
        for k in np.flatnonzero(~ok):
            fail.append(f"reservation does not support scenario {k + 1}")

    # lower bound: prices must be valid, then the bound is recomputed
    neg, rows = check_prices(p, Pi)
    if neg > tol or rows > tol:
        if neg > tol:
            fail.append(f"condition 1: negative scenario price ({-neg:.3g})")
        if rows > tol:
            j = int(np.argmax(np.abs(Pi.sum(axis=1) - p)))
            fail.append(f"condition 1: scenario prices of edge {j + 1} do not sum to its price")
    else:
        Pi_fixed = Pi + (p - Pi.sum(axis=1))[:, None] / K
        Pi_fixed = np.maximum(Pi_fixed, 0.0)
        L = lower_bound(instance, Pi_fixed).value
        rep.recomputed_lower = L
        if L < L_doc - tol * (1.0 + abs(L_doc)):
            fail.append(f"lower bound {L_doc!r} not reproduced (recomputed {L!r})")

    if L_doc > U_doc + tol * (1.0 + abs(U_doc)):
        fail.append("lower bound exceeds objective")
    gap = relative_gap(U_doc, L_doc)
    g_doc = float(doc.get("gap", gap))
    if not (g_doc == gap or abs(g_doc - gap) <= 1e-12 * max(1.0, abs(gap))):
        fail.append(f"gap field {g_doc!r} inconsistent with the bounds ({gap!r})")
    return rep
