"""Command line front end: ``capres generate | solve | check``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import io
from .admm import SolverConfig, solve
from .bounds import heuristic_policy
from .generators import generate_layered, generate_random
from .model import InfeasibleInstance, checked

EXIT_OK, EXIT_ERROR, EXIT_ITERATION_LIMIT = 0, 1, 2


def _parser():
    ap = argparse.ArgumentParser(prog="capres", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a generated instance file")
    g.add_argument("kind", choices=["layered", "random-continuous", "random-discrete"])
    g.add_argument("--a", type=int, default=3, help="layer width (layered)")
    g.add_argument("--eps", type=float, default=0.01, help="edge price unit (layered)")
    g.add_argument("--n", type=int, default=5)
    g.add_argument("--m", type=int, default=10)
    g.add_argument("--k", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument(
        "--price-style",
        choices=["uniform", "ones"],
        help="edge prices (default: ones for random-discrete, uniform otherwise)",
    )
    g.add_argument("-o", "--output", required=True)

    s = sub.add_parser("solve", help="solve an instance file")
    s.add_argument("instance")
    s.add_argument("-o", "--output", help="result JSON (default: <instance>.result.json)")
    s.add_argument("--mu", type=float, default=0.05)
    s.add_argument("--alpha", type=float, default=1.8)
    s.add_argument("--eps-rel", type=float, default=0.01)
    s.add_argument("--max-iters", type=int, default=5000)
    s.add_argument("--lb-every", type=int, default=10)
    s.add_argument("--workers", type=int, default=0, help="0 = one per CPU")
    s.add_argument("--heuristic-only", action="store_true")
    s.add_argument("--history", help="write the per-iteration CSV here")
    s.add_argument("--flows", action="store_true", help="include the flow matrix in the result")

    c = sub.add_parser("check", help="re-verify a result against its instance")
    c.add_argument("instance")
    c.add_argument("result")
    c.add_argument("--tol", type=float, default=1e-6)
    return ap


def cmd_generate(args) -> int:
    if args.kind == "layered":
        inst = generate_layered(args.a, args.eps)
    else:
        style = args.kind.split("-", 1)[1]
        price = args.price_style or ("ones" if style == "discrete" else "uniform")
        inst = generate_random(args.n, args.m, args.k, style, args.seed, price)
    io.write_instance(inst, args.output)
    print(f"n={inst.n} m={inst.m} K={inst.K} -> {args.output}")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = io.read_instance(args.instance)
    try:
        inst = checked(inst)
    except InfeasibleInstance as exc:
        for k in exc.scenarios:
            print(f"scenario {k + 1}: infeasible", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = args.output or str(Path(args.instance).with_suffix("")) + ".result.json"
    config = SolverConfig(
        mu=args.mu,
        alpha=args.alpha,
        eps_rel=args.eps_rel,
        lb_every=args.lb_every,
        max_iters=args.max_iters,
        workers=args.workers,
    )
    if args.heuristic_only:
        t0 = time.perf_counter()
        heur = heuristic_policy(inst)
        doc = io.heuristic_document(inst, heur, args.flows, time.perf_counter() - t0)
        io.write_result(doc, out)
        print(f"heuristic J={heur.J!r} L_uniform={heur.L_uniform!r} -> {out}")
        return EXIT_OK
    report = solve(inst, config)
    io.write_result(io.result_document(inst, report, args.flows), out)
    if args.history:
        io.write_history(report.history, args.history)
    print(
        f"{report.termination} after {report.iterations} iterations: "
        f"U={report.objective!r} L={report.lower!r} gap={report.gap:.3g} -> {out}"
    )
    return EXIT_OK if report.termination == "converged" else EXIT_ITERATION_LIMIT


def cmd_check(args) -> int:
    inst = io.read_instance(args.instance)
    doc = io.read_result(args.result)
    rep = io.check_result(inst, doc, args.tol)
    for line in rep.failures:
        print(f"FAIL {line}")
    print("PASS" if rep.ok else "FAIL")
    return EXIT_OK if rep.ok else EXIT_ERROR


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {"generate": cmd_generate, "solve": cmd_solve, "check": cmd_check}[args.command]
    try:
        return handler(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
