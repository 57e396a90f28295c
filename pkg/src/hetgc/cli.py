"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 I/O error, 3 infeasible allocation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .allocation import InfeasibleAllocation, allocate, largest_remainder_counts
from .coding import (CodingError, CodingStrategy, SCHEMES, auxiliary_residual, dump_strategy,
                     load_strategy, verify_condition1)
from .groups import find_groups
from .profiles import ConfigError, load_config
from .schemes import build_strategy
from .sim import (RANDOM, SchemeResult, StragglerModel, compare_schemes, rounds_csv, run_rounds, scheme_strategy,
                  summary_csv, worst_case_time)

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_INFEASIBLE = 0, 1, 2, 3

log = logging.getLogger("hetgc")


def _read(path: str) -> str:
    return Path(path).read_text()


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _seed(args, config) -> int:
    if args.seed is not None:
        return args.seed
    return config.seed if config.seed is not None else 0


def skeleton_text(strategy: CodingStrategy) -> str:
    """Like the support text, but group rows show their literal unit entries."""
    members = {w for g in strategy.groups for w in g}
    lines = []
    for i, row in enumerate(strategy.matrix, start=1):
        cells = []
        for x in row:
            if x == 0:
                cells.append("0")
            elif i in members:
                cells.append(f"{x:g}")
            else:
                cells.append("*")
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"


def cmd_gen_strategy(args) -> int:
    config = load_config(_read(args.config))
    strategy = build_strategy(config, args.scheme, _seed(args, config))
    for note in strategy.notes:
        print(f"note: {note}", file=sys.stderr)
    if args.out:
        _write(args.out, dump_strategy(strategy))
    print(f"support ({strategy.m}x{strategy.k}):")
    sys.stdout.write(strategy.support.to_text())
    if strategy.groups:
        print("groups: " + " ".join("{" + ",".join(f"W{w}" for w in g) + "}" for g in strategy.groups))
        print(f"B skeleton ({strategy.m}x{strategy.k}):")
        sys.stdout.write(skeleton_text(strategy))
    return EXIT_OK


def verify_report(strategy: CodingStrategy) -> list[tuple[str, bool, str]]:
    checks = []
    support = strategy.support
    replication_ok = all(n == strategy.s + 1 for n in support.column_counts())
    counts_ok = list(strategy.counts) == support.row_counts()
    checks.append(("support", replication_ok and counts_ok,
                   f"column copies {sorted(set(support.column_counts()))}, row counts match: {counts_ok}"))

    robust = verify_condition1(strategy)
    checks.append(("condition1", robust, f"robust to any {strategy.s} stragglers: {robust}"))

    residual = auxiliary_residual(strategy)
    if residual is None:
        checks.append(("residual", True, "no auxiliary matrix recorded (n/a)"))
    else:
        scale = max(1.0, float(np.max(np.abs(strategy.matrix))))
        checks.append(("residual", residual <= 1e-9 * scale, f"max |C B - 1| = {residual:.3e}"))

    if strategy.throughputs is None:
        checks.append(("optimality", False, "strategy file has no throughputs"))
    else:
        c = strategy.throughputs
        T = worst_case_time(strategy, c) if robust else math.inf
        slowest = max(strategy.compute_times())
        data_units = strategy.k * strategy.partition_size
        bound = (strategy.s + 1) * data_units / sum(c)
        expected = largest_remainder_counts(c, strategy.k * (strategy.s + 1), strategy.k)
        balanced = expected == list(strategy.counts)
        copies = strategy.k * (strategy.s + 1)
        total = sum(Fraction(ci) for ci in c)
        exact = all(copies * Fraction(ci) / total == n for ci, n in zip(c, strategy.counts))
        ok = balanced and math.isclose(T, slowest, rel_tol=1e-12)
        if ok and exact:
            ok = math.isclose(T, bound, rel_tol=1e-12)
        checks.append(("optimality", ok,
                       f"T(B) = {T!r}, lower bound (s+1)k/sum(c) = {bound!r}, "
                       f"throughput-proportional loads: {balanced}"))
    return checks


def cmd_verify(args) -> int:
    strategy = load_strategy(_read(args.strategy))
    failed = []
    for name, ok, detail in verify_report(strategy):
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if not ok:
            failed.append(name)
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def _fmt_groups(groups) -> str:
    return " ".join("{" + ",".join(f"W{w}" for w in g) + "}" for g in groups) or "(none)"


def cmd_find_groups(args) -> int:
    config = load_config(_read(args.config))
    alloc = allocate(config)
    found, kept = find_groups(alloc)
    print(f"all groups: {_fmt_groups(found)}")
    print(f"after pruning: {_fmt_groups(kept.groups)}")
    return EXIT_OK


def _parse_targets(text: str | None):
    if text is None or text == "":
        return ()
    if text == RANDOM:
        return RANDOM
    return tuple(int(t) for t in text.split(","))


def _model(args) -> StragglerModel:
    return StragglerModel(args.model, _parse_targets(args.targets), args.delay_factor,
                          seed=args.seed if args.seed is not None else 0)


def cmd_simulate(args) -> int:
    config = load_config(_read(args.config))
    seed = _seed(args, config)
    model = _model(args)
    if model.targets == RANDOM and model.count is None:
        model = StragglerModel(model.kind, RANDOM, model.delay_factor, model.seed, config.s)
    strategy = scheme_strategy(config, args.scheme, seed)
    result = SchemeResult(args.scheme, run_rounds(strategy, config, model, args.rounds), "; ".join(strategy.notes))
    _write(args.out, rounds_csv([result]))
    return EXIT_OK


def cmd_compare(args) -> int:
    config = load_config(_read(args.config))
    results = compare_schemes(config, _model(args), args.rounds, _seed(args, config))
    _write(args.out, rounds_csv(results))
    summary = summary_csv(results)
    if args.summary:
        _write(args.summary, summary)
    if args.out not in (None, "-"):
        sys.stdout.write(summary)
    return EXIT_OK


def _address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def cmd_run_master(args) -> int:
    from .decode import synthetic_partial
    from .net.master import QuorumPolicy, run_master
    if args.strategy:
        strategy = load_strategy(_read(args.strategy))
        seed = args.seed if args.seed is not None else (strategy.seed or 0)
    else:
        config = load_config(_read(args.config))
        seed = _seed(args, config)
        strategy = build_strategy(config, args.scheme, seed)
    host, port = _address(args.listen)

    def report(result):
        if result.success:
            truth = sum(synthetic_partial(seed, result.round_index, j, args.dim) for j in range(1, strategy.k + 1))
            err = float(np.linalg.norm(result.gradient - truth) / np.linalg.norm(truth))
            print(f"round {result.round_index}: decoded at {result.decode_time:.4f}s from "
                  f"{sorted(result.vector.support)}; relative error {err:.2e}", flush=True)
        else:
            print(f"round {result.round_index}: FAILED ({result.reason})", flush=True)

    policy = QuorumPolicy(round_timeout=args.timeout, connect_timeout=args.connect_timeout)
    results = run_master(strategy, host, port, args.rounds, args.dim, seed, policy, args.time_scale,
                         on_round=report,
                         on_listening=lambda p: print(f"listening on {host}:{p}", flush=True))
    if args.out:
        doc = [{"round": r.round_index, "success": r.success, "decode_time": r.decode_time,
                "arrivals": {str(w): t for w, t in r.arrivals.items()},
                "gradient": None if r.gradient is None else [float(x) for x in r.gradient],
                "reason": r.reason} for r in results]
        _write(args.out, json.dumps(doc, indent=1) + "\n")
    return EXIT_OK if all(r.success for r in results) else EXIT_INVALID


def cmd_run_worker(args) -> int:
    from .net.worker import run_worker
    host, port = _address(args.connect)
    return run_worker(host, port, args.worker_id, args.delay_factor, args.reconnect)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetgc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-strategy", help="build a coding strategy from a cluster config")
    p.add_argument("--config", required=True)
    p.add_argument("--scheme", choices=SCHEMES, default="heter_aware")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_strategy)

    p = sub.add_parser("verify", help="check a strategy file")
    p.add_argument("strategy")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("find-groups", help="list exact-cover worker groups before and after pruning")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_find_groups)

    for name, func in (("simulate", cmd_simulate), ("compare", cmd_compare)):
        p = sub.add_parser(name, help=f"{name} rounds and write CSV")
        p.add_argument("--config", required=True)
        if name == "simulate":
            p.add_argument("--scheme", choices=SCHEMES, default="heter_aware")
        p.add_argument("--model", choices=("none", "delay", "failure"), default="none")
        p.add_argument("--targets", help="comma-separated worker ids, or 'random'")
        p.add_argument("--delay-factor", type=float, default=1.0)
        p.add_argument("--rounds", type=int, default=10)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        if name == "compare":
            p.add_argument("--summary", help="write the per-scheme summary CSV here")
        p.set_defaults(func=func)

    p = sub.add_parser("run-master", help="serve coded rounds over TCP")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config")
    src.add_argument("--strategy")
    p.add_argument("--scheme", choices=SCHEMES, default="heter_aware")
    p.add_argument("--seed", type=int)
    p.add_argument("--listen", default="127.0.0.1:7070")
    p.add_argument("--rounds", type=int, default=5)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--timeout", type=float, default=30.0, help="per-round timeout in seconds")
    p.add_argument("--connect-timeout", type=float, default=30.0)
    p.add_argument("--time-scale", type=float, default=0.05, help="seconds per simulated time unit")
    p.add_argument("--out", help="write per-round results as JSON")
    p.set_defaults(func=cmd_run_master)

    p = sub.add_parser("run-worker", help="connect to a master and serve rounds")
    p.add_argument("--connect", default="127.0.0.1:7070")
    p.add_argument("--worker-id", type=int, required=True)
    p.add_argument("--delay-factor", type=float, default=1.0)
    p.add_argument("--reconnect", type=int, default=3)
    p.set_defaults(func=cmd_run_worker)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HETGC_LOG", "WARNING").upper(),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleAllocation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, CodingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
