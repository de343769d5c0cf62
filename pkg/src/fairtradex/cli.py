"""Command-line entry points: run scenarios, clear books, print cost tables.

Exit codes: 0 success, 2 configuration/input error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .auction import filter_by_width, find_clearing_price, settle, verify_clearing_price, volumes_at
from .analysis import DEFAULT_SLIPPAGE, cost_table
from .scenario import InvariantViolation, Runner, ScenarioError, SUMMARY_HEADER
from .serialize import book_from_json, dumps_canonical, result_to_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _write_outputs(outdir: Path, outputs: dict, result) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    trace_path = outdir / outputs.get("trace", "trace.jsonl")
    with open(trace_path, "w") as fh:
        for rec in result.trace:
            fh.write(dumps_canonical(rec) + "\n")
    with open(outdir / outputs.get("settlements", "settlements.json"), "w") as fh:
        fh.write(dumps_canonical(result.settlements) + "\n")
    with open(outdir / outputs.get("summary", "summary.csv"), "w") as fh:
        fh.write(",".join(SUMMARY_HEADER) + "\n")
        for row in result.summary_rows:
            fh.write(",".join(_fmt_cell(v) for v in row) + "\n")


def _run_one(config: dict, outdir: str) -> int:
    runner = Runner(config)
    result = runner.run()
    _write_outputs(Path(outdir), config.get("outputs", {}), result)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if result.stalled:
        print(f"warning: stalled after {result.rounds_completed} of "
              f"{config['rounds']} rounds", file=sys.stderr)
    return EXIT_OK


def _cmd_run(args) -> int:
    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = os.environ.get("FAIRTRADEX_OUTDIR", args.outdir)
    try:
        if args.seeds:
            seeds = [int(s) for s in args.seeds.split(",")]
            jobs = []
            for s in seeds:
                cfg = dict(config, seed=s)
                jobs.append((cfg, str(Path(outdir) / f"seed-{s}")))
            if args.jobs > 1:
                with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                    futures = [pool.submit(_run_one, cfg, od) for cfg, od in jobs]
                    for f in futures:
                        f.result()
            else:
                for cfg, od in jobs:
                    _run_one(cfg, od)
            return EXIT_OK
        return _run_one(config, outdir)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT


def _cmd_clear(args) -> int:
    try:
        with open(args.book) as fh:
            book = book_from_json(json.load(fh))
    except (OSError, json.JSONDecodeError, ValueError, KeyError) as e:
        print(f"error: malformed book: {e}", file=sys.stderr)
        return EXIT_CONFIG
    filtered, removed = filter_by_width(book)
    if args.verify is not None:
        cp = args.verify
        buy_vol, sell_vol = volumes_at(filtered, cp)
        ok = verify_clearing_price(filtered, cp, min(buy_vol, sell_vol * cp),
                                   buy_vol - sell_vol * cp)
        print(f"cp={cp}: {'valid' if ok else 'invalid'}")
        return EXIT_OK
    cand = find_clearing_price(filtered)
    if cand is None:
        print("no crossable liquidity")
        return EXIT_OK
    res = settle(filtered, cand.cp)
    doc = result_to_json(res)
    doc["width_removed"] = [o.oid for o in removed]
    print(dumps_canonical(doc))
    return EXIT_OK


def _cmd_costs(args) -> int:
    impact_table = None
    if args.impact is not None:
        impact_table = {n: args.impact for n in (10_000, 500_000, 10_000_000)}
    header, rows = cost_table(impact_table=impact_table, slippage=args.slippage)
    print(",".join(header))
    for row in rows:
        print(",".join(_fmt_cell(v) for v in row))
    return EXIT_OK


def _check_report(reports: list) -> list[str]:
    problems = []
    for rep in reports:
        cp, vol = rep["cp"], rep["volume_b"]
        a_spent = a_received = b_received = b_delivered = 0
        for f in rep["fills"]:
            if f.get("width_removed"):
                if f["executed"] or f["received"] or f["refunded"] != f["size"]:
                    problems.append(f"round {rep['round']} oid {f['oid']}: bad width-removed refund")
                continue
            if f["executed"] + f["refunded"] != f["size"]:
                problems.append(f"round {rep['round']} oid {f['oid']}: executed+refunded != size")
            if f["side"] == "buy":
                if f["executed"] != f["received"] * cp:
                    problems.append(f"round {rep['round']} oid {f['oid']}: A spent != lots*cp")
                a_spent += f["executed"]
                b_received += f["received"]
            else:
                if f["received"] != f["executed"] * cp:
                    problems.append(f"round {rep['round']} oid {f['oid']}: A received != size*cp")
                b_delivered += f["executed"]
                a_received += f["received"]
        if not (a_spent == a_received == vol * cp):
            problems.append(f"round {rep['round']}: A conservation broken")
        if not (b_received == b_delivered == vol):
            problems.append(f"round {rep['round']}: B conservation broken")
    return problems


def _cmd_check(args) -> int:
    try:
        with open(args.report) as fh:
            reports = json.load(fh)
        if not isinstance(reports, list):
            raise ValueError("settlement report must be a JSON list")
        problems = _check_report(reports)
    except (OSError, json.JSONDecodeError, ValueError, KeyError) as e:
        print(f"error: malformed report: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return EXIT_INVARIANT
    print(f"ok: {len(reports)} settlement report(s) valid")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairtradex")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config", help="scenario JSON path")
    p_run.add_argument("--outdir", default="out", help="output directory")
    p_run.add_argument("--seeds", default=None,
                       help="comma-separated seeds; each runs into outdir/seed-N")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel scenario processes")
    p_run.set_defaults(func=_cmd_run)

    p_clear = sub.add_parser("clear", help="clear a book file with the oracle")
    p_clear.add_argument("--book", required=True, help="book JSON path")
    p_clear.add_argument("--verify", type=int, default=None,
                         help="verify this clearing price instead of solving")
    p_clear.set_defaults(func=_cmd_clear)

    p_costs = sub.add_parser("costs", help="print the execution-cost matrix as CSV")
    p_costs.add_argument("--impact", type=float, default=None,
                         help="flat impact fraction overriding the default table")
    p_costs.add_argument("--slippage", type=float, default=DEFAULT_SLIPPAGE,
                         help="slippage fraction for the AMM column")
    p_costs.set_defaults(func=_cmd_costs)

    p_check = sub.add_parser("check", help="re-validate a settlements.json report")
    p_check.add_argument("report", help="settlements JSON path")
    p_check.set_defaults(func=_cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
