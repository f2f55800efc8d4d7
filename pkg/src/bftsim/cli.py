"""Command line front end: run scenarios, sweep seeds, re-check traces.

Exit status is machine-readable: 0 all pass, 1 usage or input trouble,
2 safety failure, 3 liveness failure, 4 accountability failure. A sweep
reports the most severe failure across its seeds, in that order.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .checkers import (
    EXIT_ACCOUNTABILITY,
    EXIT_PASS,
    EXIT_USAGE,
    Verdict,
    check_accountability,
    check_trace,
    quorum_note,
)
from .errors import BftSimError, InsufficientTraceError
from .scenario import Scenario
from .simnet import Trace, run

CHECK_NAMES = ("safety", "liveness", "accountability")
# most severe first; a sweep's exit code is the first of these any seed hit
SEVERITY = (2, 3, 4)


class _Parser(argparse.ArgumentParser):
    # the exit contract reserves 1 for usage; argparse defaults to 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="bftsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common_checks(p):
        p.add_argument(
            "--check",
            default="all",
            help="comma list of safety,liveness,accountability, or 'all'",
        )
        p.add_argument("--target-height", type=int, default=None)
        p.add_argument("--deadline-blocks", type=int, default=302)

    def common_run(p):
        p.add_argument("--scenario", required=True, type=Path)
        p.add_argument("--mode", default=None, help="override the scenario's mode")
        p.add_argument("--out-dir", type=Path, default=None)
        common_checks(p)

    p_run = sub.add_parser("run", help="execute one scenario and check it")
    common_run(p_run)
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario's seed")

    p_sweep = sub.add_parser("sweep", help="run a seed range and aggregate verdicts")
    common_run(p_sweep)
    p_sweep.add_argument(
        "--seeds", required=True, help="inclusive range 'a..b' or comma list"
    )
    p_sweep.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    p_check = sub.add_parser("check", help="re-run the oracles on saved traces")
    p_check.add_argument("--trace", required=True, type=Path, nargs="+")
    common_checks(p_check)

    p_ev = sub.add_parser("evidence", help="print accountability evidence records")
    p_ev.add_argument("--trace", required=True, type=Path)
    return parser


def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, _, hi = text.partition("..")
        first, last = int(lo), int(hi)
        if last < first:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(first, last + 1))
    return [int(s) for s in text.split(",") if s.strip()]


def _parse_checks(text: str, target_height: Optional[int]) -> tuple[str, ...]:
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    if names == ("all",):
        # liveness needs a target; 'all' quietly means 'all that can run'
        names = CHECK_NAMES if target_height is not None else ("safety", "accountability")
    unknown = set(names) - set(CHECK_NAMES)
    if unknown:
        raise ValueError(f"unknown checks: {sorted(unknown)}")
    if "liveness" in names and target_height is None:
        raise ValueError("--check liveness needs --target-height")
    return names


def _load_scenario(path: Path, mode: Optional[str], seed: Optional[int]) -> Scenario:
    doc = json.loads(path.read_text(encoding="utf-8"))
    if mode is not None:
        doc["mode"] = mode
    if seed is not None:
        doc["seed"] = seed
    return Scenario.from_dict(doc)


def _report(
    source: str, scenario: Scenario, verdict: Verdict, skipped_liveness: bool
) -> list[str]:
    lines = [
        f"{source} (mode {scenario.mode}, seed {scenario.seed})",
        f"threshold rule: {quorum_note(scenario)}",
    ]
    lines += verdict.lines()
    if skipped_liveness:
        lines.append("liveness: skipped (no --target-height)")
    return lines


def _worst(codes: Sequence[int]) -> int:
    for severe in SEVERITY:
        if severe in codes:
            return severe
    return EXIT_PASS


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------


def _cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario, args.mode, args.seed)
    checks = _parse_checks(args.check, args.target_height)
    trace = run(scenario)
    verdict = check_trace(
        trace,
        checks=checks,
        target_height=args.target_height,
        deadline_blocks=args.deadline_blocks,
    )
    report = _report(
        f"scenario: {args.scenario.name}", scenario, verdict, "liveness" not in checks
    )
    print("\n".join(report))
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        stem = f"{args.scenario.stem}-seed{scenario.seed}"
        trace.dump(args.out_dir / f"{stem}.trace.jsonl")
        (args.out_dir / f"{stem}.verdict.txt").write_text(
            "\n".join(report) + "\n", encoding="utf-8"
        )
    return verdict.exit_code


def _sweep_one(payload) -> tuple[int, tuple[str, ...], int]:
    """One seed of a sweep; module-level so worker processes can import it."""
    doc, seed, checks, target_height, deadline_blocks, out_dir = payload
    doc = dict(doc, seed=seed)
    scenario = Scenario.from_dict(doc)
    trace = run(scenario)
    verdict = check_trace(
        trace,
        checks=checks,
        target_height=target_height,
        deadline_blocks=deadline_blocks,
    )
    if out_dir is not None:
        trace.dump(Path(out_dir) / f"seed{seed}.trace.jsonl")
    cells = tuple(
        ("pass" if part.passed else "FAIL") if part is not None else "-"
        for part in (verdict.safety, verdict.liveness, verdict.accountability)
    )
    return seed, cells, verdict.exit_code


def _cmd_sweep(args) -> int:
    doc = json.loads(args.scenario.read_text(encoding="utf-8"))
    if args.mode is not None:
        doc["mode"] = args.mode
    checks = _parse_checks(args.check, args.target_height)
    seeds = _parse_seeds(args.seeds)
    scenario = Scenario.from_dict(dict(doc, seed=seeds[0]))  # validate early
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
    out_dir = str(args.out_dir) if args.out_dir is not None else None
    payloads = [
        (doc, seed, checks, args.target_height, args.deadline_blocks, out_dir)
        for seed in seeds
    ]

    if args.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_one, payloads))
    else:
        rows = [_sweep_one(p) for p in payloads]
    rows.sort()  # merge order is seed order regardless of completion order

    print(f"scenario: {args.scenario.name} (mode {scenario.mode}, {len(seeds)} seeds)")
    print(f"threshold rule: {quorum_note(scenario)}")
    print(f"{'seed':>6}  {'safety':8}  {'liveness':8}  {'accountability'}")
    for seed, cells, _ in rows:
        print(f"{seed:>6}  {cells[0]:8}  {cells[1]:8}  {cells[2]}")
    codes = [code for _, _, code in rows]
    failures = sum(1 for c in codes if c != EXIT_PASS)
    print(f"{len(rows)} runs: {len(rows) - failures} pass, {failures} fail")
    return _worst(codes)


def _cmd_check(args) -> int:
    checks = _parse_checks(args.check, args.target_height)
    codes = []
    for path in args.trace:
        trace = Trace.load(path)
        scenario = Scenario.from_dict(trace.meta()["scenario"])
        verdict = check_trace(
            trace,
            checks=checks,
            target_height=args.target_height,
            deadline_blocks=args.deadline_blocks,
        )
        print("\n".join(
            _report(f"trace: {path}", scenario, verdict, "liveness" not in checks)
        ))
        codes.append(verdict.exit_code)
    return _worst(codes)


def _cmd_evidence(args) -> int:
    trace = Trace.load(args.trace)
    scenario = Scenario.from_dict(trace.meta()["scenario"])
    report = check_accountability(trace)
    print(f"threshold rule: {quorum_note(scenario)}")
    for e in report.evidence:
        print(f"author {e['author']}  {e['rule']}  {e['detail']}")
    print(
        f"{len(report.evidence)} evidence records, flagged {sorted(report.flagged)}, "
        f"scripted {sorted(report.scripted)}"
    )
    return EXIT_PASS if report.passed else EXIT_ACCOUNTABILITY


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse help exits 0, usage errors exit 1
        return int(exc.code or 0)
    handler = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "check": _cmd_check,
        "evidence": _cmd_evidence,
    }[args.command]
    try:
        return handler(args)
    except InsufficientTraceError as exc:
        print(f"no verdict: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BftSimError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(cli_main())
