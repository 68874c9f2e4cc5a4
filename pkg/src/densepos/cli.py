"""Command-line entry point: load a scenario, run it, write metrics and a summary."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .analysis import NeReport, ne_sweep
from .forkchoice import ForkChoiceResult, run_fork_choice
from .scenario import ScenarioConfig, ScenarioError, load_scenario
from .sim import RunMetrics, run_simulation

log = logging.getLogger("densepos")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2


class OutputError(Exception):
    pass


def _ensure_writable(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out, prefix=".probe-"):
            pass
    except OSError as exc:
        raise OutputError(f"{out}: output directory not writable ({exc.strerror})") from None


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"{path}: {exc.strerror}") from None


def _header(scenario: ScenarioConfig, seed: Optional[int], stamp: bool) -> str:
    rec = {"type": "header", "scenario": scenario.name, "kind": scenario.kind, "version": __version__}
    if seed is not None:
        rec["seed"] = seed
    if stamp:
        rec["generated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return json.dumps(rec, sort_keys=True) + "\n"


def _jsonl(records: Sequence[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def _series_csv(metrics: RunMetrics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["slot", "head_count", "canonical_height", "canonical_trust"])
    w.writerows(metrics.series)
    return buf.getvalue()


# -- checks -------------------------------------------------------------------------


def check_simulation(scenario: ScenarioConfig, runs: Sequence[RunMetrics]) -> list[str]:
    """Gated assertions for simulation runs; returns failure messages."""
    p, e = scenario.protocol, scenario.expect
    all_honest = all(a.strategy == "honest" for a in scenario.agents)
    failures = []
    for m in runs:
        tag = f"seed {m.seed}"
        heads = max(m.head_count_by_slot, default=1)
        if m.max_reorg_depth_seen > p.max_reorg_depth:
            failures.append(f"{tag}: reorg depth {m.max_reorg_depth_seen} exceeds {p.max_reorg_depth}")
        if not 0 <= m.competing_block_rate <= 1:
            failures.append(f"{tag}: competing block rate {m.competing_block_rate} outside [0, 1]")
        want_agree = e.honest_tips_agree
        if want_agree is None and all_honest and scenario.network.delta == 0:
            want_agree = True
        if want_agree and not m.honest_tips_agree:
            failures.append(f"{tag}: honest nodes disagree on the canonical tip")
        if all_honest and scenario.network.delta == 0 and m.unexplained_deep_reorgs:
            # deeper reorgs need back-to-back multi-leader slots; anything else is a bug
            failures.append(f"{tag}: {m.unexplained_deep_reorgs} honest reorgs deeper than 1 without same-slot rivals")
        if e.max_head_count is not None and heads > e.max_head_count:
            failures.append(f"{tag}: {heads} heads, expected at most {e.max_head_count}")
        if e.min_head_count is not None and heads < e.min_head_count:
            failures.append(f"{tag}: {heads} heads, expected at least {e.min_head_count}")
        dups = m.rejected_by_reason.get("DuplicateSignature", 0)
        if e.min_duplicate_rejections is not None and dups < e.min_duplicate_rejections:
            failures.append(f"{tag}: {dups} duplicate-signature rejections, expected >= {e.min_duplicate_rejections}")
        if e.all_duplicates_rejected:
            surplus = sum(m.blocks_emitted_by_pool.values()) - m.accepted_by_observer
            if surplus != dups:
                failures.append(f"{tag}: {surplus} blocks not accepted but {dups} duplicate rejections")
        if e.mean_interval_tolerance is not None:
            tol = float(Fraction(e.mean_interval_tolerance))
            mi = m.mean_block_interval
            if mi is None or abs(mi - p.t_target) > tol * p.t_target:
                failures.append(f"{tag}: mean interval {mi} not within {tol:.0%} of {p.t_target}")
    return failures


def check_fork_choice(scenario: ScenarioConfig, result: ForkChoiceResult) -> list[str]:
    fc = scenario.fork_choice
    failures = []
    want = fc.expect or scenario.expect.canonical_chain
    if want is not None and result.canonical_chain != want:
        failures.append(f"canonical chain {result.canonical_chain}, expected {want}")
    if fc.expect_after_extra is not None and result.canonical_after_extra != fc.expect_after_extra:
        failures.append(f"after extra blocks canonical is {result.canonical_after_extra}, expected {fc.expect_after_extra}")
    return failures


def check_ne(report: NeReport) -> list[str]:
    failures = []
    for p in report.points:
        if not p.gated:
            continue
        if p.contradiction:
            failures.append(f"phi_m={p.phi_m}: empirical ordering contradicts the closed form")
        elif not p.confirmed and p.analytic_order != 0:
            failures.append(f"phi_m={p.phi_m}: ordering not resolved at {report.z} standard errors")
    return failures


# -- summaries ----------------------------------------------------------------------


def simulation_table(runs: Sequence[RunMetrics]) -> str:
    pools = sorted({pid for m in runs for pid in m.blocks_by_pool})
    head = f"{'seed':>6} {'height':>7} {'tip':>14} {'heads':>6} {'reorg':>6} {'eps_cons':>9} {'interval':>9}  canonical blocks"
    rows = [head]
    for m in runs:
        interval = f"{m.mean_block_interval:.2f}" if m.mean_block_interval is not None else "-"
        blocks = " ".join(f"{pid}={m.canonical_blocks_by_pool.get(pid, 0)}" for pid in pools)
        rows.append(
            f"{m.seed:>6} {m.canonical_height:>7} {m.canonical_tip[:12]:>14} {max(m.head_count_by_slot, default=1):>6}"
            f" {m.max_reorg_depth_seen:>6} {m.competing_block_rate:>9.5f} {interval:>9}  {blocks}"
        )
    return "\n".join(rows)


def fork_choice_table(result: ForkChoiceResult) -> str:
    rows = [f"canonical chain: {result.canonical_chain}"]
    for name, trust in result.trust_by_chain.items():
        rows.append(f"  {name}: trust {trust / (1 << 64):.6f}")
    if result.canonical_after_extra is not None:
        rows.append(f"after extra blocks: {result.canonical_after_extra}")
        for name, trust in result.trust_after_extra.items():
            rows.append(f"  {name}: trust {trust / (1 << 64):.6f}")
    return "\n".join(rows)


# -- commands -----------------------------------------------------------------------


def _run_seed(args: tuple[ScenarioConfig, int, bool]) -> RunMetrics:
    scenario, seed, trace = args
    return run_simulation(scenario, seed, trace=trace)


def run(scenario: ScenarioConfig, out: Path, check: bool = False, trace: bool = False,
        stamp: bool = True, jobs: int = 1) -> tuple[int, str]:
    """Execute ``scenario`` and write its outputs; returns (exit status, summary text)."""
    _ensure_writable(out)
    failures: list[str]
    summary: dict = {"scenario": scenario.name, "kind": scenario.kind}
    if scenario.kind == "fork_choice":
        result = run_fork_choice(scenario)
        _write(out / "metrics.jsonl", _header(scenario, None, stamp) + _jsonl(result.records()))
        table = fork_choice_table(result)
        failures = check_fork_choice(scenario, result)
        summary.update(canonical_chain=result.canonical_chain, canonical_after_extra=result.canonical_after_extra)
    elif scenario.kind == "ne_sweep":
        sweep = scenario.ne_sweep
        report = ne_sweep(
            sweep.phi_m,
            seeds=scenario.run.seeds,
            slots=sweep.slots,
            t_target=scenario.protocol.t_target,
            alpha=sweep.alpha,
            retarget=scenario.protocol.retarget,
            delta=scenario.network.delta,
        )
        _write(out / "metrics.jsonl", _header(scenario, None, stamp) + _jsonl([p.as_record() for p in report.points]))
        table = report.table()
        failures = check_ne(report)
        summary["points"] = [p.as_record() for p in report.points]
    else:
        seeds = scenario.run.seeds
        work = [(scenario, s, trace) for s in seeds]
        if jobs > 1 and len(seeds) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                runs = list(pool.map(_run_seed, work))
        else:
            runs = [_run_seed(w) for w in work]
        for m in runs:
            _write(out / f"metrics-seed{m.seed}.jsonl", _header(scenario, m.seed, stamp) + m.to_jsonl())
            _write(out / f"series-seed{m.seed}.csv", _series_csv(m))
            if trace:
                _write(out / f"trace-seed{m.seed}.jsonl", _jsonl(m.trace))
        table = simulation_table(runs)
        failures = check_simulation(scenario, runs)
        summary["runs"] = [m.summary_record() for m in runs]
    summary["check_failures"] = failures
    text = table + "\n"
    if failures:
        text += "\n" + "\n".join(f"CHECK FAILED: {f}" for f in failures) + "\n"
    # the summary goes last so a partial run never leaves one behind
    _write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write(out / "summary.txt", text)
    status = EXIT_CHECK_FAILED if (check and failures) else EXIT_OK
    return status, text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="densepos", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write metrics")
    p_run.add_argument("scenario", type=Path)
    p_run.add_argument("-o", "--output", type=Path, required=True, help="output directory")
    p_run.add_argument("--seed", type=int, action="append", help="override run.seeds (repeatable)")
    p_run.add_argument("--slots", type=int, help="override run.slots")
    p_run.add_argument("--check", action="store_true", help="exit 1 if any gated assertion fails")
    p_run.add_argument("--trace", action="store_true", help="write the per-slot selection trace")
    p_run.add_argument("--quiet", action="store_true", help="do not print the summary")
    p_run.add_argument("--no-timestamp", action="store_true", help="omit the generation time from headers")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel seed runs")
    p_run.add_argument("-v", "--verbose", action="store_true")

    p_val = sub.add_parser("validate", help="parse and validate a scenario file")
    p_val.add_argument("scenario", type=Path)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        scenario = load_scenario(args.scenario)
        if args.command == "validate":
            print(f"{args.scenario}: ok ({scenario.kind}, {len(scenario.agents)} agents)")
            return EXIT_OK
        if args.seed:
            scenario.run = replace(scenario.run, seeds=list(args.seed))
        if args.slots is not None:
            scenario.run = replace(scenario.run, slots=args.slots)
        scenario.validate()
        status, text = run(
            scenario,
            args.output,
            check=args.check,
            trace=args.trace,
            stamp=not args.no_timestamp,
            jobs=max(1, args.jobs),
        )
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if not args.quiet:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
