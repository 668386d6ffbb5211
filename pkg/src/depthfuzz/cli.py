"""Command-line entry point: ``run``, ``eval``, ``spec-check`` and ``spec-dump``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .campaign import CampaignConfig, CorpusError, init_campaign, run_campaign
from .codec import CodecError, SpecError, parse_spec
from .evalrunner import Experiment, ExperimentError, run_experiment
from .executor import DEFAULT_TIMEOUT_US, SubprocessHarness
from .scheduler import EnergyConfig, Schedule
from .targets import TARGET_NAMES, make_target

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_schedule_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-energy", type=int, default=1600, metavar="U",
                   help="ceiling on havoc iterations per seed pass (default 1600)")
    p.add_argument("--timeout-us", type=int, default=DEFAULT_TIMEOUT_US,
                   help="per-execution timeout in microseconds")
    p.add_argument("--target-seed", type=int, default=0,
                   help="seed for deriving the synthetic target's keys")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="depthfuzz", description="Depth-scheduled partial-input grey-box fuzzer.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="run one fuzzing campaign")
    run.add_argument("-i", "--input", dest="corpus", type=Path, help="initial corpus directory")
    run.add_argument("-o", "--output", dest="out", type=Path, help="output directory")
    run.add_argument("--spec", type=Path, help="layout spec file")
    run.add_argument("--target", choices=TARGET_NAMES, help="built-in in-process target")
    run.add_argument("--cmd", help="external command; @@ is replaced by the input file path")
    run.add_argument("--schedule", choices=[s.value for s in Schedule], default="depth")
    run.add_argument("--rng-seed", type=int, default=0)
    run.add_argument("--budget-execs", type=int)
    run.add_argument("--budget-seconds", type=float)
    run.add_argument("--logical-time", action="store_true",
                     help="time axis and seed costs in executions instead of wall clock")
    run.add_argument("-q", "--quiet", action="store_true", help="no status heartbeat")
    _add_schedule_flags(run)

    ev = sub.add_parser("eval", help="A/B compare schedules over repeated trials")
    ev.add_argument("--target", choices=TARGET_NAMES, required=True)
    ev.add_argument("--schedules", default="depth,afl",
                    help="comma-separated; the last one is the baseline")
    ev.add_argument("--trials", type=int, default=20)
    ev.add_argument("--budget-execs", type=int, default=2_000_000)
    ev.add_argument("--rng-seeds", help="comma-separated, one per trial (default 1..N)")
    ev.add_argument("--out", type=Path)
    ev.add_argument("--stop-at-bug", action="store_true",
                    help="end each trial once the target's bug is found")
    ev.add_argument("--jobs", type=int, default=1)
    _add_schedule_flags(ev)

    check = sub.add_parser("spec-check", help="validate a layout spec file")
    check.add_argument("--spec", type=Path, required=True)

    dump = sub.add_parser("spec-dump", help="print a built-in target's layout spec")
    dump.add_argument("--target", choices=TARGET_NAMES, required=True)
    dump.add_argument("--target-seed", type=int, default=0)
    dump.add_argument("--out", type=Path, help="write the spec here instead of stdout")
    dump.add_argument("--corpus", type=Path, help="also write the target's default seed files here")
    return parser


def _load_spec(path: Path):
    try:
        text = path.read_text()
    except OSError as e:
        raise SpecError(f"cannot read {path}: {e.strerror}") from None
    try:
        return parse_spec(text)
    except SpecError as e:
        raise SpecError(f"{path}: {e}") from None


def _heartbeat(stats) -> None:
    print(
        f"[depthfuzz] execs {stats.execs_total}  {stats.execs_per_sec:,.0f}/s  "
        f"paths {stats.paths_total}  max depth {stats.max_depth_global}  "
        f"crashes {stats.crashes_unique}",
        file=sys.stderr,
    )


def cmd_run(args) -> int:
    missing = [flag for flag, v in (("-i", args.corpus), ("-o", args.out), ("--spec", args.spec)) if v is None]
    if missing:
        raise UsageError(f"run requires {', '.join(missing)}")
    if (args.target is None) == (args.cmd is None):
        raise UsageError("run requires exactly one of --target or --cmd")
    if args.budget_execs is None and args.budget_seconds is None:
        raise UsageError("run requires --budget-execs or --budget-seconds")

    spec = _load_spec(args.spec)
    if args.target:
        harness = make_target(args.target, args.target_seed)
    else:
        harness = SubprocessHarness(args.cmd, spec)
    cfg = CampaignConfig(
        energy=EnergyConfig(args.max_energy, Schedule(args.schedule)),
        timeout_us=args.timeout_us,
        rng_seed=args.rng_seed,
        logical_time=args.logical_time,
        out_dir=args.out,
        on_status=None if args.quiet else _heartbeat,
    )
    try:
        camp = init_campaign(args.corpus, spec, harness, cfg)
        stats = run_campaign(camp, max_execs=args.budget_execs, max_seconds=args.budget_seconds)
    finally:
        if isinstance(harness, SubprocessHarness):
            harness.close()
    if not args.quiet:
        _heartbeat(stats)
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def cmd_eval(args) -> int:
    schedules = tuple(s.strip() for s in args.schedules.split(",") if s.strip())
    for s in schedules:
        if s not in {x.value for x in Schedule}:
            raise UsageError(f"unknown schedule {s!r}")
    seeds = _int_list(args.rng_seeds) if args.rng_seeds else None
    try:
        exp = Experiment(
            target=args.target,
            schedules=schedules,
            trials=args.trials if seeds is None else len(seeds),
            budget_execs=args.budget_execs,
            rng_seeds=seeds,
            out_dir=args.out,
            target_seed=args.target_seed,
            max_energy=args.max_energy,
            timeout_us=args.timeout_us,
            stop_at_bug=args.stop_at_bug,
            jobs=args.jobs,
        )
    except ExperimentError as e:
        raise UsageError(str(e)) from None
    summary = run_experiment(exp)
    sys.stdout.write(summary.to_table())
    return EXIT_OK


def cmd_spec_check(args) -> int:
    spec = _load_spec(args.spec)
    print(
        f"{args.spec}: ok, {spec.total_len_bytes} bytes, {len(spec.fields)} fields, "
        f"{spec.fuzz_bits} fuzzable bits"
    )
    return EXIT_OK


def cmd_spec_dump(args) -> int:
    target = make_target(args.target, args.target_seed)
    text = target.layout.to_text(comment=f"layout for target {target.name}")
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    if args.corpus:
        args.corpus.mkdir(parents=True, exist_ok=True)
        for i, data in enumerate(target.initial_corpus()):
            (args.corpus / f"seed{i:03d}").write_bytes(data)
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "eval": cmd_eval,
    "spec-check": cmd_spec_check,
    "spec-dump": cmd_spec_dump,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"depthfuzz {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SpecError, CodecError, CorpusError, ExperimentError, ValueError, OSError) as e:
        print(f"depthfuzz {args.command}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
