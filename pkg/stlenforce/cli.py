"""Command-line front end: encode, build, enforce, monitor, generate and bench."""

from __future__ import annotations

import argparse
from fractions import Fraction
import json
import logging
from pathlib import Path
import sys
from typing import Sequence

from stlenforce import __version__
from stlenforce.core import config, storage
from stlenforce.core.errors import StlEnforceError
from stlenforce.core.numbers import parse_rational
from stlenforce.services import bench, export
from stlenforce.services.encoder import events_to_csv, events_to_json, sign_encode
from stlenforce.services.enforcer import enforce
from stlenforce.services.monitor import satisfies, verdict_to_csv, verdict_to_json
from stlenforce.services.scenarios import get_scenario, scenario_names
from stlenforce.services.signal import load_csv, to_csv, to_json as signal_to_json
from stlenforce.services.stl import StlFormula, parse_formula
from stlenforce.services.transducer import check_self_correction, compile_formula, to_json, transitions_to_csv


_LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATED = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def _rational_arg(raw: str) -> Fraction:
    try:
        value = parse_rational(raw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _counts_arg(raw: str) -> list[int]:
    try:
        counts = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}") from exc
    if not counts or any(c < 0 for c in counts):
        raise argparse.ArgumentTypeError("counts must be nonnegative integers")
    return counts


def _property_text(raw: str) -> str:
    """``--property`` accepts a file path or the formula itself."""
    path = Path(raw)
    try:
        if path.is_file():
            return storage.read_text(path).strip()
    except OSError:
        pass
    return raw


def _load_property(args: argparse.Namespace) -> tuple[str, StlFormula]:
    text = _property_text(args.property)
    return text, parse_formula(text)


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        storage.write_text(out, text)
        _LOGGER.info("Wrote %s", out)


def cmd_encode(args: argparse.Namespace) -> int:
    _, phi = _load_property(args)
    word = sign_encode(load_csv(args.signal), phi, lead=args.lead)
    _emit(events_to_json(word) if args.format == "json" else events_to_csv(word), args.out)
    return EXIT_OK


def cmd_build(args: argparse.Namespace) -> int:
    _, phi = _load_property(args)
    transducer = compile_formula(phi, prune=not args.unpruned)
    for problem in check_self_correction(transducer):
        _LOGGER.warning("Self-correction check: %s", problem)
    _emit(to_json(transducer) if args.format == "json" else transitions_to_csv(transducer), args.out)
    return EXIT_OK


def cmd_monitor(args: argparse.Namespace) -> int:
    _, phi = _load_property(args)
    verdict = satisfies(load_csv(args.signal), phi)
    _emit(verdict_to_json(verdict) if args.format == "json" else verdict_to_csv(verdict), args.out)
    return EXIT_OK if verdict.satisfied else EXIT_VIOLATED


def cmd_enforce(args: argparse.Namespace) -> int:
    text, phi = _load_property(args)
    signal_path = Path(args.signal)
    original = load_csv(signal_path)
    enforced, report = enforce(original, phi, args.eps)
    out_dir = Path(args.out) if args.out else config.OUTPUT_DIR
    manifest = export.write_enforcement_artifacts(
        out_dir,
        original=original,
        enforced=enforced,
        report=report,
        property_text=text,
        eps=args.eps,
        source=signal_path,
        include_plot=not args.no_plot,
    )
    if args.format == "json":
        sys.stdout.write(storage.read_text(manifest).rstrip("\n") + "\n")
    else:
        sys.stdout.write(f"{manifest}\n")
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    scenario = get_scenario(args.scenario)
    signal = scenario.generate(args.violations, args.seed)
    _emit(signal_to_json(signal) if args.format == "json" else to_csv(signal), args.out)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    records = bench.run_bench(args.scenario, args.counts, args.repetitions, args.seed, args.eps)
    if args.format == "json":
        trend = bench.fit_trend(records) if len(records) > 1 else None
        payload = {
            "scenario": args.scenario,
            "records": [vars(record) for record in records],
            "trend": vars(trend) if trend else None,
        }
        text = json.dumps(payload, indent=2)
    else:
        text = bench.records_to_csv(records)
    _emit(text, args.out)
    return EXIT_OK


_SEEDED = ("generate", "bench")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stlenforce", description="Runtime enforcement of non-nested STL properties")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable verbose logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str, fmt: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=0, help="Seed for generated signals (recorded only by other commands)")
        p.add_argument("--format", choices=("csv", "json"), default=fmt, help=f"Output format (default {fmt})")
        return p

    def common(p: argparse.ArgumentParser, signal: bool = True) -> None:
        p.add_argument("--property", required=True, help="Formula text or a file containing it")
        if signal:
            p.add_argument("--signal", required=True, type=Path, help="Signal CSV (time, var1, var2, ...)")
        p.add_argument("--out", type=Path, default=None, help="Output path")
        p.add_argument("--eps", type=_rational_arg, default=config.settings.eps, help="Strictness margin")

    p = command("encode", "Encode a signal into a timed word", "csv")
    common(p)
    p.add_argument("--lead", type=parse_rational, default=Fraction(0), help="Anticipation offset for deadlines")
    p.set_defaults(handler=cmd_encode)

    p = command("build", "Compile a property into a timed transducer", "json")
    common(p, signal=False)
    p.add_argument("--unpruned", action="store_true", help="Keep unreachable product locations")
    p.set_defaults(handler=cmd_build)

    p = command("enforce", "Enforce a property on a signal; prints the manifest path (csv) or document (json)", "csv")
    common(p)
    p.add_argument("--no-plot", action="store_true", help="Skip the paired plot-data CSV")
    p.set_defaults(handler=cmd_enforce)

    p = command("monitor", "Check a signal against a property", "json")
    common(p)
    p.set_defaults(handler=cmd_monitor)

    p = command("generate", "Write a seeded case-study signal", "csv")
    p.add_argument("--scenario", choices=scenario_names(), default="safe-stopping")
    p.add_argument("--violations", type=int, default=4)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(handler=cmd_generate)

    p = command("bench", "Time enforcement against the number of violations", "csv")
    p.add_argument("--scenario", choices=scenario_names(), default="safe-stopping")
    p.add_argument("--counts", type=_counts_arg, default=list(bench.DEFAULT_COUNTS))
    p.add_argument("--repetitions", type=int, default=None)
    p.add_argument("--eps", type=_rational_arg, default=config.settings.eps)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(handler=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    config.configure_logging(args.verbose)
    if args.command not in _SEEDED and args.seed:
        _LOGGER.debug("Command %s is deterministic; seed %d has no effect", args.command, args.seed)
    try:
        return args.handler(args)
    except storage.MissingInputError as exc:
        sys.stderr.write(f"error: {exc.user_message}\n")
        return EXIT_USAGE
    except StlEnforceError as exc:
        _LOGGER.debug("Command %s failed", args.command, exc_info=True)
        sys.stderr.write(f"error: {exc.user_message}\n")
        return EXIT_RUNTIME
