#!/usr/bin/env python3
"""Operator safety analysis CLI: analyze, patch, witness, closure, count, search."""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Callable, List, Literal, Optional, Sequence

# Ensure project root is on the import path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from pydantic import BaseModel, Field, ValidationError

from config import Config
from modules.closure import SEED_SETS, close, count_footnote_tables, count_tables, dump_closure, verify_fixpoint
from modules.errors import AluSafeError, UsageError
from modules.expr import search_constants
from modules.logger import setup_logging
from modules.optable import MAX_WIDTH, MIN_WIDTH, Operator, resolve_operator, save_operator
from modules.report_formatter import FORMATS, ReportFormatter, require_format
from modules.safety import analyze, patch, patch_delta, witness

logger = logging.getLogger("alusafe.cli")

EXIT_OK = 0
EXIT_FINDING = 1
EXIT_USAGE = 2


class RunConfig(BaseModel):
    """Everything one CLI invocation needs, validated before any work starts."""

    subcommand: str
    width: Optional[int] = Field(default=None, ge=MIN_WIDTH, le=MAX_WIDTH)
    operators: List[str] = Field(default_factory=list)
    output: Optional[str] = None
    format: Literal["text", "json", "csv"] = "text"
    seed: int
    samples: Optional[int] = Field(default=None, ge=1)
    # patch
    out: Optional[str] = None
    name: Optional[str] = None
    # closure / search
    num_vars: int = Field(default=2, ge=1)
    seed_set: str = "projections"
    dump: Optional[str] = None
    prune: bool = True
    verify: bool = False
    max_nodes: Optional[int] = Field(default=None, ge=0)
    budget: Optional[int] = Field(default=None, ge=1)
    # count
    arity: int = Field(default=2, ge=1, le=3)
    conditions: List[str] = Field(default_factory=list)
    brute: Optional[bool] = None
    footnote: bool = False

    @classmethod
    def from_args(cls, args: argparse.Namespace, config: Config) -> "RunConfig":
        values = {
            key: value for key, value in vars(args).items()
            if key in cls.model_fields and value is not None
        }
        values["operators"] = split_list(getattr(args, "operators", None) or [])
        values["conditions"] = split_list(getattr(args, "conditions", None) or [])
        values.setdefault("seed", config.DEFAULT_SEED)
        return cls(**values)


def split_list(items: Sequence[str]) -> List[str]:
    """Flatten repeated and comma-separated flag values."""
    result = []
    for item in items:
        result.extend(part.strip() for part in item.split(",") if part.strip())
    return result


def validate_configuration(config: Config) -> bool:
    """Validate environment configuration without interactive prompts."""
    result = config.validate()
    for item in result["warnings"]:
        logger.warning(item)
    if result["errors"]:
        for item in result["errors"]:
            print(f"configuration error: {item}", file=sys.stderr)
        return False
    return True


def resolve_all(run: RunConfig) -> List[Operator]:
    return [resolve_operator(source, run.width) for source in run.operators]


def single_operator(run: RunConfig) -> Operator:
    ops = resolve_all(run)
    if len(ops) != 1:
        raise UsageError(f"{run.subcommand} takes exactly one --op, got {len(ops)}")
    return ops[0]


def require_width(run: RunConfig) -> int:
    if run.width is None:
        raise UsageError(f"{run.subcommand} needs --width")
    return run.width


def emit(text: str, run: RunConfig) -> None:
    if run.output:
        Path(run.output).write_text(text, encoding="utf-8")
        logger.info("Wrote %s output to %s", run.subcommand, run.output)
    else:
        sys.stdout.write(text)


def command_analyze(run: RunConfig, config: Config) -> int:
    require_format(run.format, ("text", "json"))
    ops = resolve_all(run)
    if not ops:
        raise UsageError("analyze needs at least one --op")
    reports = [analyze(op, config=config, samples=run.samples, seed=run.seed) for op in ops]
    if run.format == "json":
        emit(ReportFormatter.to_json(reports), run)
    else:
        emit(ReportFormatter.format_reports(reports), run)
    return EXIT_OK if all(r.safe for r in reports) else EXIT_FINDING


def command_patch(run: RunConfig, config: Config) -> int:
    require_format(run.format, ("text", "json"))
    if not run.out:
        raise UsageError("patch needs --out FILE for the patched operator")
    op = single_operator(run)
    patched = patch(op, name=run.name or f"{op.name}_safe")
    delta = patch_delta(op, patched)
    save_operator(patched, run.out)
    if run.format == "json":
        emit(ReportFormatter.to_json([delta]), run)
    else:
        emit(ReportFormatter.format_patch(delta, run.out), run)
    return EXIT_OK


def command_witness(run: RunConfig, config: Config) -> int:
    require_format(run.format, ("text", "json"))
    op = single_operator(run)
    report = analyze(op, config=config, samples=run.samples, seed=run.seed)
    if report.safe:
        if run.format == "json":
            emit(ReportFormatter.to_json([report]), run)
        else:
            emit(f"{op.name} is SAFE at width {op.width}; no constant-producing formula exists\n", run)
        return EXIT_FINDING
    result = witness(op, config=config, report=report)
    if run.format == "json":
        emit(ReportFormatter.to_json([result]), run)
    else:
        emit(ReportFormatter.format_witness(result), run)
    return EXIT_OK


def command_closure(run: RunConfig, config: Config) -> int:
    width = require_width(run)
    ops = resolve_all(run)
    result = close(
        ops, width, run.num_vars,
        seed_set=run.seed_set, config=config, max_tuples=run.budget, prune=run.prune,
    )
    summary = result.summary()
    if run.verify:
        summary.fixpoint_verified = verify_fixpoint(result, ops, config=config)
    if run.dump:
        dump_closure(result, run.dump)
    if run.format == "json":
        emit(ReportFormatter.to_json([summary]), run)
    elif run.format == "csv":
        emit(ReportFormatter.closures_csv([summary]), run)
    else:
        emit(ReportFormatter.format_closure(summary), run)
    if summary.fixpoint_verified is False:
        return EXIT_FINDING
    return EXIT_OK if result.complete else EXIT_FINDING


def command_count(run: RunConfig, config: Config) -> int:
    if run.footnote:
        require_format(run.format, ("text", "json"))
        result = count_footnote_tables()
        if run.format == "json":
            emit(ReportFormatter.to_json([result]), run)
        else:
            emit(ReportFormatter.format_footnote_count(result), run)
        return EXIT_OK

    width = require_width(run)
    counted = count_tables(width, run.arity, run.conditions, brute=run.brute, config=config)
    if run.format == "json":
        emit(ReportFormatter.to_json([counted]), run)
    elif run.format == "csv":
        emit(ReportFormatter.counts_csv([counted]), run)
    else:
        emit(ReportFormatter.format_count(counted), run)
    return EXIT_OK


def command_search(run: RunConfig, config: Config) -> int:
    require_format(run.format, ("text", "json"))
    width = require_width(run)
    result = search_constants(
        resolve_all(run), width, run.num_vars, run.max_nodes, config=config, max_candidates=run.budget,
    )
    if run.format == "json":
        emit(ReportFormatter.to_json([result]), run)
    else:
        emit(ReportFormatter.format_search(result), run)
    return EXIT_OK if result.complete else EXIT_FINDING


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alusafe",
        description="Decide, patch and attack the safety of n-bit arithmetic operators.",
    )
    parser.add_argument("--log-level", default=None, help="Console log level (default from ALUSAFE_LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    def common(sub: argparse.ArgumentParser, formats: Sequence[str] = ("text", "json")) -> None:
        sub.add_argument("--width", "-w", type=int, help="Word width in bits")
        sub.add_argument("--format", choices=list(formats), default="text", help="Output format")
        sub.add_argument("--output", "-o", metavar="FILE", help="Write the report to FILE instead of stdout")
        sub.add_argument("--seed", type=int, help="Seed for sampled modes (default from ALUSAFE_SEED)")

    analyze_parser = subparsers.add_parser("analyze", help="Check conditions (i) and (ii)")
    analyze_parser.add_argument("--op", dest="operators", action="append", metavar="OP",
                                help="Builtin name or operator file; repeatable")
    analyze_parser.add_argument("--samples", type=int, help="Sample count when the odd-tuple scan is sampled")
    common(analyze_parser)
    analyze_parser.set_defaults(func=command_analyze)

    patch_parser = subparsers.add_parser("patch", help="Write a safe variant of a dense operator")
    patch_parser.add_argument("--op", dest="operators", action="append", metavar="OP")
    patch_parser.add_argument("--out", metavar="FILE", help="Operator file to write")
    patch_parser.add_argument("--name", help="Name of the patched operator (default <op>_safe)")
    common(patch_parser)
    patch_parser.set_defaults(func=command_patch)

    witness_parser = subparsers.add_parser("witness", help="Build a constant-producing formula for an unsafe operator")
    witness_parser.add_argument("--op", dest="operators", action="append", metavar="OP")
    witness_parser.add_argument("--samples", type=int)
    common(witness_parser)
    witness_parser.set_defaults(func=command_witness)

    closure_parser = subparsers.add_parser("closure", help="Fixpoint closure of an operator set")
    closure_parser.add_argument("--ops", dest="operators", action="append", metavar="OPS",
                                help="Comma-separated builtin names or operator files")
    closure_parser.add_argument("--vars", dest="num_vars", type=int, default=2)
    closure_parser.add_argument("--seed-set", choices=list(SEED_SETS), default="projections")
    closure_parser.add_argument("--dump", metavar="FILE", help="Write member codes, one per line")
    closure_parser.add_argument("--no-prune", dest="prune", action="store_false",
                                help="Apply derived generators too")
    closure_parser.add_argument("--verify", action="store_true", help="Re-check the fixpoint afterwards")
    closure_parser.add_argument("--max-tuples", dest="budget", type=int, help="Argument-tuple budget")
    common(closure_parser, FORMATS)
    closure_parser.set_defaults(func=command_closure)

    count_parser = subparsers.add_parser("count", help="Count tables meeting conditions i, ii, iii")
    count_parser.add_argument("--conditions", action="append", metavar="LIST", help="e.g. i,ii")
    count_parser.add_argument("--arity", type=int, default=2)
    brute = count_parser.add_mutually_exclusive_group()
    brute.add_argument("--brute", dest="brute", action="store_true", default=None,
                       help="Enumerate every table, up to 2^32 of them")
    brute.add_argument("--no-brute", dest="brute", action="store_false")
    count_parser.add_argument("--footnote", action="store_true",
                              help="Count 2-bit binary tables meeting conditions (i)-(v)")
    common(count_parser, FORMATS)
    count_parser.set_defaults(func=command_count)

    search_parser = subparsers.add_parser("search", help="Search for constant formulas")
    search_parser.add_argument("--ops", dest="operators", action="append", metavar="OPS")
    search_parser.add_argument("--vars", dest="num_vars", type=int, default=2)
    search_parser.add_argument("--max-nodes", type=int, help="Operator applications (default: until closure)")
    search_parser.add_argument("--max-candidates", dest="budget", type=int, help="Candidate budget")
    common(search_parser)
    search_parser.set_defaults(func=command_search)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    config = Config()
    setup_logging(config, args.log_level)
    if not validate_configuration(config):
        return EXIT_USAGE

    try:
        run = RunConfig.from_args(args, config)
        config.DEFAULT_SEED = run.seed
        command: Callable[[RunConfig, Config], int] = args.func
        return command(run, config)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        print(f"error: {field}: {first['msg']}", file=sys.stderr)
        return EXIT_USAGE
    except AluSafeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
