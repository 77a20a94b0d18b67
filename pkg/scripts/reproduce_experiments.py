#!/usr/bin/env python3
"""
Batch reproduction of the operator-safety experiments.

Runs verdicts, witnesses, table counts, closures and constant searches and
writes one JSON report.
Run as: python scripts/reproduce_experiments.py --output experiments.json [--full] [--brute]
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

# Add parent directory to path for imports
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from pydantic import BaseModel, Field

from config import Config
from modules.closure import ClosureSummary, CountResult, FootnoteCount, close, count_footnote_tables, count_tables
from modules.errors import AluSafeError
from modules.expr import SearchResult, search_constants
from modules.logger import log_run_stats, setup_logging
from modules.optable import builtin
from modules.safety import SafetyReport, Witness, analyze, witness

logger = logging.getLogger(__name__)

VERDICT_OPS = ("mul", "add3", "add2", "div_classical", "safe_div", "lt", "eq")
WITNESS_TARGETS = (("div_classical", 4), ("add2", 2), ("lt", 4), ("eq", 4))


class ExperimentReport(BaseModel):
    full: bool
    brute: bool
    seed: int
    verdicts: List[SafetyReport] = Field(default_factory=list)
    witnesses: List[Witness] = Field(default_factory=list)
    counts: List[CountResult] = Field(default_factory=list)
    footnote: Optional[FootnoteCount] = None
    closures: List[ClosureSummary] = Field(default_factory=list)
    searches: List[SearchResult] = Field(default_factory=list)
    errors: List[str] = Field(default_factory=list)


class ExperimentRunner:
    """Runs each experiment, recording failures instead of stopping."""

    def __init__(self, config: Config, full: bool, brute: bool) -> None:
        self.config = config
        self.full = full
        self.brute = brute
        self.report = ExperimentReport(full=full, brute=brute, seed=config.DEFAULT_SEED)
        self.stats: Dict[str, Any] = {"errors": []}

    def attempt(self, label: str, action: Callable[[], None]) -> None:
        try:
            logger.info("Running %s", label)
            action()
            self.stats[label] = "ok"
        except AluSafeError as e:
            message = f"{label}: {e}"
            logger.error(message)
            self.report.errors.append(message)
            self.stats["errors"].append(message)

    def verdicts(self) -> None:
        for width in range(2, 9):
            for name in VERDICT_OPS:
                self.report.verdicts.append(analyze(builtin(name, width), config=self.config))

    def witnesses(self) -> None:
        for name, width in WITNESS_TARGETS:
            self.report.witnesses.append(witness(builtin(name, width), config=self.config))

    def counts(self) -> None:
        cases = [
            (1, 1, ("i", "ii")), (1, 2, ("i", "ii")), (1, 3, ("i", "ii")),
            (1, 3, ("i", "ii", "iii")), (2, 1, ("i", "ii")), (2, 1, ("i", "ii", "iii")),
            (2, 2, ("i", "ii")), (2, 2, ("i", "ii", "iii")),
        ]
        for width, arity, conditions in cases:
            brute = True if self.brute else None
            self.report.counts.append(count_tables(width, arity, conditions, brute=brute, config=self.config))
        self.report.footnote = count_footnote_tables()

    def closures(self) -> None:
        mul_add3 = [builtin("mul", 3), builtin("add3", 3)]
        runs = [
            (["mul", "add3"], 1, 2, "projections"),
            (["mul", "add3"], 2, 1, "projections"),
            (["mul", "add3"], 1, 3, "projections"),
            (["mul"], 2, 2, "projections"),
        ]
        if self.full:
            runs += [(["mul", "add2"], 2, 2, seed) for seed in ("projections", "projections+zero")]
            runs.append((["mul", "add3"], 2, 2, "projections"))
        for names, width, num_vars, seed_set in runs:
            ops = [builtin(name, width) for name in names]
            summary = close(ops, width, num_vars, seed_set=seed_set, config=self.config).summary()
            self.report.closures.append(summary)
        self.report.closures.append(close(mul_add3, 3, 1, config=self.config).summary())

    def searches(self) -> None:
        runs = [
            (["mul", "add2"], 2, 1, None),
            (["div_classical", "mul", "add3"], 2, 1, 6),
            (["mul", "add3"], 2, 2, 9 if self.full else 5),
            (["mul", "add3"], 3, 1, None),
        ]
        for names, width, num_vars, max_nodes in runs:
            ops = [builtin(name, width) for name in names]
            self.report.searches.append(
                search_constants(ops, width, num_vars, max_nodes, config=self.config)
            )

    def run(self) -> ExperimentReport:
        self.attempt("verdicts", self.verdicts)
        self.attempt("witnesses", self.witnesses)
        self.attempt("counts", self.counts)
        self.attempt("closures", self.closures)
        self.attempt("searches", self.searches)

        self.stats["verdicts_run"] = len(self.report.verdicts)
        self.stats["witnesses_built"] = len(self.report.witnesses)
        self.stats["closures_run"] = len(self.report.closures)
        self.stats["constant_findings"] = sum(len(s.findings) for s in self.report.searches)
        log_run_stats(self.stats, logger)
        return self.report


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Reproduce the operator-safety experiments.")
    parser.add_argument("--output", default="experiments.json", help="JSON report path")
    parser.add_argument("--full", action="store_true", help="Include the multi-minute closures and searches")
    parser.add_argument("--brute", action="store_true", help="Brute-force every count, including 2^32 tables")
    parser.add_argument("--log-level", default="INFO")
    args = parser.parse_args(argv)

    config = Config()
    setup_logging(config, args.log_level)

    report = ExperimentRunner(config, full=args.full, brute=args.brute).run()
    Path(args.output).write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote experiment report to %s", args.output)
    return 0 if not report.errors else 1


if __name__ == '__main__':
    sys.exit(main())
