"""
Report Formatter
Renders analysis, witness, closure, count and search results as text, CSV or JSON.
"""
import csv
import io
from typing import Sequence

from pydantic import BaseModel

from modules.closure import ClosureSummary, CountResult, FootnoteCount
from modules.errors import UsageError
from modules.expr import SearchResult
from modules.safety import ConditionResult, PatchDelta, SafetyReport, Witness

FORMATS = ("text", "json", "csv")


class ReportFormatter:
    """Formats library results for the command line. Output carries no timestamps."""

    @staticmethod
    def to_json(models: Sequence[BaseModel]) -> str:
        """One model as an object, several as a list."""
        if len(models) == 1:
            return models[0].model_dump_json(indent=2) + "\n"
        body = ",\n".join(_indent(m.model_dump_json(indent=2)) for m in models)
        return "[\n" + body + "\n]\n"

    @staticmethod
    def format_reports(reports: Sequence[SafetyReport]) -> str:
        lines = []
        for report in reports:
            lines.append(f"{report.op_name} (width {report.width}, arity {report.arity}): {report.verdict}")
            lines.append("  " + ReportFormatter._condition_line("(i)  zero -> zero", report.condition_zero))
            lines.append("  " + ReportFormatter._condition_line("(ii) odd -> odd", report.condition_odd))
        return "\n".join(lines) + "\n"

    @staticmethod
    def _condition_line(label: str, result: ConditionResult) -> str:
        coverage = result.coverage
        if result.coverage == "sampled":
            coverage = f"sampled {result.checked} tuples, seed {result.seed}"
        elif result.condition == "odd":
            coverage = f"exhaustive, {result.checked} tuples"
        if result.passed:
            return f"{label}: pass ({coverage})"
        inputs = ", ".join(str(v) for v in result.violation or [])
        return f"{label}: FAIL at ({inputs}) -> {result.output} ({coverage})"

    @staticmethod
    def format_patch(delta: PatchDelta, out_path: str) -> str:
        lines = [
            f"patched {delta.op_name} (width {delta.width}, arity {delta.arity}) -> {out_path}",
            f"changed entries: {delta.changed_count}",
        ]
        if delta.zero_forced:
            lines.append("zero point forced to 0")
        for entry in delta.changed:
            inputs = ", ".join(str(v) for v in entry.inputs)
            lines.append(f"  ({inputs}): {entry.old} -> {entry.new}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_witness(witness: Witness) -> str:
        d = witness.derivation
        lines = [
            witness.formula,
            witness.summary(),
            f"kind: {witness.kind}, case {d.case}, k0 = {d.k0}"
            + (f", k1 = {d.k1}" if d.k1 is not None else ""),
        ]
        if d.violation is not None:
            inputs = ", ".join(str(v) for v in d.violation)
            lines.append(f"violation: ({inputs}) -> {d.violation_output}, scalars {d.scalars}")
        if witness.registered_as != witness.op_name:
            lines.append(f"{witness.op_name} appears as {witness.registered_as}")
        if witness.kind == "parity_coverage_computation":
            lines.append(f"holds over {witness.verification.domain}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_closure(summary: ClosureSummary) -> str:
        lines = [
            f"closure of {{{', '.join(summary.generators + sorted(summary.derived))}}}"
            f" at width {summary.width}, {summary.num_vars} vars, seed {summary.seed}",
            f"size: {summary.size}" + ("" if summary.complete else " (incomplete)"),
            f"rounds: {summary.iterations}, tuples applied: {summary.tuples}",
            f"constant functions: {summary.constant_count}",
        ]
        for name, term in sorted(summary.derived.items()):
            lines.append(f"derived generator {name} = {term}")
        if summary.reason:
            lines.append(f"stopped: {summary.reason}")
        if summary.reference_size is not None:
            verdict = "matches" if summary.matches_reference else "differs from"
            lines.append(f"{verdict} the reference size {summary.reference_size}")
        if summary.footnote is not None:
            f = summary.footnote
            lines.append(
                f"footnote flags: i {f.i}, ii {f.ii}, iii {f.iii}, iv {f.iv}, v {f.v}, "
                f"all five {f.all_five}, all but ii {f.all_but_ii}"
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_count(result: CountResult) -> str:
        brute = result.brute if result.brute is not None else f"skipped ({result.brute_skipped})"
        lines = [
            f"tables of width {result.width}, arity {result.arity} meeting {{{', '.join(result.conditions)}}}",
            f"analytic: {result.analytic}",
            f"brute: {brute}",
        ]
        if result.agree is not None:
            lines.append("analytic and brute agree" if result.agree else "analytic and brute DISAGREE")
        if result.reference is not None:
            status = "matches" if result.matches_reference else "differs from"
            lines.append(f"{status} the reference figure {result.reference}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_footnote_count(result: FootnoteCount) -> str:
        cosets = ", ".join(f"{k}: {v}" for k, v in result.per_coset.items())
        return (
            f"2-bit tables meeting (i)-(v): {result.count} ({cosets})\n"
            f"reference figures: {result.reference_closure_size} reachable, "
            f"{result.reference_available} formable\n"
        )

    @staticmethod
    def format_search(result: SearchResult) -> str:
        bound = result.max_nodes if result.max_nodes is not None else "closure"
        lines = [
            f"search over {{{', '.join(result.operators)}}} at width {result.width}, "
            f"vars {' '.join(result.variables)}, up to {bound} nodes",
            f"distinct functions: {result.distinct_functions}, candidates: {result.candidates}",
        ]
        if not result.complete:
            lines.append(f"incomplete: {result.reason}")
        if not result.findings:
            lines.append("no constant formulas found")
        for finding in result.findings:
            lines.append(f"constant {finding.constant} ({finding.nodes} nodes): {finding.formula}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def counts_csv(results: Sequence[CountResult]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["width", "arity", "conditions", "analytic", "brute", "reference", "matches_reference"])
        for r in results:
            writer.writerow([
                r.width, r.arity, "+".join(r.conditions), r.analytic,
                "" if r.brute is None else r.brute,
                "" if r.reference is None else r.reference,
                "" if r.matches_reference is None else str(r.matches_reference).lower(),
            ])
        return buffer.getvalue()

    @staticmethod
    def closures_csv(summaries: Sequence[ClosureSummary]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["generators", "width", "vars", "seed", "size", "iterations",
                         "contains_constant", "complete"])
        for s in summaries:
            writer.writerow([
                "+".join(s.generators + sorted(s.derived)), s.width, s.num_vars, s.seed, s.size,
                s.iterations, str(s.contains_constant).lower(), str(s.complete).lower(),
            ])
        return buffer.getvalue()


def require_format(fmt: str, allowed: Sequence[str]) -> str:
    if fmt not in allowed:
        raise UsageError(f"format {fmt!r} is not available here; choose one of {', '.join(allowed)}")
    return fmt


def _indent(text: str, prefix: str = "  ") -> str:
    return "\n".join(prefix + line for line in text.splitlines())

