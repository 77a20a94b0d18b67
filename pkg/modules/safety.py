"""
Safety analysis, patching and attack witnesses for n-bit operators.

An operator is safe when the all-zero tuple maps to 0 (condition i) and every
all-odd tuple maps to an odd value (condition ii). Unsafe operators get a
witness: a formula over the operator plus mul and add3 that evaluates to a
known constant whatever the unknown inputs are.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from config import Config
from modules.errors import AluSafeError, DomainError, UsageError
from modules.expr import Apply, Formula, Node, Var, evaluate, parse_formula, print_formula
from modules.function_space import FunctionSpace, threaded_map
from modules.logger import LoggingMixin, PerformanceLogger
from modules.optable import Operator, builtin, odd_inverse, scalar_mul_formula, width_mask

logger = logging.getLogger(__name__)

Coverage = Literal["exhaustive", "sampled"]

# plain add3 chains up to this many nodes; larger scalars use the shared form
LINEAR_SCALAR_MAX_NODES = 127

RESERVED_NAMES = ("mul", "add3", "let")


# -- reports -----------------------------------------------------------------

class ConditionResult(BaseModel):
    condition: Literal["zero", "odd"]
    passed: bool
    violation: Optional[List[int]] = None
    output: Optional[int] = None
    coverage: Coverage = "exhaustive"
    checked: int = 1
    seed: Optional[int] = None


class SafetyReport(BaseModel):
    op_name: str
    width: int
    arity: int
    k0: int
    condition_zero: ConditionResult
    condition_odd: ConditionResult
    verdict: Literal["SAFE", "UNSAFE"]

    @property
    def safe(self) -> bool:
        return self.verdict == "SAFE"

    @property
    def sampled(self) -> bool:
        return self.condition_odd.coverage == "sampled"


def _odd_tuples(start: int, stop: int, width: int, arity: int) -> List[np.ndarray]:
    """All-odd tuples number start..stop-1, first argument most significant."""
    index = np.arange(start, stop, dtype=np.uint64)
    bits = width - 1
    digit_mask = np.uint64((1 << bits) - 1)
    return [
        ((index >> np.uint64(bits * (arity - 1 - position))) & digit_mask) * np.uint64(2) + np.uint64(1)
        for position in range(arity)
    ]


def _least_violation(op: Operator, args: List[np.ndarray]) -> Optional[Tuple[List[int], int]]:
    outputs = op.apply(*args)
    bad = np.nonzero((outputs & np.uint64(1)) == 0)[0]
    if bad.size == 0:
        return None
    # lexsort takes its primary key last
    order = np.lexsort(tuple(args[p][bad] for p in reversed(range(len(args)))))
    first = bad[order[0]]
    return [int(a[first]) for a in args], int(outputs[first])


def analyze(
    op: Operator,
    *,
    config: Optional[Config] = None,
    samples: Optional[int] = None,
    seed: Optional[int] = None,
) -> SafetyReport:
    """
    Check conditions (i) and (ii).

    Condition (ii) scans all 2^((w-1)*arity) all-odd tuples while that exponent
    stays within ALUSAFE_EXHAUSTIVE_ODD_BITS, and otherwise checks seeded random
    all-odd tuples. The reported violation is the lexicographically least one
    among the tuples checked.
    """
    config = config or Config()
    width, arity = op.width, op.arity

    k0 = op.eval((0,) * arity)
    zero = ConditionResult(
        condition="zero",
        passed=k0 == 0,
        violation=None if k0 == 0 else [0] * arity,
        output=None if k0 == 0 else k0,
    )

    bits = (width - 1) * arity
    if bits <= config.EXHAUSTIVE_ODD_BITS:
        total = 1 << bits
        step = max(1, config.CHUNK_ELEMENTS // arity)

        def scan(start: int) -> Optional[Tuple[List[int], int]]:
            return _least_violation(op, _odd_tuples(start, min(start + step, total), width, arity))

        found = None
        for hit in threaded_map(scan, range(0, total, step), config.thread_count()):
            if hit is not None:
                found = hit
                break
        odd = ConditionResult(
            condition="odd",
            passed=found is None,
            violation=found[0] if found else None,
            output=found[1] if found else None,
            coverage="exhaustive",
            checked=total,
        )
    else:
        count = samples or config.SAMPLE_COUNT
        used_seed = config.DEFAULT_SEED if seed is None else seed
        rng = np.random.default_rng(used_seed)
        args = [
            rng.integers(0, 1 << (width - 1), size=count, dtype=np.uint64) * np.uint64(2) + np.uint64(1)
            for _ in range(arity)
        ]
        found = _least_violation(op, args)
        odd = ConditionResult(
            condition="odd",
            passed=found is None,
            violation=found[0] if found else None,
            output=found[1] if found else None,
            coverage="sampled",
            checked=count,
            seed=used_seed,
        )
        logger.info("Condition (ii) for %s sampled: %d tuples, seed %d", op.describe(), count, used_seed)

    report = SafetyReport(
        op_name=op.name,
        width=width,
        arity=arity,
        k0=k0,
        condition_zero=zero,
        condition_odd=odd,
        verdict="SAFE" if zero.passed and odd.passed else "UNSAFE",
    )
    logger.debug("Analyzed %s: %s", op.describe(), report.verdict)
    return report


# -- patching ----------------------------------------------------------------

def _all_odd_mask(width: int, arity: int) -> np.ndarray:
    """Table positions whose input tuple is all odd."""
    index = np.arange(1 << (width * arity), dtype=np.uint64)
    low_bits = sum(1 << (width * position) for position in range(arity))
    return (index & np.uint64(low_bits)) == np.uint64(low_bits)


def patch(op: Operator, name: Optional[str] = None) -> Operator:
    """Force f(0,...,0) = 0 and add 1 (mod 2^w) at every all-odd tuple with an even output."""
    table = op.dense_table().copy()
    table[0] = 0
    bump = _all_odd_mask(op.width, op.arity) & ((table & np.uint64(1)) == 0)
    table[bump] = (table[bump] + np.uint64(1)) & np.uint64(op.mask)
    return Operator.from_table(name or op.name, op.width, op.arity, table)


class ChangedEntry(BaseModel):
    inputs: List[int]
    old: int
    new: int


class PatchDelta(BaseModel):
    op_name: str
    width: int
    arity: int
    changed_count: int
    zero_forced: bool
    max_distance: int
    changed: List[ChangedEntry]


def patch_delta(op: Operator, patched: Optional[Operator] = None) -> PatchDelta:
    """Entries that patch() changes; outside the zero point each moves by exactly 1."""
    patched = patched or patch(op)
    old, new = op.dense_table(), patched.dense_table()
    positions = np.nonzero(old != new)[0]
    changed = [
        ChangedEntry(inputs=list(op.tuple_of(int(p))), old=int(old[p]), new=int(new[p]))
        for p in positions
    ]
    distances = [abs(entry.new - entry.old) for entry in changed if any(entry.inputs)]
    return PatchDelta(
        op_name=op.name,
        width=op.width,
        arity=op.arity,
        changed_count=len(changed),
        zero_forced=bool(old[0] != 0),
        max_distance=max(distances, default=0),
        changed=changed,
    )


def patchwork(test: Operator, g: Operator, h: Operator, name: Optional[str] = None) -> Operator:
    """Pointwise (test != 0) ? g : h; safe whenever g and h are."""
    shapes = {(op.width, op.arity) for op in (test, g, h)}
    if len(shapes) != 1:
        raise UsageError(
            "patchwork needs operators of one width and arity, got "
            + ", ".join(f"{op.name}@w{op.width}/{op.arity}" for op in (test, g, h))
        )
    table = np.where(test.dense_table() != 0, g.dense_table(), h.dense_table())
    return Operator.from_table(name or f"patchwork_{test.name}", g.width, g.arity, table)


# -- witnesses ---------------------------------------------------------------

class Derivation(BaseModel):
    case: str
    k0: int
    k1: Optional[int] = None
    violation: Optional[List[int]] = None
    violation_output: Optional[int] = None
    scalars: Optional[List[int]] = None


class Verification(BaseModel):
    mode: Coverage
    domain: str
    checked: int
    total: int
    constant_held: bool
    seed: Optional[int] = None


class Witness(BaseModel):
    kind: Literal["constant_formula", "parity_coverage_computation"]
    op_name: str
    registered_as: str
    width: int
    formula: str
    variables: List[str]
    claimed_constant: int
    derivation: Derivation
    verification: Verification

    def summary(self) -> str:
        v = self.verification
        return f"constant {self.claimed_constant}, {v.mode} ({v.checked}/{v.total})"


def registered_name(op: Operator) -> str:
    """Name the target goes by inside witness formulas."""
    if op.name in RESERVED_NAMES:
        if op.name != "let" and op.same_as(builtin(op.name, op.width)):
            return op.name
        return "f"
    return op.name


def witness_operators(op: Operator, name: Optional[str] = None) -> Dict[str, Operator]:
    name = name or registered_name(op)
    ops = {"mul": builtin("mul", op.width), "add3": builtin("add3", op.width)}
    ops[name] = op.renamed(name)
    return ops


class WitnessBuilder(LoggingMixin):
    """Builds and verifies the constant-producing constructions for one unsafe operator."""

    def __init__(self, op: Operator, config: Optional[Config] = None) -> None:
        self.op = op
        self.config = config or Config()
        self.width = op.width
        self.name = registered_name(op)
        self.ops = witness_operators(op, self.name)

    def collapse(self, node: Node) -> Node:
        """g: w successive squarings, 1 on odd values and 0 on even ones."""
        for _ in range(self.width):
            node = Apply("mul", (node, node))
        return node

    def h(self, var: Node) -> Node:
        gx = self.collapse(var)
        return Apply(self.name, (gx,) * self.op.arity)

    def scalar(self, n: int, node: Node) -> Node:
        compact = (n - 1) // 2 > LINEAR_SCALAR_MAX_NODES
        return scalar_mul_formula(n, node, self.width, compact=compact).root

    def zero_violation(self, report: SafetyReport) -> Witness:
        k0 = report.k0
        k1 = self.op.eval((1,) * self.op.arity)
        x = Var("x")
        if k1 == k0:
            case, kind, root, constant, variables = "a", "constant_formula", self.h(x), k0, ("x",)
        elif k0 % 2 == 1 and k1 % 2 == 1:
            case, kind, root, constant, variables = "b", "constant_formula", self.collapse(self.h(x)), 1, ("x",)
        elif k0 % 2 == 0 and k1 % 2 == 0:
            case, kind, root, constant, variables = "c", "constant_formula", self.collapse(self.h(x)), 0, ("x",)
        else:
            product = Apply("mul", (self.h(Var("x1")), self.h(Var("x2"))))
            case, kind, root, constant = "d", "parity_coverage_computation", self.collapse(product), 0
            variables = ("x1", "x2")

        formula = Formula(root, variables)
        derivation = Derivation(case=case, k0=k0, k1=k1)
        return self._finish(kind, formula, constant, derivation)

    def odd_violation(self, report: SafetyReport) -> Witness:
        tuple_ = report.condition_odd.violation
        inverse = odd_inverse(tuple_[0], self.width)
        scalars = [(t * inverse) & width_mask(self.width) for t in tuple_]

        gx = self.collapse(Var("x"))
        args = tuple(self.scalar(t, gx) for t in tuple_)
        formula = Formula(self.collapse(Apply(self.name, args)), ("x",))
        derivation = Derivation(
            case="odd",
            k0=report.k0,
            violation=list(tuple_),
            violation_output=report.condition_odd.output,
            scalars=scalars,
        )
        return self._finish("constant_formula", formula, 0, derivation)

    def _finish(self, kind: str, formula: Formula, constant: int, derivation: Derivation) -> Witness:
        with PerformanceLogger("witness verification", self.logger, op=self.op.name, case=derivation.case) as perf:
            verification = verify_formula(kind, formula, constant, self.ops, self.width, self.config)
            perf.update(mode=verification.mode, checked=verification.checked, held=verification.constant_held)
        if not verification.constant_held:
            raise AluSafeError(
                f"witness for {self.op.describe()} (case {derivation.case}) failed verification"
            )
        return Witness(
            kind=kind,
            op_name=self.op.name,
            registered_as=self.name,
            width=self.width,
            formula=print_formula(formula),
            variables=list(formula.variables),
            claimed_constant=constant,
            derivation=derivation,
            verification=verification,
        )


def verify_formula(
    kind: str,
    formula: Formula,
    constant: int,
    ops: Dict[str, Operator],
    width: int,
    config: Optional[Config] = None,
    seed: Optional[int] = None,
) -> Verification:
    """Re-evaluate a witness formula over every assignment in its domain, or a seeded sample of it."""
    config = config or Config()
    k = len(formula.variables)
    bits = width * k
    mask = width_mask(width)
    parity_split = kind == "parity_coverage_computation"
    domain = "inputs of differing parity" if parity_split else "all assignments"

    if bits <= config.EXHAUSTIVE_ASSIGNMENT_BITS:
        columns = dict(zip(formula.variables, FunctionSpace(width, k).assignments()))
        mode, used_seed = "exhaustive", None
    else:
        used_seed = config.DEFAULT_SEED if seed is None else seed
        rng = np.random.default_rng(used_seed)
        count = config.SAMPLE_COUNT
        columns = {name: rng.integers(0, mask + 1, size=count, dtype=np.uint64) for name in formula.variables}
        mode = "sampled"

    if parity_split:
        first, second = (columns[name] for name in formula.variables[:2])
        if mode == "sampled":
            columns[formula.variables[1]] = second = (second & ~np.uint64(1)) | (~first & np.uint64(1))
        keep = ((first ^ second) & np.uint64(1)) == 1
        columns = {name: values[keep] for name, values in columns.items()}

    outputs = evaluate(formula, ops, columns, width)
    checked = int(np.size(next(iter(columns.values()))))
    held = bool(np.all(outputs == np.uint64(constant)))
    total = checked if mode == "exhaustive" else 1 << bits
    if parity_split and mode == "sampled":
        total = 1 << (bits - 1)
    return Verification(mode=mode, domain=domain, checked=checked, total=total, constant_held=held, seed=used_seed)


def witness_zero_violation(
    op: Operator, *, config: Optional[Config] = None, report: Optional[SafetyReport] = None
) -> Witness:
    config = config or Config()
    report = report or analyze(op, config=config)
    if report.condition_zero.passed:
        raise DomainError(f"{op.describe()} maps the all-zero tuple to 0; condition (i) holds")
    return WitnessBuilder(op, config).zero_violation(report)


def witness_odd_violation(
    op: Operator, *, config: Optional[Config] = None, report: Optional[SafetyReport] = None
) -> Witness:
    config = config or Config()
    report = report or analyze(op, config=config)
    if not report.condition_zero.passed:
        raise DomainError(f"{op.describe()} fails condition (i); use the zero-violation witness")
    if report.condition_odd.passed:
        raise DomainError(f"{op.describe()} maps all-odd tuples to odd values; condition (ii) holds")
    return WitnessBuilder(op, config).odd_violation(report)


def witness(op: Operator, *, config: Optional[Config] = None, report: Optional[SafetyReport] = None) -> Witness:
    """
    Witness for whichever condition fails; condition (i) takes precedence.

    A report from an earlier `analyze` of the same operator is reused as is.
    """
    config = config or Config()
    report = report or analyze(op, config=config)
    if report.safe:
        raise DomainError(f"{op.describe()} is safe; no constant-producing formula exists")
    builder = WitnessBuilder(op, config)
    if not report.condition_zero.passed:
        return builder.zero_violation(report)
    return builder.odd_violation(report)


def verify_witness(witness: Witness, op: Operator, *, config: Optional[Config] = None) -> Verification:
    """Parse the witness text back and re-check its constant, independently of construction."""
    if op.width != witness.width:
        raise UsageError(f"witness is for width {witness.width}, operator has width {op.width}")
    ops = witness_operators(op, witness.registered_as)
    formula = parse_formula(witness.formula, ops, variables=witness.variables)
    return verify_formula(witness.kind, formula, witness.claimed_constant, ops, witness.width, config,
                          seed=witness.verification.seed)
