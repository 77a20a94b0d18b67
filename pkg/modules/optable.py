"""
n-bit operators of arity 1-3.

An operator is either a dense table (flat, row-major: the first argument is the
most significant digit of the index) or a named builtin rule evaluated with
numpy. All evaluation is modulo 2^width.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ValidationError

from modules.errors import DomainError, OperatorFileError, UsageError

logger = logging.getLogger(__name__)

Values = npt.NDArray[np.uint64]

MIN_WIDTH = 1
MAX_WIDTH = 32
MAX_ARITY = 3
# dense tables hold at most 2^16 entries
MAX_TABLE_BITS = 16

NAME_PATTERN = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")


def check_width(width: int) -> int:
    if not isinstance(width, (int, np.integer)) or isinstance(width, bool):
        raise UsageError(f"width must be an integer, got {width!r}")
    if not MIN_WIDTH <= int(width) <= MAX_WIDTH:
        raise UsageError(f"width must be between {MIN_WIDTH} and {MAX_WIDTH}, got {width}")
    return int(width)


def width_mask(width: int) -> int:
    return (1 << width) - 1


def dense_allowed(width: int, arity: int) -> bool:
    return width * arity <= MAX_TABLE_BITS


# -- builtin rules -----------------------------------------------------------

def div_classical(x: int, y: int) -> int:
    """Floor division with x/0 = 0."""
    if y == 0:
        return 0
    return x // y


def safe_div(x: int, y: int, width: int = MAX_WIDTH) -> int:
    """Classical quotient, bumped by one when x and y are odd and the quotient is even."""
    q = div_classical(x, y)
    if x & 1 and y & 1 and not q & 1:
        q = (q + 1) & width_mask(width)
    return q


def correction_check(x: int, y: int, q: int) -> bool:
    """True when q is not the classical quotient, i.e. q*y falls outside (x-y, x]."""
    if y == 0:
        raise DomainError("correction_check needs a nonzero divisor")
    product = q * y
    return not (x - y < product <= x)


def corrected_quotient(x: int, y: int, q: int) -> int:
    """Recover the classical quotient from a safe_div result."""
    if correction_check(x, y, q):
        # the bump never wraps: the classical quotient was even, so at most 2^w - 2
        return q - 1
    return q


def parity_collapse(x: int, width: int) -> int:
    """x^(2^width) mod 2^width by width successive squarings."""
    mask = width_mask(check_width(width))
    value = x & mask
    for _ in range(width):
        value = (value * value) & mask
    return value


def _rule_mul(width: int, x: Values, y: Values) -> Values:
    return (x * y) & np.uint64(width_mask(width))


def _rule_add2(width: int, x: Values, y: Values) -> Values:
    return (x + y) & np.uint64(width_mask(width))


def _rule_add3(width: int, x: Values, y: Values, z: Values) -> Values:
    return (x + y + z) & np.uint64(width_mask(width))


def _rule_div_classical(width: int, x: Values, y: Values) -> Values:
    nonzero = y != 0
    quotient = x // np.where(nonzero, y, np.uint64(1))
    return np.where(nonzero, quotient, np.uint64(0)).astype(np.uint64)


def _rule_safe_div(width: int, x: Values, y: Values) -> Values:
    q = _rule_div_classical(width, x, y)
    one = np.uint64(1)
    bump = (x & one) & (y & one) & (~q & one)
    return (q + bump) & np.uint64(width_mask(width))


def _rule_parity_collapse(width: int, x: Values) -> Values:
    mask = np.uint64(width_mask(width))
    value = x & mask
    for _ in range(width):
        value = (value * value) & mask
    return value


def _rule_identity(width: int, x: Values) -> Values:
    return x & np.uint64(width_mask(width))


def _rule_lt(width: int, x: Values, y: Values) -> Values:
    return (x < y).astype(np.uint64)


def _rule_eq(width: int, x: Values, y: Values) -> Values:
    return (x == y).astype(np.uint64)


def _projection(index: int) -> Callable[..., Values]:
    def rule(width: int, *args: Values) -> Values:
        return args[index] & np.uint64(width_mask(width))
    return rule


@dataclass(frozen=True)
class BuiltinRule:
    name: str
    arity: int
    fn: Callable[..., Values] = field(repr=False)
    summary: str = ""
    # binary rule r with op(x, y, z) = r(r(x, y), z)
    staged: Optional[str] = None


BUILTIN_RULES: Dict[str, BuiltinRule] = {
    "mul": BuiltinRule("mul", 2, _rule_mul, "x*y"),
    "add2": BuiltinRule("add2", 2, _rule_add2, "x+y"),
    "add3": BuiltinRule("add3", 3, _rule_add3, "x+y+z", staged="add2"),
    "div_classical": BuiltinRule("div_classical", 2, _rule_div_classical, "floor(x/y), x/0 = 0"),
    "safe_div": BuiltinRule("safe_div", 2, _rule_safe_div, "x/y, plus 1 when x, y odd and x/y even"),
    "parity_collapse": BuiltinRule("parity_collapse", 1, _rule_parity_collapse, "x^(2^w)"),
    "identity": BuiltinRule("identity", 1, _rule_identity, "x"),
    "lt": BuiltinRule("lt", 2, _rule_lt, "1 if x<y else 0"),
    "eq": BuiltinRule("eq", 2, _rule_eq, "1 if x=y else 0"),
}
for _k in range(1, MAX_ARITY + 1):
    for _i in range(1, _k + 1):
        _name = f"proj{_i}of{_k}"
        BUILTIN_RULES[_name] = BuiltinRule(_name, _k, _projection(_i - 1), f"argument {_i} of {_k}")


# -- operators ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Operator:
    """An immutable n-bit operator; exactly one of rule / table is set."""

    name: str
    width: int
    arity: int
    rule: Optional[str] = None
    table: Optional[Values] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not NAME_PATTERN.match(self.name or ""):
            raise UsageError(f"operator name must be an identifier, got {self.name!r}")
        check_width(self.width)
        if self.arity not in (1, 2, 3):
            raise UsageError(f"arity must be 1, 2 or 3, got {self.arity}")
        if (self.rule is None) == (self.table is None):
            raise UsageError("an operator needs exactly one of a builtin rule or a dense table")

        if self.rule is not None:
            spec = BUILTIN_RULES.get(self.rule)
            if spec is None:
                raise UsageError(f"unknown builtin rule {self.rule!r}")
            if spec.arity != self.arity:
                raise UsageError(f"builtin {self.rule} has arity {spec.arity}, not {self.arity}")
            return

        if not dense_allowed(self.width, self.arity):
            raise UsageError(
                f"dense tables need arity*width <= {MAX_TABLE_BITS}, got {self.arity}*{self.width}"
            )
        try:
            table = np.array(self.table, dtype=np.uint64).ravel()
        except (OverflowError, ValueError, TypeError) as exc:
            raise UsageError(f"table for {self.name} must hold non-negative integers: {exc}") from exc
        expected = 1 << (self.width * self.arity)
        if table.size != expected:
            raise UsageError(f"table for {self.name} needs {expected} entries, got {table.size}")
        if table.size and int(table.max()) > width_mask(self.width):
            raise UsageError(f"table for {self.name} has an entry >= 2^{self.width}")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @classmethod
    def from_table(cls, name: str, width: int, arity: int, table: Iterable[int]) -> "Operator":
        values = table if isinstance(table, np.ndarray) else list(table)
        return cls(name=name, width=width, arity=arity, table=values)

    @property
    def is_dense(self) -> bool:
        return self.table is not None

    @property
    def mask(self) -> int:
        return width_mask(self.width)

    @property
    def table_size(self) -> int:
        return 1 << (self.width * self.arity)

    def index_of(self, values: Sequence[int]) -> int:
        index = 0
        for value in values:
            index = (index << self.width) | int(value)
        return index

    def tuple_of(self, index: int) -> tuple:
        values = []
        for position in range(self.arity):
            shift = self.width * (self.arity - 1 - position)
            values.append((index >> shift) & self.mask)
        return tuple(values)

    def apply(self, *args: Values) -> Values:
        """Vectorized evaluation over broadcastable uint64 argument arrays."""
        if len(args) != self.arity:
            raise UsageError(f"{self.name} takes {self.arity} arguments, got {len(args)}")
        arrays = [np.asarray(arg, dtype=np.uint64) for arg in args]
        if self.table is not None:
            index = np.zeros(np.broadcast_shapes(*(a.shape for a in arrays)), dtype=np.uint64)
            for array in arrays:
                index = (index << np.uint64(self.width)) | array
            return self.table[index]
        return BUILTIN_RULES[self.rule].fn(self.width, *arrays)

    def eval(self, values: Sequence[int]) -> int:
        """Evaluate at one input tuple."""
        values = tuple(values)
        if len(values) != self.arity:
            raise UsageError(f"{self.name} takes {self.arity} arguments, got {len(values)}")
        for value in values:
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise UsageError(f"inputs must be integers, got {value!r}")
            if not 0 <= int(value) <= self.mask:
                raise UsageError(f"input {value} is out of range for width {self.width}")
        result = self.apply(*[np.array([int(v)], dtype=np.uint64) for v in values])
        return int(result[0])

    def dense_table(self) -> Values:
        if self.table is not None:
            return self.table
        if not dense_allowed(self.width, self.arity):
            raise UsageError(
                f"{self.name}@{self.width} is too wide to tabulate ({self.arity * self.width} index bits)"
            )
        index = np.arange(self.table_size, dtype=np.uint64)
        mask = np.uint64(self.mask)
        args = [
            (index >> np.uint64(self.width * (self.arity - 1 - position))) & mask
            for position in range(self.arity)
        ]
        return BUILTIN_RULES[self.rule].fn(self.width, *args).astype(np.uint64)

    def tabulate(self, name: Optional[str] = None) -> "Operator":
        return Operator(name=name or self.name, width=self.width, arity=self.arity, table=self.dense_table())

    def renamed(self, name: str) -> "Operator":
        return Operator(name=name, width=self.width, arity=self.arity, rule=self.rule, table=self.table)

    def same_as(self, other: "Operator") -> bool:
        """Pointwise equality; both operators must be tabulable."""
        if (self.width, self.arity) != (other.width, other.arity):
            return False
        if self.rule is not None and self.rule == other.rule:
            return True
        return bool(np.array_equal(self.dense_table(), other.dense_table()))

    def is_commutative(self) -> bool:
        """Invariant under every permutation of its arguments (checked on the dense table)."""
        if self.arity == 1:
            return True
        if self.rule in ("mul", "add2", "add3", "eq"):
            return True
        if not dense_allowed(self.width, self.arity):
            return False
        cube = self.dense_table().reshape((1 << self.width,) * self.arity)
        if self.arity == 2:
            return bool(np.array_equal(cube, cube.T))
        return all(
            np.array_equal(cube, np.transpose(cube, axes))
            for axes in ((1, 0, 2), (0, 2, 1))
        )

    def staging(self) -> Optional["Operator"]:
        """The commutative binary operator this one folds, when it is a fold of one."""
        if self.rule is None:
            return None
        inner = BUILTIN_RULES[self.rule].staged
        return None if inner is None else builtin(inner, self.width)

    def describe(self) -> str:
        body = f"rule {self.rule}" if self.rule else f"table[{self.table_size}]"
        return f"{self.name}@w{self.width}/{self.arity} ({body})"


def builtin(name: str, width: int) -> Operator:
    spec = BUILTIN_RULES.get(name)
    if spec is None:
        known = ", ".join(sorted(BUILTIN_RULES))
        raise UsageError(f"unknown operator {name!r}; builtins are: {known}")
    return Operator(name=name, width=check_width(width), arity=spec.arity, rule=name)


def operator_set(operators: Iterable[Operator]) -> Dict[str, Operator]:
    """Name -> operator map with a single common width."""
    result: Dict[str, Operator] = {}
    widths = set()
    for op in operators:
        if op.name in result and not result[op.name].same_as(op):
            raise UsageError(f"two different operators are named {op.name!r}")
        result[op.name] = op
        widths.add(op.width)
    if len(widths) > 1:
        raise UsageError(f"operators disagree on width: {sorted(widths)}")
    return dict(sorted(result.items()))


def scalar_mul_formula(n_odd: int, var, width: Optional[int] = None, compact: bool = False):
    """
    Formula for n*x using add3 alone.

    The plain form nests (n-1)/2 add3 nodes: ((x+x+x)+x+x)+x+x ... The compact
    form shares subterms, using 2a+x or 2a+3x steps on an odd multiple a, and
    needs O(log n) distinct nodes.
    """
    from modules.expr import Apply, Formula, Var, collect_variables

    if n_odd < 1 or n_odd % 2 == 0:
        raise DomainError(f"scalar must be a positive odd integer, got {n_odd}")
    if width is not None and n_odd >= 1 << check_width(width):
        raise DomainError(f"scalar {n_odd} does not fit in {width} bits")

    if isinstance(var, Formula):
        node = var.root
    elif isinstance(var, str):
        node = Var(var)
    else:
        node = var

    if compact:
        built = {1: node}

        def build(n: int):
            if n not in built:
                if n == 3:
                    built[n] = Apply("add3", (node, node, node))
                elif n % 4 == 3:
                    half = build((n - 1) // 2)
                    built[n] = Apply("add3", (half, half, node))
                else:
                    half = build((n - 3) // 2)
                    built[n] = Apply("add3", (half, half, build(3)))
            return built[n]

        result = build(n_odd)
    else:
        result = node
        if n_odd >= 3:
            result = Apply("add3", (node, node, node))
            for _ in range((n_odd - 3) // 2):
                result = Apply("add3", (result, node, node))
    return Formula(result, tuple(sorted(collect_variables(result))))



def odd_inverse(value: int, width: int) -> int:
    """Multiplicative inverse of an odd value mod 2^width."""
    if value % 2 == 0:
        raise DomainError(f"{value} is even and has no inverse mod 2^{width}")
    return pow(value, -1, 1 << width)


# -- operator files ----------------------------------------------------------

class OperatorFile(BaseModel):
    name: str
    width: int
    arity: int
    table: List[int]


def _location(loc: Sequence) -> str:
    text = ""
    for part in loc:
        if isinstance(part, int):
            text += f"[{part}]"
        else:
            text += f".{part}" if text else str(part)
    return text


def parse_operator(text: str, path: Optional[str] = None) -> Operator:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise OperatorFileError(exc.msg, path, f"line {exc.lineno} column {exc.colno}") from exc

    try:
        parsed = OperatorFile.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise OperatorFileError(first["msg"], path, _location(first["loc"]) or None) from exc

    if not NAME_PATTERN.match(parsed.name):
        raise OperatorFileError("name must be an identifier", path, "name")
    if not MIN_WIDTH <= parsed.width <= MAX_WIDTH:
        raise OperatorFileError(f"width must be between {MIN_WIDTH} and {MAX_WIDTH}", path, "width")
    if parsed.arity not in (1, 2, 3):
        raise OperatorFileError("arity must be 1, 2 or 3", path, "arity")
    if not dense_allowed(parsed.width, parsed.arity):
        raise OperatorFileError(
            f"arity*width must be at most {MAX_TABLE_BITS} for a dense table", path, "width"
        )

    expected = 1 << (parsed.width * parsed.arity)
    if len(parsed.table) != expected:
        raise OperatorFileError(
            f"expected {expected} entries, found {len(parsed.table)}", path, "table"
        )
    limit = width_mask(parsed.width)
    for index, entry in enumerate(parsed.table):
        if not 0 <= entry <= limit:
            raise OperatorFileError(
                f"entry {entry} is out of range for width {parsed.width}", path, f"table[{index}]"
            )

    return Operator.from_table(parsed.name, parsed.width, parsed.arity, parsed.table)


def load_operator(path: Union[str, Path]) -> Operator:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OperatorFileError(str(exc), str(path)) from exc
    op = parse_operator(text, str(path))
    logger.debug("Loaded operator %s from %s", op.describe(), path)
    return op


def dump_operator(op: Operator) -> str:
    document = OperatorFile(
        name=op.name,
        width=op.width,
        arity=op.arity,
        table=[int(v) for v in op.dense_table()],
    )
    return document.model_dump_json() + "\n"


def save_operator(op: Operator, path: Union[str, Path]) -> None:
    Path(path).write_text(dump_operator(op), encoding="utf-8")
    logger.debug("Saved operator %s to %s", op.describe(), path)


def resolve_operator(source: str, width: Optional[int] = None) -> Operator:
    """A builtin name, or a path to an operator file."""
    candidate = Path(source)
    if source.endswith(".json") or candidate.is_file():
        op = load_operator(candidate)
        if width is not None and op.width != width:
            raise UsageError(f"{source} has width {op.width}, but width {width} was requested")
        return op
    if source not in BUILTIN_RULES:
        known = ", ".join(sorted(BUILTIN_RULES))
        raise UsageError(f"unknown operator {source!r}; builtins are: {known}")
    if width is None:
        raise UsageError(f"a width is required for builtin operator {source!r}")
    return builtin(source, width)
