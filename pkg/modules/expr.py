"""
Formulas over named operators and unknown variables.

Grammar (no literals anywhere):

    formula := var | "(" opname formula+ ")" | "(" "let" "(" binding* ")" formula ")"
    binding := "(" _name formula ")"

Variables match [a-z][a-z0-9_]*; let-bound names start with an underscore, so
they never collide with variables. Formulas built with shared subterms print in
the let form and keep their sharing when parsed back.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel

from config import Config
from modules.errors import FormulaSyntaxError, UsageError
from modules.function_space import (
    FunctionSpace,
    FunctionVector,
    MemberIndex,
    Rows,
    apply_product,
    apply_rows,
    tuple_count,
    unravel,
)
from modules.logger import LoggingMixin, PerformanceLogger
from modules.optable import BUILTIN_RULES, NAME_PATTERN, Operator, operator_set, width_mask

logger = logging.getLogger(__name__)

VAR_PATTERN = re.compile(r"^[a-z][a-z0-9_]*$")
BINDING_PATTERN = re.compile(r"^_[a-z0-9_]+$")
LITERAL_PATTERN = re.compile(r"^[-+]?[0-9]")
TOKEN_PATTERN = re.compile(r"\s+|\(|\)|[^\s()]+")

LET = "let"

OperatorsLike = Union[Mapping[str, Operator], Iterable[Operator]]


# -- nodes -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Var:
    name: str

    def __post_init__(self) -> None:
        if not VAR_PATTERN.match(self.name):
            raise UsageError(f"invalid variable name {self.name!r}")


@dataclass(frozen=True, eq=False)
class Apply:
    op: str
    children: Tuple["Node", ...]

    def __post_init__(self) -> None:
        if not NAME_PATTERN.match(self.op) or self.op == LET:
            raise UsageError(f"invalid operator name {self.op!r}")
        children = tuple(self.children)
        if not children:
            raise UsageError(f"{self.op} needs at least one argument")
        object.__setattr__(self, "children", children)


Node = Union[Var, Apply]


def iter_nodes(root: Node) -> List[Node]:
    """Distinct nodes of the DAG under `root`, children before parents."""
    seen: Set[int] = set()
    order: List[Node] = []
    stack: List[Tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if isinstance(node, Var) or expanded:
            seen.add(id(node))
            order.append(node)
            continue
        stack.append((node, True))
        for child in reversed(node.children):
            if id(child) not in seen:
                stack.append((child, False))
    return order


def collect_variables(root: Node) -> Set[str]:
    return {node.name for node in iter_nodes(root) if isinstance(node, Var)}


def default_variables(count: int) -> Tuple[str, ...]:
    if count <= 3:
        return ("x", "y", "z")[:count]
    digits = len(str(count))
    return tuple(f"x{i:0{digits}d}" for i in range(1, count + 1))


@dataclass(frozen=True, eq=False)
class Formula:
    """A literal-free expression with an ordered variable list."""

    root: Node
    variables: Tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        used = collect_variables(self.root)
        variables = tuple(self.variables) or tuple(sorted(used))
        if len(set(variables)) != len(variables):
            raise UsageError(f"duplicate variables in {variables}")
        for name in variables:
            if not VAR_PATTERN.match(name):
                raise UsageError(f"invalid variable name {name!r}")
        missing = used - set(variables)
        if missing:
            raise UsageError(f"unbound variables: {', '.join(sorted(missing))}")
        object.__setattr__(self, "variables", variables)

    @property
    def size(self) -> int:
        """Operator applications in the fully expanded tree."""
        counts: Dict[int, int] = {}
        for node in iter_nodes(self.root):
            if isinstance(node, Var):
                counts[id(node)] = 0
            else:
                counts[id(node)] = 1 + sum(counts[id(c)] for c in node.children)
        return counts[id(self.root)]

    @property
    def distinct_applications(self) -> int:
        return sum(1 for node in iter_nodes(self.root) if isinstance(node, Apply))

    def operators(self) -> Set[str]:
        return {node.op for node in iter_nodes(self.root) if isinstance(node, Apply)}

    def __str__(self) -> str:
        return print_formula(self)


def as_formula(value: Union[Formula, Node, str], variables: Optional[Sequence[str]] = None) -> Formula:
    if isinstance(value, Formula):
        return value
    if isinstance(value, str):
        return parse_formula(value, variables=variables)
    return Formula(value, tuple(variables or ()))


def operator_map(ops: Optional[OperatorsLike]) -> Dict[str, Operator]:
    if ops is None:
        return {}
    if isinstance(ops, Mapping):
        # keys may differ from op.name, e.g. a witness target registered as f
        widths = {op.width for op in ops.values()}
        if len(widths) > 1:
            raise UsageError(f"operators disagree on width: {sorted(widths)}")
        return dict(sorted(ops.items()))
    return operator_set(ops)


def common_width(ops: Mapping[str, Operator], width: Optional[int]) -> int:
    widths = {op.width for op in ops.values()}
    if width is not None:
        if widths and widths != {width}:
            raise UsageError(f"operators have width {sorted(widths)}, not {width}")
        return width
    if not widths:
        raise UsageError("a width is required when no operators are given")
    return widths.pop()


# -- printing ----------------------------------------------------------------

def print_formula(formula: Union[Formula, Node]) -> str:
    root = formula.root if isinstance(formula, Formula) else formula
    order = iter_nodes(root)
    refs: Dict[int, int] = {}
    for node in order:
        if isinstance(node, Apply):
            for child in node.children:
                refs[id(child)] = refs.get(id(child), 0) + 1

    shared = [n for n in order if isinstance(n, Apply) and refs.get(id(n), 0) > 1]
    names = {id(node): f"_t{i}" for i, node in enumerate(shared, 1)}

    def render(node: Node, top: bool = False) -> str:
        if isinstance(node, Var):
            return node.name
        if not top and id(node) in names:
            return names[id(node)]
        return "(" + " ".join([node.op] + [render(c) for c in node.children]) + ")"

    body = render(root, top=True)
    if not shared:
        return body
    bindings = " ".join(f"({names[id(n)]} {render(n, top=True)})" for n in shared)
    return f"({LET} ({bindings}) {body})"


# -- parsing -----------------------------------------------------------------

@dataclass
class _Token:
    text: str
    position: int


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    for match in TOKEN_PATTERN.finditer(text):
        if not match.group().isspace():
            tokens.append(_Token(match.group(), match.start()))
    return tokens


class _Parser:
    def __init__(self, text: str, arities: Mapping[str, int], known_only: bool) -> None:
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.arities = dict(arities)
        self.known_only = known_only

    def peek(self) -> Optional[_Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> _Token:
        token = self.peek()
        if token is None:
            raise FormulaSyntaxError("unexpected end of formula", len(self.text))
        self.pos += 1
        return token

    def expect(self, text: str) -> _Token:
        token = self.take()
        if token.text != text:
            raise FormulaSyntaxError(f"expected {text!r}, found {token.text!r}", token.position)
        return token

    def formula(self, env: Dict[str, Node]) -> Node:
        token = self.take()
        if token.text == "(":
            head = self.peek()
            if head is not None and head.text == LET:
                return self.let_form(env)
            return self.application(env, token)
        if token.text == ")":
            raise FormulaSyntaxError("unexpected ')'", token.position)
        return self.atom(token, env)

    def atom(self, token: _Token, env: Dict[str, Node]) -> Node:
        if LITERAL_PATTERN.match(token.text):
            raise FormulaSyntaxError(f"literal constant {token.text!r} is not allowed", token.position)
        if token.text.startswith("_"):
            if token.text not in env:
                raise FormulaSyntaxError(f"unbound name {token.text!r}", token.position)
            return env[token.text]
        if not VAR_PATTERN.match(token.text):
            raise FormulaSyntaxError(f"invalid variable name {token.text!r}", token.position)
        return Var(token.text)

    def application(self, env: Dict[str, Node], open_token: _Token) -> Node:
        head = self.take()
        if head.text in ("(", ")") or not NAME_PATTERN.match(head.text):
            raise FormulaSyntaxError(f"expected an operator name, found {head.text!r}", head.position)
        children = []
        while True:
            token = self.peek()
            if token is None:
                raise FormulaSyntaxError(f"unclosed '(' for {head.text}", open_token.position)
            if token.text == ")":
                self.pos += 1
                break
            children.append(self.formula(env))
        if not children:
            raise FormulaSyntaxError(f"{head.text} needs at least one argument", head.position)

        arity = self.arities.get(head.text)
        if arity is None:
            if self.known_only:
                raise FormulaSyntaxError(f"unknown operator {head.text!r}", head.position)
            self.arities[head.text] = arity = len(children)
        if len(children) != arity:
            raise FormulaSyntaxError(
                f"{head.text} takes {arity} arguments, got {len(children)}", head.position
            )
        return Apply(head.text, tuple(children))

    def let_form(self, env: Dict[str, Node]) -> Node:
        self.take()  # let
        self.expect("(")
        scope = dict(env)
        while True:
            token = self.take()
            if token.text == ")":
                break
            if token.text != "(":
                raise FormulaSyntaxError(f"expected a binding, found {token.text!r}", token.position)
            name = self.take()
            if not BINDING_PATTERN.match(name.text):
                raise FormulaSyntaxError(
                    f"binding names start with '_', found {name.text!r}", name.position
                )
            scope[name.text] = self.formula(scope)
            self.expect(")")
        body = self.formula(scope)
        self.expect(")")
        return body


def parse_formula(
    text: str,
    ops: Optional[OperatorsLike] = None,
    variables: Optional[Sequence[str]] = None,
) -> Formula:
    """
    Parse formula text.

    Arity is checked against `ops` when given (unknown names are errors), and
    otherwise against the builtin operators, with other names taking the arity
    of their first use.
    """
    if ops is not None:
        arities = {name: op.arity for name, op in operator_map(ops).items()}
        known_only = True
    else:
        arities = {name: rule.arity for name, rule in BUILTIN_RULES.items()}
        known_only = False

    parser = _Parser(text, arities, known_only)
    if parser.peek() is None:
        raise FormulaSyntaxError("empty formula", 0)
    root = parser.formula({})
    extra = parser.peek()
    if extra is not None:
        raise FormulaSyntaxError(f"trailing input {extra.text!r}", extra.position)
    try:
        return Formula(root, tuple(variables or ()))
    except UsageError as exc:
        raise FormulaSyntaxError(str(exc), 0) from exc


# -- evaluation --------------------------------------------------------------

def evaluate(
    formula: Formula,
    ops: OperatorsLike,
    columns: Mapping[str, npt.ArrayLike],
    width: Optional[int] = None,
) -> npt.NDArray[np.uint64]:
    """Vectorized bottom-up evaluation; `columns` maps each variable to an array of values."""
    table = operator_map(ops)
    width = common_width(table, width)
    mask = np.uint64(width_mask(width))
    values: Dict[int, np.ndarray] = {}
    for node in iter_nodes(formula.root):
        if isinstance(node, Var):
            if node.name not in columns:
                raise UsageError(f"unbound variable {node.name!r}")
            values[id(node)] = np.asarray(columns[node.name], dtype=np.uint64) & mask
            continue
        op = table.get(node.op)
        if op is None:
            raise UsageError(f"unknown operator {node.op!r}")
        if len(node.children) != op.arity:
            raise UsageError(f"{node.op} takes {op.arity} arguments, got {len(node.children)}")
        values[id(node)] = op.apply(*[values[id(c)] for c in node.children])
    return values[id(formula.root)]


def eval_formula(
    formula: Union[Formula, str],
    assignment: Mapping[str, int],
    ops: OperatorsLike,
    width: Optional[int] = None,
) -> int:
    formula = as_formula(formula)
    table = operator_map(ops)
    width = common_width(table, width)
    for name, value in assignment.items():
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise UsageError(f"value of {name} must be an integer, got {value!r}")
        if not 0 <= int(value) <= width_mask(width):
            raise UsageError(f"value {value} of {name} is out of range for width {width}")
    columns = {name: np.array([int(value)], dtype=np.uint64) for name, value in assignment.items()}
    return int(evaluate(formula, table, columns, width)[0])


def tabulate_formula(
    formula: Union[Formula, str],
    ops: OperatorsLike,
    width: Optional[int] = None,
) -> FunctionVector:
    """The formula's FunctionVector over its variable list."""
    formula = as_formula(formula)
    table = operator_map(ops)
    width = common_width(table, width)
    space = FunctionSpace(width, len(formula.variables))
    columns = dict(zip(formula.variables, space.assignments()))
    outputs = evaluate(formula, table, columns, width)
    return FunctionVector(width, len(formula.variables), np.broadcast_to(outputs, (space.points,)))


class ConstantFinding(BaseModel):
    formula: str
    constant: int
    coverage: str
    assignments: int
    width: int
    variables: List[str]
    nodes: int
    seed: Optional[int] = None


def is_constant(
    formula: Union[Formula, str],
    ops: OperatorsLike,
    width: Optional[int] = None,
    *,
    samples: Optional[int] = None,
    seed: Optional[int] = None,
    config: Optional[Config] = None,
) -> Optional[ConstantFinding]:
    """
    The constant the formula always yields, or None.

    All 2^(w*k) assignments are enumerated while w*k stays within
    ALUSAFE_EXHAUSTIVE_ASSIGNMENT_BITS; past that, seeded random assignments
    are drawn and the finding is marked sampled.
    """
    config = config or Config()
    formula = as_formula(formula)
    table = operator_map(ops)
    width = common_width(table, width)
    k = len(formula.variables)
    bits = width * k

    if bits <= config.EXHAUSTIVE_ASSIGNMENT_BITS:
        space = FunctionSpace(width, k)
        columns = dict(zip(formula.variables, space.assignments()))
        outputs = np.broadcast_to(evaluate(formula, table, columns, width), (space.points,))
        coverage, count, used_seed = "exhaustive", space.points, None
    else:
        count = samples or config.SAMPLE_COUNT
        used_seed = config.DEFAULT_SEED if seed is None else seed
        rng = np.random.default_rng(used_seed)
        columns = {
            name: rng.integers(0, 1 << width, size=count, dtype=np.uint64)
            for name in formula.variables
        }
        outputs = np.broadcast_to(evaluate(formula, table, columns, width), (count,))
        coverage = "sampled"

    first = int(outputs[0])
    if not np.all(outputs == outputs[0]):
        return None
    return ConstantFinding(
        formula=print_formula(formula),
        constant=first,
        coverage=coverage,
        assignments=count,
        width=width,
        variables=list(formula.variables),
        nodes=formula.size,
        seed=used_seed,
    )


# -- enumeration helpers -----------------------------------------------------

def compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    """Ordered splits of `total` into `parts` non-negative summands, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in compositions(total - head, parts - 1):
            yield (head,) + tail


def enumerate_formulas(
    ops: OperatorsLike,
    variables: Sequence[str],
    max_nodes: int,
) -> Iterator[Formula]:
    """Every formula with at most `max_nodes` applications, no deduplication."""
    table = operator_map(ops)
    variables = tuple(variables)
    by_size: List[List[Node]] = [[Var(name) for name in variables]]
    for size in range(1, max_nodes + 1):
        level: List[Node] = []
        for name, op in table.items():
            for split in compositions(size - 1, op.arity):
                pools = [by_size[part] for part in split]
                level.extend(Apply(name, combo) for combo in _product(pools))
        by_size.append(level)
    for level in by_size:
        for node in level:
            yield Formula(node, variables)


def _product(pools: Sequence[Sequence[Node]]) -> Iterator[Tuple[Node, ...]]:
    if not pools:
        yield ()
        return
    for head in pools[0]:
        for tail in _product(pools[1:]):
            yield (head,) + tail


def random_formula(
    ops: OperatorsLike,
    variables: Sequence[str],
    max_nodes: int,
    rng: Union[np.random.Generator, int, None] = None,
) -> Formula:
    """A random tree with between 0 and `max_nodes` applications."""
    table = operator_map(ops)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    names = list(table)
    variables = tuple(variables)

    def build(nodes: int) -> Node:
        if nodes == 0 or not names:
            return Var(variables[int(rng.integers(len(variables)))])
        op = table[names[int(rng.integers(len(names)))]]
        split = rng.multinomial(nodes - 1, [1.0 / op.arity] * op.arity)
        return Apply(op.name, tuple(build(int(part)) for part in split))

    return Formula(build(int(rng.integers(0, max_nodes + 1))), variables)


# -- bounded search ----------------------------------------------------------

class SearchResult(BaseModel):
    operators: List[str]
    width: int
    variables: List[str]
    max_nodes: Optional[int]
    findings: List[ConstantFinding]
    distinct_functions: int
    new_per_level: List[int]
    candidates: int
    complete: bool
    reason: Optional[str] = None


@dataclass
class _LevelOrigin:
    compositions: List[Tuple[str, Tuple[int, ...]]] = field(default_factory=list)
    comp_ids: List[np.ndarray] = field(default_factory=list)
    flats: List[np.ndarray] = field(default_factory=list)

    def finish(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.comp_ids:
            return np.empty(0, dtype=np.int32), np.empty(0, dtype=np.int64)
        return np.concatenate(self.comp_ids), np.concatenate(self.flats)


class FormulaSearch(LoggingMixin):
    """
    Size-layered enumeration of formulas with semantic deduplication.

    Level s holds the functions first reached by a formula with s operator
    applications. Each level is built from the earlier levels, operator by
    operator in name order and argument-size split by split, with argument
    tuples taken in lexicographic order; a function is kept only at its first
    occurrence. Back-pointers rebuild one smallest formula per function.
    """

    def __init__(
        self,
        ops: OperatorsLike,
        width: int,
        num_vars: int,
        *,
        variables: Optional[Sequence[str]] = None,
        config: Optional[Config] = None,
        max_candidates: Optional[int] = None,
        max_members: Optional[int] = None,
    ) -> None:
        self.config = config or Config()
        self.ops = operator_map(ops)
        self.width = common_width(self.ops, width)
        self.space = FunctionSpace(self.width, num_vars)
        self.variables = tuple(variables) if variables else default_variables(num_vars)
        if len(self.variables) != num_vars:
            raise UsageError(f"expected {num_vars} variable names, got {len(self.variables)}")
        self.max_candidates = max_candidates or self.config.SEARCH_MAX_CANDIDATES
        self.max_members = max_members or self.config.CLOSURE_MAX_MEMBERS

        self.index = MemberIndex(self.space)
        self.levels: List[Rows] = []
        self._origins: List[Tuple[List[Tuple[str, Tuple[int, ...]]], np.ndarray, np.ndarray]] = []
        self.candidates = 0
        self.complete = True
        self.reason: Optional[str] = None
        self.constants: List[Tuple[int, int]] = []

        projections = self.space.projections()
        self.index.add(projections)
        self.levels.append(self.index.rows().copy())
        self._origins.append(([], np.empty(0, dtype=np.int32), np.empty(0, dtype=np.int64)))

    @property
    def max_arity(self) -> int:
        return max((op.arity for op in self.ops.values()), default=1)

    def run(self, max_nodes: Optional[int]) -> "FormulaSearch":
        """Grow levels up to `max_nodes`, or until no larger formula can add a function."""
        with PerformanceLogger("formula search", self.logger, ops=",".join(self.ops),
                               width=self.width, vars=self.space.num_vars) as perf:
            size = len(self.levels)
            while self.complete:
                if max_nodes is not None and size > max_nodes:
                    break
                if max_nodes is None and size - 1 > self.max_arity * self._last_nonempty():
                    break
                self._grow(size)
                size += 1
            perf.update(levels=len(self.levels) - 1, functions=len(self.index), candidates=self.candidates)
        return self

    def _last_nonempty(self) -> int:
        return max(s for s, level in enumerate(self.levels) if len(level))

    def _grow(self, size: int) -> None:
        origin = _LevelOrigin()
        new_rows: List[Rows] = []
        threads = self.config.thread_count()

        for name, op in self.ops.items():
            for split in compositions(size - 1, op.arity):
                sizes = [len(self.levels[part]) for part in split]
                count = tuple_count(sizes)
                if count == 0:
                    continue
                if self.candidates + count > self.max_candidates:
                    self._stop(f"candidate budget {self.max_candidates} reached at {size} nodes")
                    break
                comp_id = len(origin.compositions)
                origin.compositions.append((name, split))
                offset = 0
                args = [self.levels[part] for part in split]
                for prepared in apply_product(op, self.space, args, self.config.CHUNK_ELEMENTS, threads):
                    positions = self.index.merge(prepared)
                    if positions.size:
                        new_rows.append(prepared.take(positions))
                        origin.comp_ids.append(np.full(positions.size, comp_id, dtype=np.int32))
                        origin.flats.append(offset + positions.astype(np.int64))
                    offset += prepared.count
                self.candidates += count
                if len(self.index) > self.max_members:
                    self._stop(f"member bound {self.max_members} exceeded at {size} nodes")
                    break
            if not self.complete:
                break

        level = np.concatenate(new_rows) if new_rows else np.empty((0, self.space.points), self.space.dtype)
        comp_ids, flats = origin.finish()
        self.levels.append(level)
        self._origins.append((origin.compositions, comp_ids, flats))
        for i in np.nonzero(FunctionSpace.constant_rows(level))[0]:
            self.constants.append((size, int(i)))
        self.logger.debug("level %d: %d new functions, %d total", size, len(level), len(self.index))

    def _stop(self, reason: str) -> None:
        self.complete = False
        self.reason = reason
        self.logger.warning("Search cut short: %s", reason)

    def node_for(self, level: int, index: int) -> Node:
        if level == 0:
            return Var(self.variables[index])
        comps, comp_ids, flats = self._origins[level]
        name, split = comps[int(comp_ids[index])]
        sizes = [len(self.levels[part]) for part in split]
        positions = unravel(np.array([flats[index]]), sizes)
        return Apply(name, tuple(self.node_for(part, int(pos[0])) for part, pos in zip(split, positions)))

    def formula_for(self, level: int, index: int) -> Formula:
        return Formula(self.node_for(level, index), self.variables)

    def locate(self, row: Rows) -> Optional[Tuple[int, int]]:
        row = np.asarray(row, dtype=self.space.dtype)
        for level, rows in enumerate(self.levels):
            if len(rows):
                hits = np.nonzero(np.all(rows == row, axis=1))[0]
                if hits.size:
                    return level, int(hits[0])
        return None

    def functions(self) -> Rows:
        return self.index.rows()

    def findings(self) -> List[ConstantFinding]:
        findings = []
        for level, index in self.constants:
            formula = self.formula_for(level, index)
            findings.append(ConstantFinding(
                formula=print_formula(formula),
                constant=int(self.levels[level][index][0]),
                coverage="exhaustive",
                assignments=self.space.points,
                width=self.width,
                variables=list(self.variables),
                nodes=level,
            ))
        return findings


def search_constants(
    ops: OperatorsLike,
    width: int,
    num_vars: int,
    max_nodes: Optional[int],
    *,
    config: Optional[Config] = None,
    max_candidates: Optional[int] = None,
) -> SearchResult:
    """
    Every constant function reachable by a formula of at most `max_nodes`
    applications, each with one smallest formula. `max_nodes=None` searches
    until no larger formula can reach a new function.
    """
    search = FormulaSearch(ops, width, num_vars, config=config, max_candidates=max_candidates)
    search.run(max_nodes)
    result = SearchResult(
        operators=list(search.ops),
        width=search.width,
        variables=list(search.variables),
        max_nodes=max_nodes,
        findings=search.findings(),
        distinct_functions=len(search.index),
        new_per_level=[len(level) for level in search.levels[1:]],
        candidates=search.candidates,
        complete=search.complete,
        reason=search.reason,
    )
    logger.info("Search over %s at width %d, %d vars: %d constant findings",
                ",".join(result.operators), width, num_vars, len(result.findings))
    return result


def find_term(
    target: Operator,
    ops: OperatorsLike,
    max_nodes: int,
    *,
    config: Optional[Config] = None,
) -> Optional[Formula]:
    """A formula over `ops` computing `target` on its own argument variables, if one is small enough."""
    search = FormulaSearch(ops, target.width, target.arity, config=config)
    space = search.space
    row = apply_rows(target, space, *[space.projection(v) for v in range(target.arity)])
    search.run(max_nodes)
    found = search.locate(row)
    if found is None:
        return None
    return search.formula_for(*found)
