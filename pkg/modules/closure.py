"""
Fixpoint closures of operator sets over small function spaces, the 2-bit
footnote conditions, and counts of operator tables satisfying the safety
conditions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel

from config import Config
from modules.errors import AluSafeError, ResourceLimitError, UsageError
from modules.expr import OperatorsLike, operator_map, common_width, find_term, print_formula
from modules.function_space import (
    FunctionSpace,
    FunctionVector,
    MemberIndex,
    Rows,
    apply_product,
    threaded_map,
    tuple_count,
)
from modules.logger import LoggingMixin, PerformanceLogger
from modules.optable import Operator, builtin, check_width, width_mask

logger = logging.getLogger(__name__)

SEED_SETS = ("projections", "projections+zero", "projections+constants")

# figures quoted for {mul, add2} at two bits and two variables
REFERENCE_CLOSURE_SIZE = 1282
REFERENCE_AVAILABLE = 4096

CONDITIONS = ("i", "ii", "iii")
REFERENCE_COUNTS: Dict[Tuple[int, int, Tuple[str, ...]], int] = {
    (2, 2, ("i", "ii")): 2 ** 26,
    (2, 2, ("i", "ii", "iii")): 2 ** 22,
}

# brute counting runs unasked up to this many table bits; 32 needs brute=True
BRUTE_AUTO_BITS = 24
BRUTE_MAX_BITS = 32


# -- closure -----------------------------------------------------------------

class FootnoteTally(BaseModel):
    i: int
    ii: int
    iii: int
    iv: int
    v: int
    all_five: int
    all_but_ii: int


class ClosureSummary(BaseModel):
    generators: List[str]
    derived: Dict[str, str]
    seed: str
    width: int
    num_vars: int
    size: int
    iterations: int
    tuples: int
    contains_constant: bool
    constant_count: int
    complete: bool
    reason: Optional[str] = None
    reference_size: Optional[int] = None
    matches_reference: Optional[bool] = None
    footnote: Optional[FootnoteTally] = None
    fixpoint_verified: Optional[bool] = None


@dataclass
class ClosureResult:
    generators: List[str]
    seed: str
    space: FunctionSpace
    index: MemberIndex
    derived: Dict[str, str] = field(default_factory=dict)
    iterations: int = 0
    tuples: int = 0
    complete: bool = True
    reason: Optional[str] = None

    @property
    def width(self) -> int:
        return self.space.width

    @property
    def num_vars(self) -> int:
        return self.space.num_vars

    @property
    def size(self) -> int:
        return len(self.index)

    def rows(self) -> Rows:
        return self.index.rows()

    def codes(self) -> List[int]:
        return self.index.codes()

    def vectors(self) -> Iterable[FunctionVector]:
        for row in self.rows():
            yield self.space.vector(row)

    @property
    def constant_count(self) -> int:
        rows = self.rows()
        return int(np.count_nonzero(FunctionSpace.constant_rows(rows))) if len(rows) else 0

    @property
    def contains_constant(self) -> bool:
        return self.constant_count > 0

    def summary(self) -> ClosureSummary:
        names = sorted(set(self.generators) | set(self.derived))
        reference = None
        if (self.width, self.num_vars) == (2, 2) and names == ["add2", "mul"]:
            reference = REFERENCE_CLOSURE_SIZE
        return ClosureSummary(
            generators=self.generators,
            derived=self.derived,
            seed=self.seed,
            width=self.width,
            num_vars=self.num_vars,
            size=self.size,
            iterations=self.iterations,
            tuples=self.tuples,
            contains_constant=self.contains_constant,
            constant_count=self.constant_count,
            complete=self.complete,
            reason=self.reason,
            reference_size=reference,
            matches_reference=None if reference is None else self.size == reference,
            footnote=footnote_tally(self.rows()) if (self.width, self.num_vars) == (2, 2) else None,
        )


def seed_rows(space: FunctionSpace, seed_set: str) -> Rows:
    if seed_set not in SEED_SETS:
        raise UsageError(f"unknown seed set {seed_set!r}; choose one of {', '.join(SEED_SETS)}")
    parts = [space.projections()]
    if seed_set == "projections+zero":
        parts.append(space.constants([0]))
    elif seed_set == "projections+constants":
        parts.append(space.constants())
    return np.concatenate(parts)


class ClosureEngine(LoggingMixin):
    """
    Semi-naive fixpoint iteration.

    Each round applies every kept generator to the argument tuples that use at
    least one member added in the previous round; the tuple with the first new
    member in position j draws earlier positions from the older members only.
    Generators invariant under argument permutation use position 0 alone.
    """

    def __init__(
        self,
        ops: OperatorsLike,
        width: int,
        num_vars: int,
        *,
        seed_set: str = "projections",
        config: Optional[Config] = None,
        max_members: Optional[int] = None,
        max_tuples: Optional[int] = None,
        prune: bool = True,
    ) -> None:
        self.config = config or Config()
        self.ops = operator_map(ops)
        self.width = common_width(self.ops, width)
        self.space = FunctionSpace(self.width, num_vars)
        self.seed_set = seed_set
        self.max_members = max_members or self.config.CLOSURE_MAX_MEMBERS
        self.max_tuples = max_tuples or self.config.CLOSURE_MAX_TUPLES
        self.prune = prune

    def derived_generators(self) -> Tuple[List[Operator], Dict[str, str]]:
        """Drop generators that are small terms over the remaining ones."""
        kept = sorted(self.ops.values(), key=lambda op: (-op.arity, op.name))
        derived: Dict[str, str] = {}
        if not self.prune:
            return sorted(kept, key=lambda op: op.name), derived
        for op in list(kept):
            others = [o for o in kept if o is not op]
            term = find_term(op, others, self.config.DERIVED_GENERATOR_MAX_NODES, config=self.config)
            if term is not None:
                derived[op.name] = print_formula(term)
                kept.remove(op)
                self.logger.info("Generator %s is derived: %s", op.name, derived[op.name])
        return sorted(kept, key=lambda op: op.name), derived

    def run(self) -> ClosureResult:
        generators, derived = self.derived_generators()
        index = MemberIndex(self.space)
        index.add(seed_rows(self.space, self.seed_set))
        result = ClosureResult(
            generators=[op.name for op in generators],
            seed=self.seed_set,
            space=self.space,
            index=index,
            derived=derived,
        )
        threads = self.config.thread_count()
        old = np.empty((0, self.space.points), dtype=self.space.dtype)
        delta = index.rows().copy()
        self._partials = {
            op.name: MemberIndex(self.space) for op in generators if op.staging() is not None
        }

        with PerformanceLogger("closure", self.logger, ops=",".join(self.ops), width=self.width,
                               vars=self.space.num_vars) as perf:
            while len(delta) and result.complete:
                members = index.rows()
                found: List[Rows] = []
                for op in generators:
                    for operator, args, sink in self._jobs(op, old, delta, members, index):
                        count = tuple_count(len(a) for a in args)
                        if count == 0:
                            continue
                        if result.tuples + count > self.max_tuples:
                            self._stop(result, f"tuple budget {self.max_tuples} reached in round {result.iterations + 1}")
                            break
                        for prepared in apply_product(operator, self.space, args, self.config.CHUNK_ELEMENTS, threads):
                            positions = sink.merge(prepared)
                            if positions.size and sink is index:
                                found.append(prepared.take(positions))
                        result.tuples += count
                        if max(len(index), len(sink)) > self.max_members:
                            self._stop(result, f"member bound {self.max_members} exceeded")
                            break
                    if not result.complete:
                        break
                if not found:
                    break
                result.iterations += 1
                old, delta = members, np.concatenate(found)
                self.logger.debug("round %d: %d new, %d members", result.iterations, len(delta), len(index))
            perf.update(size=result.size, rounds=result.iterations, tuples=result.tuples, complete=result.complete)
        return result

    def _jobs(
        self, op: Operator, old: Rows, delta: Rows, members: Rows, index: MemberIndex
    ) -> Iterator[Tuple[Operator, List[Rows], MemberIndex]]:
        """
        Products to evaluate for `op` this round, each with the index it feeds.

        A fold r(r(x, y), z) of a commutative r goes through the set of all
        r(x, y) over members, grown by r(delta, members) before every round's
        r(pairs, delta).
        """
        inner = op.staging()
        if inner is None:
            for args in self._argument_lists(op, old, delta, members):
                yield op, args, index
            return
        partial = self._partials[op.name]
        yield inner, [delta, members], partial
        yield inner, [partial.rows(), delta], index

    @staticmethod
    def _argument_lists(op: Operator, old: Rows, delta: Rows, members: Rows) -> List[List[Rows]]:
        if op.is_commutative():
            return [[delta] + [members] * (op.arity - 1)]
        return [
            [old] * position + [delta] + [members] * (op.arity - 1 - position)
            for position in range(op.arity)
        ]

    def _stop(self, result: ClosureResult, reason: str) -> None:
        result.complete = False
        result.reason = reason
        self.logger.warning("Closure cut short: %s", reason)


def close(
    ops: OperatorsLike,
    width: int,
    num_vars: int,
    *,
    seed_set: str = "projections",
    config: Optional[Config] = None,
    max_members: Optional[int] = None,
    max_tuples: Optional[int] = None,
    prune: bool = True,
) -> ClosureResult:
    """Smallest set of k-variable functions holding the seed and closed under every generator."""
    engine = ClosureEngine(
        ops, width, num_vars,
        seed_set=seed_set, config=config, max_members=max_members, max_tuples=max_tuples, prune=prune,
    )
    return engine.run()


def members_from_codes(codes: Iterable[int], width: int, num_vars: int) -> MemberIndex:
    space = FunctionSpace(width, num_vars)
    index = MemberIndex(space)
    rows = [space.row_from_code(int(code)) for code in codes]
    if rows:
        index.add(np.stack(rows))
    return index


def verify_fixpoint(
    members: Union[ClosureResult, MemberIndex],
    ops: OperatorsLike,
    *,
    config: Optional[Config] = None,
) -> bool:
    """True when every generator applied to every tuple of members lands in the set."""
    config = config or Config()
    index = members.index if isinstance(members, ClosureResult) else members
    space = index.space
    rows = index.rows()
    for name, op in operator_map(ops).items():
        inner = op.staging()
        args = [rows] * op.arity
        if inner is not None:
            pairs = MemberIndex(space)
            for prepared in apply_product(inner, space, [rows, rows], config.CHUNK_ELEMENTS, config.thread_count()):
                pairs.merge(prepared)
            op, args = inner, [pairs.rows(), rows]
        for prepared in apply_product(op, space, args, config.CHUNK_ELEMENTS, config.thread_count()):
            if not np.all(index.contains(prepared.take(prepared.first))):
                logger.info("Fixpoint check failed for generator %s", name)
                return False
    return True


def reduce_width_image(members: Union[ClosureResult, MemberIndex], to_width: int) -> MemberIndex:
    """Images of the members under reduction mod 2^to_width, deduplicated."""
    index = members.index if isinstance(members, ClosureResult) else members
    space = index.space
    small = FunctionSpace(to_width, space.num_vars)
    if to_width > space.width:
        raise UsageError(f"cannot reduce width {space.width} to {to_width}")
    positions = np.zeros(small.points, dtype=np.int64)
    for var, values in enumerate(small.assignments()):
        positions |= values.astype(np.int64) << (space.width * var)
    image = MemberIndex(small)
    rows = index.rows()
    if len(rows):
        image.add((rows[:, positions] & width_mask(to_width)).astype(small.dtype))
    return image


def dump_closure(members: Union[ClosureResult, Iterable[int]], path: Union[str, Path]) -> int:
    """One decimal member code per line, ascending; returns the line count."""
    codes = members.codes() if isinstance(members, ClosureResult) else sorted(int(c) for c in members)
    text = "".join(f"{code}\n" for code in codes)
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise AluSafeError(f"cannot write closure dump {path}: {exc}") from exc
    logger.debug("Wrote %d closure members to %s", len(codes), path)
    return len(codes)


def load_closure(path: Union[str, Path]) -> List[int]:
    try:
        lines = Path(path).read_text(encoding="utf-8").split()
    except OSError as exc:
        raise AluSafeError(f"cannot read closure dump {path}: {exc}") from exc
    try:
        return [int(line) for line in lines]
    except ValueError as exc:
        raise UsageError(f"{path}: closure dumps hold one decimal code per line") from exc


# -- footnote conditions -----------------------------------------------------

class FootnoteFlags(BaseModel):
    i: bool
    ii: bool
    iii: bool
    iv: bool
    v: bool

    def all(self) -> bool:
        return self.i and self.ii and self.iii and self.iv and self.v


def _footnote_arrays(rows: np.ndarray) -> Dict[str, np.ndarray]:
    """Flags for many 2-bit, 2-variable rows; entry x + 4y holds f(x, y)."""
    f = rows.astype(np.int64).reshape(-1, 4, 4)  # f[:, y, x]

    def at(x: int, y: int) -> np.ndarray:
        return f[:, y % 4, x % 4]

    odd = [at(x, y) for x in (1, 3) for y in (1, 3)]
    even = [at(x, y) for x in (0, 2) for y in (0, 2)]
    flags = {
        "i": at(0, 0) == 0,
        "ii": np.all([v % 2 == 1 for v in odd], axis=0),
        "iii": np.all([v % 2 == 0 for v in even], axis=0),
    }
    iv, v = [], []
    for x in (0, 1):
        for y in (0, 1):
            corner = [at(x, y), at(x + 2, y), at(x, y + 2), at(x + 2, y + 2)]
            parities = [c % 2 for c in corner]
            iv.append(np.all([p == parities[0] for p in parities], axis=0))
            v.append(((corner[2] - corner[0]) % 4 == (corner[3] - corner[1]) % 4)
                     & ((corner[1] - corner[0]) % 4 == (corner[3] - corner[2]) % 4))
    flags["iv"] = np.all(iv, axis=0)
    flags["v"] = np.all(v, axis=0)
    return flags


def footnote_conditions(fv: Union[FunctionVector, Sequence[int]]) -> FootnoteFlags:
    """
    The five 2-bit conditions: (i) f(0,0)=0, (ii) odd-odd gives odd, (iii)
    even-even gives even, (iv) f(x,y), f(x+2,y), f(x,y+2), f(x+2,y+2) share a
    parity, (v) differences along opposite edges of that square agree mod 4.
    """
    if isinstance(fv, FunctionVector):
        if (fv.width, fv.num_vars) != (2, 2):
            raise UsageError(f"footnote conditions need width 2 and 2 variables, got {fv.width} and {fv.num_vars}")
        outputs = fv.outputs
    else:
        outputs = np.asarray(fv)
        if outputs.shape != (16,):
            raise UsageError(f"footnote conditions need a 16-entry vector, got shape {outputs.shape}")
    flags = _footnote_arrays(np.asarray(outputs).reshape(1, 16))
    return FootnoteFlags(**{name: bool(values[0]) for name, values in flags.items()})


def footnote_tally(rows: Rows) -> FootnoteTally:
    if len(rows) == 0:
        return FootnoteTally(i=0, ii=0, iii=0, iv=0, v=0, all_five=0, all_but_ii=0)
    flags = _footnote_arrays(np.asarray(rows))
    but_ii = flags["i"] & flags["iii"] & flags["iv"] & flags["v"]
    return FootnoteTally(
        **{name: int(np.count_nonzero(values)) for name, values in flags.items()},
        all_five=int(np.count_nonzero(but_ii & flags["ii"])),
        all_but_ii=int(np.count_nonzero(but_ii)),
    )


class FootnoteCount(BaseModel):
    count: int
    per_coset: Dict[str, int]
    reference_closure_size: int = REFERENCE_CLOSURE_SIZE
    reference_available: int = REFERENCE_AVAILABLE


def count_footnote_tables() -> FootnoteCount:
    """
    Number of 2-bit, 2-input tables satisfying all five footnote conditions.

    Every condition relates only entries whose inputs agree mod 2, so the four
    cosets (x mod 2, y mod 2) are counted one at a time, with the other cosets
    held at mul's entries, and the counts multiplied.
    """
    base = FunctionSpace(2, 2).vector(
        builtin("mul", 2).apply(*FunctionSpace(2, 2).assignments())
    ).outputs.astype(np.int64)
    if not footnote_conditions(base).all():
        raise AluSafeError("mul should satisfy the footnote conditions")

    choices = np.array(np.meshgrid(*[np.arange(4)] * 4, indexing="ij")).reshape(4, -1).T
    per_coset: Dict[str, int] = {}
    total = 1
    for a in (0, 1):
        for b in (0, 1):
            cells = [(a + 2 * s) + 4 * (b + 2 * t) for s in (0, 1) for t in (0, 1)]
            rows = np.tile(base, (len(choices), 1))
            rows[:, cells] = choices
            flags = _footnote_arrays(rows)
            ok = flags["i"] & flags["ii"] & flags["iii"] & flags["iv"] & flags["v"]
            per_coset[f"({a},{b})"] = count = int(np.count_nonzero(ok))
            total *= count
    return FootnoteCount(count=total, per_coset=per_coset)


# -- counting tables ---------------------------------------------------------

class CountResult(BaseModel):
    width: int
    arity: int
    conditions: List[str]
    analytic: int
    brute: Optional[int] = None
    brute_skipped: Optional[str] = None
    agree: Optional[bool] = None
    total_tables: int
    reference: Optional[int] = None
    matches_reference: Optional[bool] = None


def normalize_conditions(conditions: Iterable[str]) -> Tuple[str, ...]:
    chosen = {c.strip().lower() for c in conditions if c.strip()}
    unknown = chosen - set(CONDITIONS)
    if unknown:
        raise UsageError(f"unknown conditions {sorted(unknown)}; choose from {', '.join(CONDITIONS)}")
    return tuple(c for c in CONDITIONS if c in chosen)


def count_analytic(width: int, arity: int, conditions: Sequence[str]) -> int:
    """Product of per-entry output choices over the input classes."""
    conditions = normalize_conditions(conditions)
    values = 1 << width
    half = values // 2
    odd_tuples = 1 << ((width - 1) * arity)
    even_tuples = odd_tuples
    mixed = (1 << (width * arity)) - odd_tuples - even_tuples

    if "i" in conditions:
        zero_choices = 1
    elif "iii" in conditions:
        zero_choices = half
    else:
        zero_choices = values
    odd_choices = half if "ii" in conditions else values
    even_choices = half if "iii" in conditions else values
    return zero_choices * odd_choices ** odd_tuples * even_choices ** (even_tuples - 1) * values ** mixed


class BruteCounter(LoggingMixin):
    """Streams every table code of a width/arity and counts those meeting the conditions."""

    def __init__(self, width: int, arity: int, conditions: Sequence[str], config: Optional[Config] = None) -> None:
        self.config = config or Config()
        self.width = width
        self.arity = arity
        self.conditions = normalize_conditions(conditions)
        self.entries = 1 << (width * arity)
        self.bits = width * self.entries
        if self.bits > BRUTE_MAX_BITS:
            raise ResourceLimitError(f"{self.bits}-bit table codes are too many to enumerate")

        low = [1 << (width * p) for p in range(self.entries)]
        odd = [p for p in range(self.entries) if self._all_low_bits(p, 1)]
        even = [p for p in range(1, self.entries) if self._all_low_bits(p, 0)]
        self.zero_mask = width_mask(width)
        self.odd_low = sum(low[p] for p in odd)
        self.even_low = sum(low[p] for p in even)
        if "iii" in self.conditions and "i" not in self.conditions:
            self.even_low |= low[0]

    def _all_low_bits(self, position: int, bit: int) -> bool:
        return all(((position >> (self.width * j)) & 1) == bit for j in range(self.arity))

    def _count_block(self, start: int) -> int:
        stop = min(start + self.config.BRUTE_BLOCK, 1 << self.bits)
        codes = np.arange(start, stop, dtype=np.uint32 if self.bits <= 32 else np.uint64)
        dtype = codes.dtype.type
        ok = np.ones(codes.shape, dtype=bool)
        if "i" in self.conditions:
            ok &= (codes & dtype(self.zero_mask)) == 0
        if "ii" in self.conditions:
            ok &= (codes & dtype(self.odd_low)) == dtype(self.odd_low)
        if "iii" in self.conditions:
            ok &= (codes & dtype(self.even_low)) == 0
        return int(np.count_nonzero(ok))

    def count(self) -> int:
        with PerformanceLogger("brute table count", self.logger, width=self.width, arity=self.arity,
                               conditions=",".join(self.conditions)) as perf:
            starts = range(0, 1 << self.bits, self.config.BRUTE_BLOCK)
            total = sum(threaded_map(self._count_block, starts, self.config.thread_count()))
            perf.update(tables=1 << self.bits, matching=total)
        return total


def count_tables(
    width: int,
    arity: int,
    conditions: Iterable[str],
    *,
    brute: Optional[bool] = None,
    config: Optional[Config] = None,
) -> CountResult:
    """
    Tables of the given width and arity meeting the chosen conditions among i, ii, iii.

    The brute count runs by default when table codes have at most 24 bits;
    `brute=True` allows up to 32 bits (every 2-bit binary table) and
    `brute=False` skips it.
    """
    check_width(width)
    if arity not in (1, 2, 3):
        raise UsageError(f"arity must be 1, 2 or 3, got {arity}")
    chosen = normalize_conditions(conditions)
    bits = width * (1 << (width * arity))

    analytic = count_analytic(width, arity, chosen)
    brute_value, skipped = None, None
    if brute is False:
        skipped = "disabled"
    elif bits > BRUTE_MAX_BITS:
        skipped = f"{bits}-bit table codes exceed {BRUTE_MAX_BITS} bits"
    elif brute is None and bits > BRUTE_AUTO_BITS:
        skipped = f"{bits}-bit table codes need brute force enabled explicitly"
    else:
        brute_value = BruteCounter(width, arity, chosen, config).count()

    reference = REFERENCE_COUNTS.get((width, arity, chosen))
    decided = brute_value if brute_value is not None else analytic
    return CountResult(
        width=width,
        arity=arity,
        conditions=list(chosen),
        analytic=analytic,
        brute=brute_value,
        brute_skipped=skipped,
        agree=None if brute_value is None else brute_value == analytic,
        total_tables=1 << bits,
        reference=reference,
        matches_reference=None if reference is None else decided == reference,
    )
