"""
Extensional function vectors and the vectorized application engine.

A k-variable, width-w function is stored as its output vector over all 2^(w*k)
assignments; assignment i puts the first variable in the low w bits of i, the
second in the next w bits, and so on. Vectors of one space are kept as rows of a
2-D numpy array; when w * 2^(w*k) <= 64 a row also packs into a single uint64
code (entry i in bits [w*i, w*i + w)).
"""

from __future__ import annotations

import logging
import re
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Deque, Iterable, Iterator, List, Optional, Sequence, Set, Tuple, TypeVar

import numpy as np
import numpy.typing as npt

from modules.errors import UsageError
from modules.optable import Operator, check_width, dense_allowed, width_mask

logger = logging.getLogger(__name__)

Rows = npt.NDArray[np.integer]
Codes = npt.NDArray[np.uint64]
T = TypeVar("T")
R = TypeVar("R")

# assignment spaces above this many points are not materialized
MAX_SPACE_BITS = 24


@dataclass(frozen=True, eq=False)
class FunctionVector:
    """Output vector of a k-variable function over every assignment."""

    width: int
    num_vars: int
    outputs: npt.NDArray[np.integer] = field(repr=False)

    def __post_init__(self) -> None:
        outputs = np.array(self.outputs, dtype=np.uint64).ravel()
        if outputs.size != 1 << (self.width * self.num_vars):
            raise UsageError(
                f"a width-{self.width}, {self.num_vars}-variable vector has "
                f"{1 << (self.width * self.num_vars)} entries, got {outputs.size}"
            )
        if outputs.size and int(outputs.max()) > width_mask(self.width):
            raise UsageError(f"vector entry out of range for width {self.width}")
        outputs.setflags(write=False)
        object.__setattr__(self, "outputs", outputs)

    @property
    def code(self) -> int:
        code = 0
        for position, value in enumerate(self.outputs.tolist()):
            code |= int(value) << (self.width * position)
        return code

    @classmethod
    def from_code(cls, code: int, width: int, num_vars: int) -> "FunctionVector":
        points = 1 << (width * num_vars)
        mask = width_mask(width)
        return cls(width, num_vars, [(code >> (width * p)) & mask for p in range(points)])

    def is_constant(self) -> bool:
        return bool(np.all(self.outputs == self.outputs[0]))

    def at(self, *values: int) -> int:
        index = 0
        for position, value in enumerate(values):
            index |= int(value) << (self.width * position)
        return int(self.outputs[index])

    def reduce_width(self, to_width: int) -> "FunctionVector":
        """Image under the ring map Z/2^w -> Z/2^to_width, on inputs and outputs."""
        if not 1 <= to_width <= self.width:
            raise UsageError(f"cannot reduce width {self.width} to {to_width}")
        small = FunctionSpace(to_width, self.num_vars)
        index = np.zeros(small.points, dtype=np.uint64)
        for var, values in enumerate(small.assignments()):
            index |= values << np.uint64(self.width * var)
        reduced = self.outputs[index] & np.uint64(width_mask(to_width))
        # well defined only when the function respects the map; callers check that
        return FunctionVector(to_width, self.num_vars, reduced)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FunctionVector):
            return NotImplemented
        return (
            (self.width, self.num_vars) == (other.width, other.num_vars)
            and bool(np.array_equal(self.outputs, other.outputs))
        )

    def __hash__(self) -> int:
        return hash((self.width, self.num_vars, self.outputs.tobytes()))


class FunctionSpace:
    """All width-w functions of k variables."""

    def __init__(self, width: int, num_vars: int) -> None:
        self.width = check_width(width)
        if num_vars < 1:
            raise UsageError(f"need at least one variable, got {num_vars}")
        if width * num_vars > MAX_SPACE_BITS:
            raise UsageError(
                f"width*vars = {width * num_vars} exceeds {MAX_SPACE_BITS}; the space is too large"
            )
        self.num_vars = num_vars
        self.points = 1 << (width * num_vars)
        self.mask = width_mask(width)
        if width <= 8:
            self.dtype = np.uint8
        elif width <= 16:
            self.dtype = np.uint16
        else:
            self.dtype = np.uint32
        self.packable = width * self.points <= 64
        self._shifts = (np.arange(self.points, dtype=np.uint64) * np.uint64(width)) if self.packable else None

    def __repr__(self) -> str:
        return f"FunctionSpace(width={self.width}, num_vars={self.num_vars})"

    def assignments(self) -> List[npt.NDArray[np.uint64]]:
        """Per variable, its value at every assignment index."""
        index = np.arange(self.points, dtype=np.uint64)
        mask = np.uint64(self.mask)
        return [(index >> np.uint64(self.width * var)) & mask for var in range(self.num_vars)]

    def projection(self, var: int) -> Rows:
        return self.assignments()[var].astype(self.dtype)

    def projections(self) -> Rows:
        return np.stack([self.projection(var) for var in range(self.num_vars)])

    def constants(self, values: Optional[Sequence[int]] = None) -> Rows:
        if values is None:
            values = range(self.mask + 1)
        return np.stack([np.full(self.points, v, dtype=self.dtype) for v in values])

    def vector(self, row: Sequence[int]) -> FunctionVector:
        return FunctionVector(self.width, self.num_vars, np.asarray(row))

    def pack(self, rows: Rows) -> Codes:
        if not self.packable:
            raise UsageError(f"{self!r} does not pack into 64-bit codes")
        wide = rows.astype(np.uint64, copy=False) << self._shifts
        return np.bitwise_or.reduce(wide, axis=1)

    def unpack(self, codes: Codes) -> Rows:
        codes = np.asarray(codes, dtype=np.uint64)
        return ((codes[:, None] >> self._shifts[None, :]) & np.uint64(self.mask)).astype(self.dtype)

    def row_code(self, row: Sequence[int]) -> int:
        code = 0
        for position, value in enumerate(np.asarray(row).tolist()):
            code |= int(value) << (self.width * position)
        return code

    def row_from_code(self, code: int) -> Rows:
        return np.array(
            [(code >> (self.width * p)) & self.mask for p in range(self.points)], dtype=self.dtype
        )

    @staticmethod
    def constant_rows(rows: Rows) -> npt.NDArray[np.bool_]:
        return np.all(rows == rows[:, :1], axis=1)


@dataclass
class PreparedRows:
    """
    A result chunk deduplicated within itself, ready to merge into a MemberIndex.

    The chunk keeps either its rows or, when it came from the packed-lane path,
    its codes; `take` rebuilds rows for the positions that turn out to be new.
    """

    space: FunctionSpace
    first: npt.NDArray[np.intp]
    codes: Optional[Codes] = None
    block_rows: Optional[Rows] = None
    block_codes: Optional[Codes] = None

    @property
    def count(self) -> int:
        block = self.block_rows if self.block_rows is not None else self.block_codes
        return 0 if block is None else int(block.shape[0])

    @property
    def rows(self) -> Rows:
        return self.take(np.arange(self.count))

    def take(self, positions: npt.NDArray[np.integer]) -> Rows:
        if self.block_rows is not None:
            return self.block_rows[positions]
        return self.space.unpack(self.block_codes[positions])


def prepare_rows(space: FunctionSpace, rows: Rows) -> PreparedRows:
    """Pure per-chunk half of MemberIndex.add; safe to run on worker threads."""
    rows = np.ascontiguousarray(rows, dtype=space.dtype)
    if rows.shape[0] == 0:
        return PreparedRows(space, np.empty(0, dtype=np.intp), block_rows=rows)
    if space.packable:
        codes, first = np.unique(space.pack(rows), return_index=True)
        return PreparedRows(space, first, codes, block_rows=rows)
    _, first = np.unique(rows, axis=0, return_index=True)
    return PreparedRows(space, np.sort(first), block_rows=rows)


def prepare_codes(space: FunctionSpace, codes: Codes) -> PreparedRows:
    codes = np.asarray(codes, dtype=np.uint64)
    distinct, first = np.unique(codes, return_index=True)
    return PreparedRows(space, first, distinct, block_codes=codes)


class MemberIndex:
    """Deduplicating store of function rows, with first-occurrence order."""

    def __init__(self, space: FunctionSpace) -> None:
        self.space = space
        self._chunks: List[Rows] = []
        self._size = 0
        if space.packable:
            self._codes = np.empty(0, dtype=np.uint64)
        else:
            self._seen: Set[bytes] = set()

    def __len__(self) -> int:
        return self._size

    def rows(self) -> Rows:
        if not self._chunks:
            return np.empty((0, self.space.points), dtype=self.space.dtype)
        if len(self._chunks) > 1:
            self._chunks = [np.concatenate(self._chunks)]
        return self._chunks[0]

    def codes(self) -> List[int]:
        """Member codes as Python integers, ascending."""
        if self.space.packable:
            return [int(c) for c in self._codes]
        return sorted(self.space.row_code(row) for row in self.rows())

    def contains(self, rows: Rows) -> npt.NDArray[np.bool_]:
        rows = np.atleast_2d(rows)
        if self.space.packable:
            return np.isin(self.space.pack(rows), self._codes)
        return np.array(
            [np.ascontiguousarray(row, dtype=self.space.dtype).tobytes() in self._seen for row in rows],
            dtype=bool,
        )

    def merge(self, prepared: PreparedRows) -> npt.NDArray[np.intp]:
        """Insert a prepared chunk; return the positions (into its rows) of the new members."""
        if prepared.first.size == 0:
            return np.empty(0, dtype=np.intp)
        if self.space.packable:
            fresh = ~np.isin(prepared.codes, self._codes, assume_unique=True)
            positions = np.sort(prepared.first[fresh])
            if positions.size:
                self._codes = np.union1d(self._codes, prepared.codes[fresh])
        else:
            kept = []
            for position in prepared.first:
                key = prepared.block_rows[position].tobytes()
                if key not in self._seen:
                    self._seen.add(key)
                    kept.append(position)
            positions = np.array(kept, dtype=np.intp)
        if positions.size:
            self._chunks.append(prepared.take(positions))
            self._size += int(positions.size)
        return positions

    def add(self, rows: Rows) -> npt.NDArray[np.intp]:
        return self.merge(prepare_rows(self.space, rows))


def tuple_count(sizes: Sequence[int]) -> int:
    total = 1
    for size in sizes:
        total *= int(size)
    return total


# -- packed lanes ------------------------------------------------------------

class PackedLanes:
    """
    Lane-wise arithmetic on packed codes: lane p (bits [w*p, w*p + w)) holds
    entry p, so one uint64 operation acts on every entry of a function at once.
    """

    def __init__(self, space: FunctionSpace) -> None:
        if not space.packable:
            raise UsageError(f"{space!r} does not pack into 64-bit codes")
        w = space.width
        base = sum(1 << (w * p) for p in range(space.points))
        used = base * width_mask(w)
        self.width = w
        self.low = np.uint64(base)
        self.fill = np.uint64(width_mask(w))
        self.high = np.uint64(base << (w - 1))
        self.below_high = np.uint64(used & ~(base << (w - 1)))
        # bits j..w-1 of every lane
        self.upper = [np.uint64(base * (width_mask(w) - width_mask(j))) for j in range(w)]

    def add(self, a: Codes, b: Codes) -> Codes:
        # lane sums below the top bit cannot carry out of their lane
        return ((a & self.below_high) + (b & self.below_high)) ^ ((a ^ b) & self.high)

    def add3(self, a: Codes, b: Codes, c: Codes) -> Codes:
        return self.add(self.add(a, b), c)

    def mul(self, a: Codes, b: Codes) -> Codes:
        """Shift-and-add, one bit of b per step."""
        acc = np.zeros(np.broadcast_shapes(np.shape(a), np.shape(b)), dtype=np.uint64)
        for j in range(self.width):
            shift = np.uint64(j)
            spread = ((b >> shift) & self.low) * self.fill
            acc = self.add(acc, ((a << shift) & self.upper[j]) & spread)
        return acc


_PROJECTION_RULE = re.compile(r"^proj(\d)of\d$")


def lane_kernel(op: Operator, space: FunctionSpace) -> Optional[Callable[..., Codes]]:
    """Packed-code evaluation of `op` on `space`, for the rules that have one."""
    if not space.packable or op.rule is None or op.width != space.width:
        return None
    lanes = PackedLanes(space)
    kernels = {"add2": lanes.add, "add3": lanes.add3, "mul": lanes.mul}
    if op.rule in kernels:
        return kernels[op.rule]
    if op.rule == "identity":
        return lambda a: a
    match = _PROJECTION_RULE.match(op.rule)
    if match:
        position = int(match.group(1)) - 1
        return lambda *args: args[position]
    return None


# -- application engine ------------------------------------------------------

def row_evaluator(op: Operator, space: FunctionSpace) -> Callable[[Sequence[Rows]], Rows]:
    """Pointwise evaluation of `op` on aligned argument rows, returned in the space's dtype."""
    if op.is_dense or dense_allowed(op.width, op.arity):
        table = op.dense_table().astype(space.dtype)
        shift = np.uint32(space.width)

        def lookup(args: Sequence[Rows]) -> Rows:
            index = np.asarray(args[0]).astype(np.uint32)
            for arg in args[1:]:
                index = (index << shift) | np.asarray(arg).astype(np.uint32)
            return table[index]

        return lookup

    def rule(args: Sequence[Rows]) -> Rows:
        return op.apply(*args).astype(space.dtype)

    return rule


def _check_arguments(op: Operator, space: FunctionSpace, args: Sequence[Rows]) -> None:
    if len(args) != op.arity:
        raise UsageError(f"{op.name} takes {op.arity} arguments, got {len(args)}")
    if op.width != space.width:
        raise UsageError(f"{op.name} has width {op.width}, the space has width {space.width}")


def iter_product_positions(sizes: Sequence[int], per_block: int) -> Iterator[Tuple[npt.NDArray[np.intp], ...]]:
    """Per-argument positions of every tuple of the product, first argument slowest, in blocks."""
    total = tuple_count(sizes)
    shape = tuple(int(s) for s in sizes)
    for start in range(0, total, per_block):
        flat = np.arange(start, min(start + per_block, total), dtype=np.int64)
        yield np.unravel_index(flat, shape)


def threaded_map(fn: Callable[[T], R], items: Iterable[T], threads: int) -> Iterator[R]:
    """Ordered map over a bounded window of worker threads."""
    if threads <= 1:
        for item in items:
            yield fn(item)
        return
    window: Deque[Future] = deque()
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for item in items:
            window.append(pool.submit(fn, item))
            if len(window) >= 2 * threads:
                yield window.popleft().result()
        while window:
            yield window.popleft().result()


def apply_product(
    op: Operator,
    space: FunctionSpace,
    args: Sequence[Rows],
    chunk_elements: int,
    threads: int = 1,
) -> Iterator[PreparedRows]:
    """
    Prepared result chunks of `op` applied pointwise to every tuple of the
    product of `args`, in lexicographic order of the tuple (first argument
    slowest). A chunk covers at most chunk_elements / points tuples.
    """
    _check_arguments(op, space, args)
    if any(a.shape[0] == 0 for a in args):
        return
    sizes = [a.shape[0] for a in args]
    kernel = lane_kernel(op, space)

    if kernel is not None:
        codes = [space.pack(a) for a in args]

        def work(positions: Tuple[np.ndarray, ...]) -> PreparedRows:
            return prepare_codes(space, kernel(*[c[p] for c, p in zip(codes, positions)]))

        per_block = max(1, chunk_elements // space.points)
    else:
        evaluate = row_evaluator(op, space)

        def work(positions: Tuple[np.ndarray, ...]) -> PreparedRows:
            return prepare_rows(space, evaluate([a[p] for a, p in zip(args, positions)]))

        # rule evaluation holds every argument in uint64
        widening = 1 if (op.is_dense or dense_allowed(op.width, op.arity)) else op.arity + 1
        per_block = max(1, chunk_elements // (space.points * widening))

    yield from threaded_map(work, iter_product_positions(sizes, per_block), threads)


def apply_rows(op: Operator, space: FunctionSpace, *rows: Rows) -> Rows:
    """Pointwise application to aligned rows (no product)."""
    if len(rows) != op.arity:
        raise UsageError(f"{op.name} takes {op.arity} arguments, got {len(rows)}")
    return row_evaluator(op, space)(rows)


def unravel(positions: npt.NDArray[np.integer], sizes: Sequence[int]) -> Tuple[npt.NDArray[np.intp], ...]:
    return np.unravel_index(np.asarray(positions, dtype=np.int64), tuple(int(s) for s in sizes))
