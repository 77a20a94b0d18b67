import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modules.errors import DomainError, OperatorFileError, UsageError
from modules.expr import eval_formula
from modules.optable import (
    BUILTIN_RULES,
    Operator,
    builtin,
    corrected_quotient,
    correction_check,
    div_classical,
    dump_operator,
    load_operator,
    odd_inverse,
    operator_set,
    parity_collapse,
    parse_operator,
    resolve_operator,
    safe_div,
    save_operator,
    scalar_mul_formula,
)

widths = st.integers(min_value=1, max_value=8)


@st.composite
def width_and_pair(draw, max_width=8):
    width = draw(st.integers(min_value=1, max_value=max_width))
    x = draw(st.integers(min_value=0, max_value=(1 << width) - 1))
    y = draw(st.integers(min_value=0, max_value=(1 << width) - 1))
    return width, x, y


def test_table_is_row_major_with_first_argument_most_significant():
    first = Operator.from_table("f", 2, 2, [i >> 2 for i in range(16)])
    second = Operator.from_table("g", 2, 2, [i & 3 for i in range(16)])
    assert first.eval((1, 2)) == 1
    assert second.eval((1, 2)) == 2
    assert first.eval((3, 0)) == 3
    assert second.eval((3, 0)) == 0
    assert first.tuple_of(6) == (1, 2)
    assert first.index_of((1, 2)) == 6


def test_table_validation():
    with pytest.raises(UsageError):
        Operator.from_table("f", 2, 2, [0] * 15)
    with pytest.raises(UsageError):
        Operator.from_table("f", 2, 1, [0, 1, 2, 4])
    with pytest.raises(UsageError):
        Operator.from_table("f", 9, 2, [0] * (1 << 18))
    with pytest.raises(UsageError):
        Operator.from_table("2f", 1, 1, [0, 1])


def test_eval_rejects_bad_inputs():
    op = builtin("mul", 3)
    with pytest.raises(UsageError):
        op.eval((1,))
    with pytest.raises(UsageError):
        op.eval((8, 1))
    with pytest.raises(UsageError):
        op.eval((True, 1))


def test_builtin_unknown_name():
    with pytest.raises(UsageError, match="unknown operator"):
        builtin("pow", 4)


@given(width_and_pair(max_width=32))
def test_arithmetic_builtins_wrap(args):
    width, x, y = args
    mask = (1 << width) - 1
    assert builtin("mul", width).eval((x, y)) == (x * y) & mask
    assert builtin("add2", width).eval((x, y)) == (x + y) & mask
    assert builtin("add3", width).eval((x, y, x)) == (2 * x + y) & mask


@given(width_and_pair(max_width=32))
def test_division_builtins_match_scalar_definitions(args):
    width, x, y = args
    assert builtin("div_classical", width).eval((x, y)) == div_classical(x, y)
    assert builtin("safe_div", width).eval((x, y)) == safe_div(x, y, width)


def test_division_by_zero_is_zero():
    assert div_classical(7, 0) == 0
    assert builtin("div_classical", 4).eval((9, 0)) == 0
    assert safe_div(0, 0, 4) == 0


def test_safe_div_bumps_even_quotients_of_odd_operands():
    assert div_classical(1, 3) == 0
    assert safe_div(1, 3, 4) == 1
    assert safe_div(9, 3, 4) == 3
    assert safe_div(15, 5, 4) == 3
    assert safe_div(15, 1, 4) == 15


@given(width_and_pair(max_width=16))
def test_safe_div_maps_odd_pairs_to_odd(args):
    width, x, y = args
    x |= 1
    y |= 1
    assert safe_div(x, y, width) % 2 == 1


@given(width_and_pair(max_width=16))
def test_corrected_quotient_recovers_classical(args):
    width, x, y = args
    if y == 0:
        y = 1
    q = safe_div(x, y, width)
    assert corrected_quotient(x, y, q) == div_classical(x, y)
    assert correction_check(x, y, q) == (q != div_classical(x, y))


def test_correction_check_needs_nonzero_divisor():
    with pytest.raises(DomainError):
        correction_check(3, 0, 0)


@given(widths, st.integers(min_value=0, max_value=255))
def test_parity_collapse_is_one_on_odd_and_zero_on_even(width, x):
    x &= (1 << width) - 1
    assert parity_collapse(x, width) == x % 2
    assert builtin("parity_collapse", width).eval((x,)) == x % 2


def all_pairs(width):
    values = np.arange(1 << width, dtype=np.uint64)
    x, y = np.meshgrid(values, values, indexing="ij")
    return x.ravel(), y.ravel()


@pytest.mark.parametrize("width", range(1, 9))
def test_safe_div_is_safe_on_every_pair(width):
    x, y = all_pairs(width)
    q = builtin("safe_div", width).apply(x, y)
    assert int(builtin("safe_div", width).eval((0, 0))) == 0
    odd = ((x & np.uint64(1)) == 1) & ((y & np.uint64(1)) == 1)
    assert np.all(q[odd] & np.uint64(1) == 1)
    assert np.all(q <= np.uint64((1 << width) - 1))


@pytest.mark.parametrize("width", range(1, 9))
def test_correction_check_flags_exactly_the_bumped_quotients(width):
    x, y = all_pairs(width)
    keep = y != 0
    x, y = x[keep], y[keep]
    q = builtin("safe_div", width).apply(x, y)
    classical = builtin("div_classical", width).apply(x, y)
    for xi, yi, qi, ci in zip(x.tolist(), y.tolist(), q.tolist(), classical.tolist()):
        assert correction_check(xi, yi, qi) == (qi != ci)
        assert corrected_quotient(xi, yi, qi) == ci


@pytest.mark.parametrize("width", range(1, 17))
def test_parity_collapse_on_every_value(width):
    x = np.arange(1 << width, dtype=np.uint64)
    assert np.array_equal(builtin("parity_collapse", width).apply(x), x & np.uint64(1))
    if width <= 8:
        assert [parity_collapse(v, width) for v in range(1 << width)] == [v & 1 for v in range(1 << width)]


def test_parity_collapse_on_sampled_32_bit_values():
    x = np.random.default_rng(32).integers(0, 1 << 32, size=10 ** 6, dtype=np.uint64)
    assert np.array_equal(builtin("parity_collapse", 32).apply(x), x & np.uint64(1))


def test_add3_folds_add2():
    assert builtin("add3", 4).staging().same_as(builtin("add2", 4))
    assert builtin("mul", 4).staging() is None
    assert Operator.from_table("t", 1, 3, [0] * 8).staging() is None


def test_projections_and_comparisons():
    assert builtin("proj2of3", 3).eval((1, 5, 7)) == 5
    assert builtin("proj1of1", 3).eval((6,)) == 6
    assert builtin("lt", 4).eval((3, 9)) == 1
    assert builtin("lt", 4).eval((9, 3)) == 0
    assert builtin("eq", 4).eval((0, 0)) == 1


def test_dense_table_agrees_with_rule():
    op = builtin("div_classical", 3)
    dense = op.tabulate("d")
    assert dense.is_dense
    assert dense.same_as(op)
    x, y = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    assert np.array_equal(dense.apply(x.ravel(), y.ravel()), op.apply(x.ravel(), y.ravel()))


def test_is_commutative():
    assert builtin("mul", 3).is_commutative()
    assert builtin("add3", 2).tabulate("t").is_commutative()
    assert not builtin("div_classical", 3).is_commutative()
    assert not builtin("proj1of3", 2).is_commutative()


def test_operator_set_requires_one_width():
    with pytest.raises(UsageError, match="width"):
        operator_set([builtin("mul", 2), builtin("add3", 3)])
    with pytest.raises(UsageError, match="two different operators"):
        operator_set([builtin("mul", 2), builtin("add2", 2).renamed("mul")])
    assert list(operator_set([builtin("mul", 2), builtin("add3", 2)])) == ["add3", "mul"]


@given(widths, st.integers(min_value=0, max_value=127))
def test_odd_inverse(width, half):
    value = (2 * half + 1) & ((1 << width) - 1)
    assert (value * odd_inverse(value, width)) % (1 << width) == 1


def test_odd_inverse_rejects_even():
    with pytest.raises(DomainError):
        odd_inverse(4, 8)


@pytest.mark.parametrize("compact", [False, True])
@pytest.mark.parametrize("n", [1, 3, 5, 7, 9, 11, 13, 255, 1001])
def test_scalar_mul_formula(n, compact):
    width = 16
    ops = [builtin("add3", width)]
    formula = scalar_mul_formula(n, "x", width, compact=compact)
    for x in (0, 1, 2, 3, 12345, 65535):
        assert eval_formula(formula, {"x": x}, ops) == (n * x) % (1 << width)
    assert formula.operators() <= {"add3"}


def test_scalar_mul_compact_form_stays_small():
    plain = scalar_mul_formula(2 ** 12 + 1, "x", 16)
    compact = scalar_mul_formula(2 ** 12 + 1, "x", 16, compact=True)
    assert plain.distinct_applications == 2 ** 11
    assert compact.distinct_applications <= 2 * 13
    assert compact.size == plain.size


def test_scalar_mul_formula_rejects_even_or_oversized():
    with pytest.raises(DomainError):
        scalar_mul_formula(4, "x")
    with pytest.raises(DomainError):
        scalar_mul_formula(17, "x", 4)


def test_operator_file_round_trip(tmp_path):
    op = builtin("safe_div", 2).tabulate("sd")
    path = tmp_path / "sd.json"
    save_operator(op, path)
    loaded = load_operator(path)
    assert loaded.name == "sd"
    assert loaded.same_as(op)
    assert resolve_operator(str(path), 2).same_as(op)


@pytest.mark.parametrize("document, location", [
    ({"name": "f", "width": 2, "arity": 2, "table": [0] * 15}, "table"),
    ({"name": "f", "width": 2, "arity": 1, "table": [0, 1, 2, 7]}, "table[3]"),
    ({"name": "f", "width": 0, "arity": 1, "table": [0]}, "width"),
    ({"name": "f", "width": 2, "arity": 4, "table": [0]}, "arity"),
    ({"width": 2, "arity": 1, "table": [0, 1, 2, 3]}, "name"),
    ({"name": "f", "width": 2, "arity": 1, "table": ["a", 1, 2, 3]}, "table[0]"),
])
def test_operator_file_errors_name_the_location(document, location):
    with pytest.raises(OperatorFileError) as excinfo:
        parse_operator(json.dumps(document), "op.json")
    assert excinfo.value.location == location
    assert "op.json" in str(excinfo.value)


def test_operator_file_bad_json():
    with pytest.raises(OperatorFileError, match="line 1"):
        parse_operator("{not json", "broken.json")


def test_dump_operator_is_dense_json():
    document = json.loads(dump_operator(builtin("add2", 1)))
    assert document == {"name": "add2", "width": 1, "arity": 2, "table": [0, 1, 1, 0]}


def test_resolve_operator_needs_width_for_builtins():
    with pytest.raises(UsageError, match="width"):
        resolve_operator("mul")
    assert resolve_operator("mul", 3).width == 3


def test_every_builtin_arity_matches_its_rule():
    for name, rule in BUILTIN_RULES.items():
        op = builtin(name, 2)
        assert op.arity == rule.arity
        assert op.dense_table().size == 1 << (2 * rule.arity)
