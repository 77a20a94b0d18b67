import itertools

import numpy as np
import pytest

from modules.closure import (
    REFERENCE_CLOSURE_SIZE,
    BruteCounter,
    close,
    count_analytic,
    count_footnote_tables,
    count_tables,
    dump_closure,
    footnote_conditions,
    load_closure,
    members_from_codes,
    reduce_width_image,
    verify_fixpoint,
)
from modules.errors import ResourceLimitError, UsageError
from modules.expr import tabulate_formula
from modules.function_space import FunctionSpace
from modules.optable import builtin


def ops_at(width, *names):
    return [builtin(name, width) for name in names]


@pytest.mark.parametrize("names, width, num_vars, size", [
    (("mul", "add3"), 2, 1, 8),
    (("mul", "add3"), 3, 1, 64),
    (("mul", "add3"), 1, 2, 4),
    ((), 2, 2, 2),
    (("mul",), 2, 1, 3),
])
def test_closure_sizes(names, width, num_vars, size, config):
    result = close(ops_at(width, *names), width, num_vars, config=config)
    assert result.complete
    assert result.size == size
    assert verify_fixpoint(result, ops_at(width, *names), config=config)


@pytest.mark.parametrize("names, width, num_vars", [
    (("mul", "add3"), 2, 1),
    (("mul", "add3"), 3, 1),
    (("mul", "add3"), 1, 2),
    (("mul", "safe_div", "add3"), 2, 1),
    (("parity_collapse", "mul"), 3, 1),
])
def test_closures_of_safe_operators_hold_no_constant(names, width, num_vars, config):
    result = close(ops_at(width, *names), width, num_vars, config=config)
    assert result.complete
    assert not result.contains_constant
    rows = result.rows()
    assert np.all(rows[:, 0] == 0)


def test_unsafe_closure_contains_zero(config):
    result = close(ops_at(2, "mul", "add2"), 2, 1, config=config)
    assert result.contains_constant
    assert result.constant_count == 1


def test_seed_sets(config):
    ops = ops_at(2, "mul", "add3")
    plain = close(ops, 2, 1, config=config)
    with_zero = close(ops, 2, 1, seed_set="projections+zero", config=config)
    with_constants = close(ops, 2, 1, seed_set="projections+constants", config=config)
    assert with_zero.size > plain.size
    assert with_zero.contains_constant
    assert with_constants.size >= with_zero.size
    with pytest.raises(UsageError, match="seed set"):
        close(ops, 2, 1, seed_set="everything", config=config)


def test_pruning_drops_derivable_generators(config):
    ops = ops_at(2, "mul", "add2", "add3")
    pruned = close(ops, 2, 1, config=config)
    full = close(ops, 2, 1, config=config, prune=False)
    assert "add3" in pruned.derived
    assert "add3" not in pruned.generators
    assert pruned.codes() == full.codes()


def test_closure_is_independent_of_chunking_and_threads(config):
    ops = ops_at(2, "mul", "add3")
    reference = close(ops, 2, 1, config=config).codes()
    config.CHUNK_ELEMENTS = 16
    config.THREADS = 3
    assert close(ops, 2, 1, config=config).codes() == reference


def test_members_are_formula_functions(config):
    ops = ops_at(2, "mul", "add3")
    result = close(ops, 2, 1, config=config)
    assert tabulate_formula("(add3 x x (mul x x))", ops).outputs.tolist() in [
        vector.outputs.tolist() for vector in result.vectors()
    ]


def test_budget_marks_result_incomplete(config):
    result = close(ops_at(2, "mul", "add3"), 2, 2, config=config, max_tuples=1000)
    assert not result.complete
    assert "tuple budget" in result.reason
    summary = result.summary()
    assert not summary.complete
    assert summary.reason == result.reason


def test_member_bound_marks_result_incomplete(config):
    result = close(ops_at(3, "mul", "add3"), 3, 1, config=config, max_members=10)
    assert not result.complete
    assert "member bound" in result.reason


def test_width_reduction_of_closure(config):
    wide = close(ops_at(3, "mul", "add3"), 3, 1, config=config)
    narrow = close(ops_at(2, "mul", "add3"), 2, 1, config=config)
    image = reduce_width_image(wide, 2)
    assert image.codes() == narrow.codes()


def test_dump_and_load(tmp_path, config):
    ops = ops_at(2, "mul", "add3")
    result = close(ops, 2, 1, config=config)
    path = tmp_path / "closure.txt"
    assert dump_closure(result, path) == 8
    codes = load_closure(path)
    assert codes == sorted(codes)
    assert verify_fixpoint(members_from_codes(codes, 2, 1), ops, config=config)


def test_non_closed_set_fails_fixpoint_check(config):
    index = members_from_codes([FunctionSpace(2, 1).row_code([0, 1, 2, 3])], 2, 1)
    assert not verify_fixpoint(index, ops_at(2, "mul"), config=config)


def test_load_closure_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("12\nabc\n")
    with pytest.raises(UsageError):
        load_closure(path)


def test_summary_for_two_bit_two_variable_closures(config):
    summary = close(ops_at(2, "mul", "add3"), 2, 2, config=config, max_tuples=10_000).summary()
    assert summary.footnote is not None
    assert summary.reference_size is None


@pytest.mark.slow
def test_mul_add2_closure_is_all_origin_vanishing_polynomials(config):
    result = close(ops_at(2, "mul", "add2"), 2, 2, config=config)
    summary = result.summary()
    assert result.complete
    assert result.size == 16384
    assert summary.reference_size == REFERENCE_CLOSURE_SIZE
    assert summary.matches_reference is False
    assert summary.constant_count == 1
    assert summary.footnote.i == 16384
    assert summary.footnote.v == 16384


# -- footnote conditions --------------------------------------------------

def two_bit_vector(fn):
    space = FunctionSpace(2, 2)
    x, y = (a.astype(np.int64) for a in space.assignments())
    return space.vector(np.asarray(fn(x, y)) % 4)


def test_footnote_conditions_of_mul_and_add2():
    assert footnote_conditions(two_bit_vector(lambda x, y: x * y)).all()
    flags = footnote_conditions(two_bit_vector(lambda x, y: x + y))
    assert not flags.ii
    assert flags.i and flags.iii and flags.iv and flags.v


def test_footnote_condition_v_holds_for_polynomials():
    flags = footnote_conditions(two_bit_vector(lambda x, y: 3 * x * x * y + 2 * y * y + x))
    assert flags.v and flags.iv


def test_footnote_conditions_need_two_bits_two_vars():
    with pytest.raises(UsageError):
        footnote_conditions(FunctionSpace(2, 1).vector([0, 1, 2, 3]))
    with pytest.raises(UsageError):
        footnote_conditions([0] * 15)


def test_footnote_table_count():
    result = count_footnote_tables()
    assert result.count == 8192
    assert result.per_coset == {"(0,0)": 4, "(0,1)": 16, "(1,0)": 16, "(1,1)": 8}


# -- table counts ---------------------------------------------------------

CONDITION_SETS = [
    subset for size in range(4) for subset in itertools.combinations(("i", "ii", "iii"), size)
]


@pytest.mark.parametrize("width, arity", [(1, 1), (1, 2), (1, 3), (2, 1)])
@pytest.mark.parametrize("conditions", CONDITION_SETS)
def test_analytic_and_brute_counts_agree(width, arity, conditions, config):
    result = count_tables(width, arity, conditions, config=config)
    assert result.brute is not None
    assert result.agree
    assert result.analytic == result.brute


def test_known_counts():
    assert count_analytic(1, 2, ["i", "ii"]) == 4
    assert count_tables(1, 2, ["i", "ii"]).total_tables == 16
    assert count_analytic(2, 1, ["i", "ii"]) == 16
    assert count_analytic(2, 2, ["i", "ii"]) == 2 ** 26
    assert count_analytic(2, 2, ["i", "ii", "iii"]) == 2 ** 23
    assert count_analytic(2, 2, []) == 2 ** 32


def test_two_bit_binary_count_skips_brute_unless_asked():
    result = count_tables(2, 2, ["i", "ii"])
    assert result.brute is None
    assert "explicitly" in result.brute_skipped
    assert result.reference == 2 ** 26
    assert result.matches_reference


def test_count_condition_names_are_checked():
    with pytest.raises(UsageError):
        count_tables(1, 2, ["iv"])
    with pytest.raises(UsageError):
        count_tables(1, 4, ["i"])


def test_brute_disabled():
    result = count_tables(1, 2, ["i"], brute=False)
    assert result.brute is None
    assert result.brute_skipped == "disabled"


@pytest.mark.slow
def test_brute_count_of_every_two_bit_binary_table(config):
    result = count_tables(2, 2, ["i", "ii"], brute=True, config=config)
    assert result.brute == 2 ** 26
    assert result.agree


def test_mul_add3_two_variable_closure_completes(config):
    ops = ops_at(2, "mul", "add3")
    result = close(ops, 2, 2, config=config)
    assert result.complete
    assert result.reason is None
    assert not result.contains_constant
    assert np.all(result.rows()[:, 0] == 0)
    assert set(close(ops_at(2, "mul"), 2, 2, config=config).codes()) <= set(result.codes())
    assert verify_fixpoint(result, ops, config=config)


def test_staged_fold_matches_direct_ternary_application(config):
    ops = ops_at(3, "mul", "add3")
    result = close(ops, 3, 1, config=config, prune=False)
    rows = result.rows()
    direct = builtin("add3", 3).apply(rows[:, None, None, :], rows[None, :, None, :], rows[None, None, :, :])
    assert np.all(result.index.contains(direct.reshape(-1, rows.shape[1]).astype(rows.dtype)))


def test_closures_grow_with_the_generator_set(config):
    mul = set(close(ops_at(2, "mul"), 2, 1, config=config).codes())
    ring = set(close(ops_at(2, "mul", "add2"), 2, 1, config=config).codes())
    everything = set(close(ops_at(2, "mul", "add2", "add3"), 2, 1, config=config).codes())
    assert mul <= ring <= everything
    assert mul < ring


def test_closure_of_wide_rules(config):
    result = close(ops_at(6, "mul", "add3"), 6, 1, config=config, max_tuples=10 ** 6)
    assert not result.contains_constant
    assert np.all(result.rows()[:, 0] == 0)
    assert "add3" in result.generators


def test_brute_count_refuses_huge_tables():
    with pytest.raises(ResourceLimitError):
        BruteCounter(3, 2, ["i"])
