import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modules.errors import DomainError, UsageError
from modules.expr import parse_formula
from modules.optable import Operator, builtin
from modules.safety import (
    analyze,
    patch,
    patch_delta,
    patchwork,
    registered_name,
    verify_witness,
    witness,
    witness_odd_violation,
    witness_zero_violation,
)

SAFE_BUILTINS = ["mul", "add3", "safe_div", "parity_collapse", "identity", "proj2of3"]


@st.composite
def dense_tables(draw, width=2, arity=2):
    entries = 1 << (width * arity)
    table = draw(st.lists(st.integers(0, (1 << width) - 1), min_size=entries, max_size=entries))
    return Operator.from_table("f", width, arity, table)


@pytest.mark.parametrize("name", SAFE_BUILTINS)
@pytest.mark.parametrize("width", [1, 2, 5, 8])
def test_safe_builtins(name, width, config):
    report = analyze(builtin(name, width), config=config)
    assert report.safe
    assert report.verdict == "SAFE"
    assert report.condition_odd.coverage == "exhaustive"


@pytest.mark.parametrize("name, width, violation, output", [
    ("div_classical", 4, [1, 3], 0),
    ("add2", 2, [1, 1], 2),
    ("lt", 4, [1, 1], 0),
])
def test_odd_violations_are_lexicographically_least(name, width, violation, output, config):
    report = analyze(builtin(name, width), config=config)
    assert report.verdict == "UNSAFE"
    assert report.condition_zero.passed
    assert report.condition_odd.violation == violation
    assert report.condition_odd.output == output


def test_zero_violation_reported():
    report = analyze(builtin("eq", 4))
    assert not report.condition_zero.passed
    assert report.k0 == 1
    assert report.condition_zero.violation == [0, 0]


def test_wide_operators_are_sampled_with_a_seed(config):
    first = analyze(builtin("div_classical", 32), config=config, seed=11)
    second = analyze(builtin("div_classical", 32), config=config, seed=11)
    assert first.condition_odd.coverage == "sampled"
    assert first.condition_odd.seed == 11
    assert first.condition_odd.checked == config.SAMPLE_COUNT
    assert first == second
    assert not first.safe
    assert analyze(builtin("safe_div", 32), config=config).safe


@given(dense_tables())
def test_patch_makes_any_table_safe(op):
    patched = patch(op)
    assert analyze(patched).safe
    delta = patch_delta(op, patched)
    assert delta.max_distance <= 1
    odd = {(1, 1), (1, 3), (3, 1), (3, 3)}
    for entry in delta.changed:
        assert tuple(entry.inputs) in odd | {(0, 0)}


@given(dense_tables(width=3, arity=1))
def test_patch_keeps_safe_tables(op):
    once = patch(op)
    assert patch_delta(once, patch(once)).changed_count == 0


def test_patch_add2():
    delta = patch_delta(builtin("add2", 2))
    assert delta.changed_count == 4
    assert not delta.zero_forced
    assert [(e.inputs, e.old, e.new) for e in delta.changed] == [
        ([1, 1], 2, 3), ([1, 3], 0, 1), ([3, 1], 0, 1), ([3, 3], 2, 3),
    ]


def test_patch_forces_zero_point():
    delta = patch_delta(builtin("eq", 2))
    assert delta.zero_forced
    assert delta.changed[0].inputs == [0, 0]


def test_patchwork_of_safe_operators_is_safe():
    combined = patchwork(builtin("lt", 3), builtin("mul", 3), builtin("safe_div", 3))
    assert analyze(combined).safe
    assert combined.eval((1, 2)) == 2
    assert combined.eval((5, 3)) == 1


def test_patchwork_needs_matching_shapes():
    with pytest.raises(UsageError):
        patchwork(builtin("lt", 3), builtin("mul", 3), builtin("parity_collapse", 3))


@pytest.mark.parametrize("name, width", [
    ("div_classical", 2), ("div_classical", 4), ("div_classical", 8),
    ("add2", 2), ("add2", 5), ("lt", 4),
])
def test_odd_violation_witness_is_constant_zero(name, width, config):
    op = builtin(name, width)
    result = witness(op, config=config)
    assert result.kind == "constant_formula"
    assert result.claimed_constant == 0
    assert result.derivation.case == "odd"
    assert result.verification.constant_held
    assert result.verification.mode == "exhaustive"
    formula = parse_formula(result.formula, variables=result.variables)
    assert formula.operators() <= {"mul", "add3", name}
    assert verify_witness(result, op, config=config).constant_held


def test_odd_witness_records_normalized_scalars(config):
    result = witness_odd_violation(builtin("div_classical", 4), config=config)
    assert result.derivation.violation == [1, 3]
    assert result.derivation.scalars == [1, 3]


def table_with(width, zero, one, fill=0):
    entries = 1 << (2 * width)
    table = [fill] * entries
    table[0] = zero
    table[Operator.from_table("t", width, 2, table).index_of((1, 1))] = one
    return Operator.from_table("t", width, 2, table)


@pytest.mark.parametrize("zero, one, case, constant, kind", [
    (2, 2, "a", 2, "constant_formula"),
    (1, 3, "b", 1, "constant_formula"),
    (2, 0, "c", 0, "constant_formula"),
    (1, 2, "d", 0, "parity_coverage_computation"),
    (2, 1, "d", 0, "parity_coverage_computation"),
])
def test_zero_violation_cases(zero, one, case, constant, kind, config):
    op = table_with(2, zero, one, fill=1)
    result = witness_zero_violation(op, config=config)
    assert result.derivation.case == case
    assert result.claimed_constant == constant
    assert result.kind == kind
    assert result.verification.constant_held
    assert verify_witness(result, op, config=config).constant_held


def test_case_d_holds_only_on_mixed_parity(config):
    result = witness_zero_violation(table_with(2, 1, 2, fill=1), config=config)
    assert result.variables == ["x1", "x2"]
    assert result.verification.domain == "inputs of differing parity"
    assert result.verification.checked == 8


def test_zero_witness_for_eq():
    result = witness(builtin("eq", 4))
    assert result.derivation.case == "a"
    assert result.claimed_constant == 1


def test_wide_witness_is_sampled_and_compact(config):
    op = builtin("div_classical", 32)
    result = witness(op, config=config)
    assert result.verification.mode == "sampled"
    assert result.verification.constant_held
    assert result.claimed_constant == 0
    formula = parse_formula(result.formula, variables=result.variables)
    assert formula.distinct_applications < 10_000


def test_reserved_names_are_registered_as_f():
    impostor = builtin("add2", 3).renamed("mul")
    assert registered_name(impostor) == "f"
    assert registered_name(builtin("mul", 3)) == "mul"
    result = witness(impostor)
    assert result.registered_as == "f"
    assert "(f " in result.formula


def test_safe_operators_have_no_witness():
    with pytest.raises(DomainError):
        witness(builtin("mul", 4))
    with pytest.raises(DomainError):
        witness_odd_violation(builtin("eq", 4))
    with pytest.raises(DomainError):
        witness_zero_violation(builtin("add2", 4))


def test_verify_witness_rejects_other_width(config):
    result = witness(builtin("add2", 3), config=config)
    with pytest.raises(UsageError):
        verify_witness(result, builtin("add2", 4), config=config)


def test_tampered_witness_fails_verification(config):
    op = builtin("add2", 3)
    result = witness(op, config=config)
    forged = result.model_copy(update={"claimed_constant": 1})
    assert not verify_witness(forged, op, config=config).constant_held


@given(dense_tables())
def test_every_unsafe_table_gets_a_verified_witness(op):
    if analyze(op).safe:
        return
    result = witness(op)
    assert result.verification.constant_held
    assert 0 <= result.claimed_constant <= 3


def random_table(rng, width, arity, name="f"):
    entries = 1 << (width * arity)
    return Operator.from_table(name, width, arity, rng.integers(0, 1 << width, size=entries))


@pytest.mark.parametrize("width", [2, 3, 4])
def test_a_thousand_unsafe_tables_get_verified_witnesses(width, config):
    rng = np.random.default_rng(2000 + width)
    witnessed = 0
    while witnessed < 1000:
        op = random_table(rng, width, int(rng.integers(1, 3)))
        if analyze(op, config=config).safe:
            continue
        result = witness(op, config=config)
        assert result.verification.constant_held
        assert result.verification.mode == "exhaustive"
        assert 0 <= result.claimed_constant < 1 << width
        witnessed += 1


def test_a_thousand_patchworks_of_safe_tables_are_safe(config):
    rng = np.random.default_rng(31)
    for _ in range(1000):
        test = random_table(rng, 2, 2, "t")
        g = patch(random_table(rng, 2, 2, "g"))
        h = patch(random_table(rng, 2, 2, "h"))
        combined = patchwork(test, g, h)
        assert analyze(combined, config=config).safe
        chosen = np.where(test.dense_table() != 0, g.dense_table(), h.dense_table())
        assert np.array_equal(combined.dense_table(), chosen)


@pytest.mark.parametrize("width", range(2, 9))
@pytest.mark.parametrize("name", ["add2", "div_classical"])
def test_unsafe_at_every_small_width(name, width, config):
    report = analyze(builtin(name, width), config=config)
    assert report.verdict == "UNSAFE"
    assert report.condition_zero.passed
    assert not report.condition_odd.passed


def compose(outer, left, right):
    """Table of outer(left(x, y), right(x, y)) for binary dense tables of one width."""
    index = np.arange(outer.table_size, dtype=np.uint64)
    x, y = index >> np.uint64(outer.width), index & np.uint64(outer.mask)
    return Operator.from_table("c", outer.width, 2, outer.apply(left.apply(x, y), right.apply(x, y)))


@pytest.mark.parametrize("width", [2, 3])
def test_compositions_of_safe_tables_stay_safe(width, config):
    rng = np.random.default_rng(77 + width)
    for _ in range(200):
        outer, left, right = (patch(random_table(rng, width, 2, name)) for name in ("o", "l", "r"))
        assert analyze(compose(outer, left, right), config=config).safe
