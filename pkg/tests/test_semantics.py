import itertools

import pytest
from hypothesis import given, strategies as st

from semvec.expr import BOOLEAN_OPS, POLYNOMIAL_OPS, Domain, parse
from conftest import tree_strategy
from semvec.semantics import (
    CanonicalizationError,
    bool_canonical,
    equiv_key,
    eval_bool,
    eval_poly,
    poly_canonical,
    random_point_check,
)

ABC = ("a", "b", "c")


def b(text):
    return parse(text, Domain.BOOLEAN)


def p(text):
    return parse(text, Domain.POLYNOMIAL)


def test_double_negation_table():
    # (! (! a)) behaves exactly like a over every assignment
    assert bool_canonical(b("(! (! a))"), ABC) == bool_canonical(b("a"), ABC)


def test_xor_self_is_false_under_tautology():
    # (a ^ a) & (c => c) is constant false: left side kills every row
    t = bool_canonical(b("((a ^ a) & (c => c))"), ABC)
    assert t.bits == 0


def test_truth_table_bit_order():
    # assignment i sets var j to bit j of i, so "a" flips fastest
    t = bool_canonical(b("a"), ABC)
    assert t.bits == 0b10101010
    assert bool_canonical(b("b"), ABC).bits == 0b11001100
    assert bool_canonical(b("c"), ABC).bits == 0b11110000


def test_truth_table_serialization():
    assert bool_canonical(b("a"), ABC).serialize() == "B:3:aa"
    assert bool_canonical(b("(a & (! a))"), ABC).serialize() == "B:3:00"
    assert bool_canonical(b("a"), ("a",)).serialize() == "B:1:2"


def test_bool_canonical_matches_reference_evaluator():
    exprs = [b("((a => b) ^ (c | a))"), b("(! (b & (a ^ c)))"), b("((a | b) => (b & c))")]
    for e in exprs:
        t = bool_canonical(e, ABC)
        for i, bits in enumerate(itertools.product([False, True], repeat=3)):
            assignment = {"a": bits[0], "b": bits[1], "c": bits[2]}
            want = eval_bool(e, assignment)
            got = bool((t.bits >> sum(b << j for j, b in enumerate(bits))) & 1)
            assert got == want, (e, i)


@given(tree_strategy(BOOLEAN_OPS, "abc"))
def test_bool_canonical_agrees_with_eval_bool(e):
    t = bool_canonical(e, ABC)
    for i in range(8):
        assignment = {v: bool((i >> j) & 1) for j, v in enumerate(ABC)}
        assert bool((t.bits >> i) & 1) == eval_bool(e, assignment)


def test_poly_normal_form_examples():
    # (b - a) - (c + b) collapses to -a - c
    n = poly_canonical(p("((b - a) - (c + b))"), ABC)
    assert dict(n.terms) == {(1, 0, 0): -1, (0, 0, 1): -1}
    # a - a vanishes entirely
    assert poly_canonical(p("(a - a)"), ABC).terms == ()


def test_poly_expansion_and_collection():
    n = poly_canonical(p("((a + b) * (a - b))"), ("a", "b"))
    assert dict(n.terms) == {(2, 0): 1, (0, 2): -1}


def test_poly_serialization_sorted_by_exponent():
    n = poly_canonical(p("((a * a) + (b + b))"), ("a", "b"))
    assert n.serialize() == "P:2:0,1=2;2,0=1"
    assert poly_canonical(p("(a - a)"), ABC).serialize() == "P:3:"


@given(tree_strategy(POLYNOMIAL_OPS, "ab", max_depth=3), st.integers(-5, 5), st.integers(-5, 5))
def test_poly_canonical_is_ring_homomorphism(e, x, y):
    # evaluating the normal form at a point equals evaluating the tree
    n = poly_canonical(e, ("a", "b"))
    total = sum(c * (x ** ea) * (y ** eb) for (ea, eb), c in n.terms)
    assert total == eval_poly(e, {"a": x, "b": y})


def test_coefficient_overflow_raises():
    # repeated squaring of (a + a) doubles the exponent of the coefficient:
    # after six squarings the leading coefficient is 2^64, past the limit
    from semvec.expr import op

    e = p("(a + a)")
    for _ in range(6):
        e = op("mul", e, e)
    with pytest.raises(CanonicalizationError):
        poly_canonical(e, ("a",))


def test_unknown_variable_rejected():
    with pytest.raises(CanonicalizationError):
        bool_canonical(b("a"), ("b", "c"))
    with pytest.raises(CanonicalizationError):
        eval_poly(p("a"), {"b": 1})


def test_equiv_key_dispatch():
    assert equiv_key(b("a"), ABC, Domain.BOOLEAN).startswith("B:3:")
    assert equiv_key(p("a"), ABC, Domain.POLYNOMIAL).startswith("P:3:")


def test_random_point_check_boolean_exhaustive():
    assert random_point_check(b("(! (! a))"), b("a"), ABC, Domain.BOOLEAN) == "indistinguishable"
    assert random_point_check(b("(a | b)"), b("(a & b)"), ABC, Domain.BOOLEAN) == "distinguished"


def test_random_point_check_polynomial():
    assert random_point_check(p("((a + b) - b)"), p("a"), ABC, Domain.POLYNOMIAL) == "indistinguishable"
    assert random_point_check(p("(a * a)"), p("a"), ABC, Domain.POLYNOMIAL) == "distinguished"
