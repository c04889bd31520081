import pytest
from hypothesis import given

from conftest import tree_strategy
from semvec.expr import (
    BOOLEAN_OPS,
    POLYNOMIAL_OPS,
    Domain,
    ParseError,
    domain_tokens,
    nonleaf_nodes,
    op,
    parse,
    print_infix,
    size,
    tokenize,
    var,
    variables_of,
)


def b(text):
    return parse(text, Domain.BOOLEAN)


def p(text):
    return parse(text, Domain.POLYNOMIAL)


def test_print_is_fully_parenthesized():
    assert print_infix(b("(a & b)")) == "(a & b)"
    assert print_infix(b("(! (! a))")) == "(! (! a))"
    assert print_infix(p("((a + b) * c)")) == "((a + b) * c)"


def test_top_level_parens_optional():
    assert b("(a | c) & a") == b("((a | c) & a)")
    assert print_infix(b("(a | c) & a")) == "((a | c) & a)"
    assert p("a + b") == p("(a + b)")


def test_structural_equality_and_hash():
    e1 = b("((a & b) | c)")
    e2 = op("or", op("and", var("a"), var("b")), var("c"))
    assert e1 == e2
    assert hash(e1) == hash(e2)
    assert e1 != b("((a & b) | a)")
    assert len({e1, e2}) == 1


def test_size_counts_every_node():
    assert size(b("a")) == 1
    assert size(b("(! a)")) == 2
    assert size(b("(a & b)")) == 3
    assert size(b("((! a) ^ (b => c))")) == 6


def test_variables_of():
    assert variables_of(b("((a & b) | a)")) == {"a", "b"}
    assert variables_of(p("a")) == {"a"}


def test_nonleaf_nodes_postorder_with_repeats():
    e = b("((a & b) | (a & b))")
    nodes = nonleaf_nodes(e)
    assert [n.label for n in nodes] == ["and", "and", "or"]
    assert nodes[0] == nodes[1]
    assert nonleaf_nodes(b("a")) == []


def test_tokenize_round_trip():
    e = b("((! a) => (b ^ c))")
    toks = tokenize(e)
    assert toks == ["(", "(", "!", "a", ")", "=>", "(", "b", "^", "c", ")", ")"]
    assert parse(" ".join(toks), Domain.BOOLEAN) == e


def test_domain_tokens():
    toks = domain_tokens(Domain.BOOLEAN, ("a", "b"))
    assert toks == ["a", "b", "&", "|", "!", "^", "=>", "(", ")"]
    assert domain_tokens(Domain.POLYNOMIAL, ("a",)) == ["a", "+", "-", "*", "(", ")"]


def test_domain_lookup():
    assert Domain.from_name("bool") is Domain.BOOLEAN
    assert Domain.from_name("POLYNOMIAL") is Domain.POLYNOMIAL
    with pytest.raises(ValueError):
        Domain.from_name("arith")


def test_constructor_validation():
    with pytest.raises(ValueError):
        var("z")
    with pytest.raises(ValueError):
        op("and", var("a"))
    with pytest.raises(ValueError):
        op("nand", var("a"), var("b"))


def test_parse_errors_carry_position():
    with pytest.raises(ParseError) as info:
        b("(a &")
    assert info.value.position == 4
    with pytest.raises(ParseError):
        b("(a ? b)")
    with pytest.raises(ParseError):
        b("(a & b) extra")
    with pytest.raises(ParseError):
        b("((a & b)")
    # wrong domain operator
    with pytest.raises(ParseError):
        p("(a & b)")
    with pytest.raises(ParseError):
        b("(a + b)")
    # '=' without '>'
    with pytest.raises(ParseError):
        b("(a = b)")


@given(tree_strategy(BOOLEAN_OPS, "abc"))
def test_boolean_round_trip(e):
    assert parse(print_infix(e), Domain.BOOLEAN) == e


@given(tree_strategy(POLYNOMIAL_OPS, "ab"))
def test_polynomial_round_trip(e):
    assert parse(print_infix(e), Domain.POLYNOMIAL) == e
