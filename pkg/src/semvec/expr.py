"""Expression ASTs over boolean and polynomial operator alphabets.

Expressions are immutable trees of one-letter variables (``a``..``j``) and
fixed-arity operators.  The printed surface syntax is fully parenthesized
ASCII (``& | ! ^ =>`` for the boolean domain, ``+ - *`` for the polynomial
domain), so printing and parsing are exact inverses and token sequences are
unambiguous without a precedence table.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator


class ParseError(ValueError):
    """Raised on malformed input text; carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


@dataclass(frozen=True)
class OpSignature:
    name: str
    symbol: str
    arity: int


BOOLEAN_OPS = {
    "and": OpSignature("and", "&", 2),
    "or": OpSignature("or", "|", 2),
    "not": OpSignature("not", "!", 1),
    "xor": OpSignature("xor", "^", 2),
    "implies": OpSignature("implies", "=>", 2),
}

POLYNOMIAL_OPS = {
    "add": OpSignature("add", "+", 2),
    "sub": OpSignature("sub", "-", 2),
    "mul": OpSignature("mul", "*", 2),
}

VARIABLE_NAMES = "abcdefghij"


class Domain(enum.Enum):
    BOOLEAN = "bool"
    POLYNOMIAL = "poly"

    @property
    def operators(self) -> dict[str, OpSignature]:
        return BOOLEAN_OPS if self is Domain.BOOLEAN else POLYNOMIAL_OPS

    @classmethod
    def from_name(cls, name: str) -> "Domain":
        for d in cls:
            if d.value == name or d.name.lower() == name.lower():
                return d
        raise ValueError(f"unknown domain {name!r}")


_SYMBOL_TO_OP = {sig.symbol: sig for sig in (*BOOLEAN_OPS.values(), *POLYNOMIAL_OPS.values())}


class Expr:
    """Immutable parse tree node.

    ``label`` is either a variable name (leaf) or an operator name
    (internal node).  Size (total node count) and the structural hash are
    computed once at construction; equal trees hash equally.
    """

    __slots__ = ("label", "children", "size", "_hash", "_text")

    def __init__(self, label: str, children: tuple["Expr", ...] = ()):
        self.label = label
        self.children = children
        self.size = 1 + sum(c.size for c in children)
        self._hash = hash((label, *(c._hash for c in children)))
        self._text: str | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr):
            return NotImplemented
        if self._hash != other._hash or self.label != other.label:
            return False
        return self.children == other.children

    def __repr__(self) -> str:
        return f"Expr({print_infix(self)!r})"


def var(name: str) -> Expr:
    if name not in VARIABLE_NAMES:
        raise ValueError(f"variable must be one of {VARIABLE_NAMES!r}, got {name!r}")
    return Expr(name)


def op(name: str, *children: Expr, domain: Domain | None = None) -> Expr:
    table = domain.operators if domain is not None else _ALL_OPS
    if name not in table:
        raise ValueError(f"unknown operator {name!r}")
    sig = table[name]
    if len(children) != sig.arity:
        raise ValueError(f"{name} expects {sig.arity} children, got {len(children)}")
    return Expr(name, tuple(children))


_ALL_OPS = {**BOOLEAN_OPS, **POLYNOMIAL_OPS}


def size(e: Expr) -> int:
    """Total node count, leaves included."""
    return e.size


def variables_of(e: Expr) -> set[str]:
    out: set[str] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if n.is_leaf:
            out.add(n.label)
        else:
            stack.extend(n.children)
    return out


def nonleaf_nodes(e: Expr) -> list[Expr]:
    """Post-order list of the subtrees with at least one child.

    Repeated identical subtrees appear once per tree position.
    """
    out: list[Expr] = []

    def walk(n: Expr) -> None:
        for c in n.children:
            walk(c)
        if not n.is_leaf:
            out.append(n)

    walk(e)
    return out


def print_infix(e: Expr) -> str:
    """Fully parenthesized infix form; exact inverse of :func:`parse`."""
    if e._text is not None:
        return e._text
    if e.is_leaf:
        text = e.label
    else:
        sig = _ALL_OPS[e.label]
        if sig.arity == 1:
            text = f"({sig.symbol} {print_infix(e.children[0])})"
        else:
            text = f"({print_infix(e.children[0])} {sig.symbol} {print_infix(e.children[1])})"
    e._text = text
    return text


def tokenize(e: Expr) -> list[str]:
    """Token sequence of the printed form, parentheses included."""
    out: list[str] = []

    def walk(n: Expr) -> None:
        if n.is_leaf:
            out.append(n.label)
            return
        sig = _ALL_OPS[n.label]
        out.append("(")
        if sig.arity == 1:
            out.append(sig.symbol)
            walk(n.children[0])
        else:
            walk(n.children[0])
            out.append(sig.symbol)
            walk(n.children[1])
        out.append(")")

    walk(e)
    return out


def domain_tokens(domain: Domain, variables: tuple[str, ...]) -> list[str]:
    """Every token the domain can emit: variables, operator symbols, parens."""
    return list(variables) + [sig.symbol for sig in domain.operators.values()] + ["(", ")"]


def _lex(text: str) -> Iterator[tuple[str, int]]:
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "()" or c in "&|!^+-*":
            yield c, i
            i += 1
        elif c == "=":
            if i + 1 < n and text[i + 1] == ">":
                yield "=>", i
                i += 2
            else:
                raise ParseError("expected '=>'", i)
        elif c in VARIABLE_NAMES:
            yield c, i
            i += 1
        else:
            raise ParseError(f"unexpected character {c!r}", i)


def parse(text: str, domain: Domain) -> Expr:
    """Parse fully parenthesized infix text into an :class:`Expr`.

    The grammar is ``expr := var | "(" "!" expr ")" | "(" expr binop expr ")"``.
    As a convenience the outermost parentheses may be omitted, so
    ``(a | c) & a`` parses the same as ``((a | c) & a)``.
    """
    tokens = list(_lex(text))
    ops = domain.operators
    symbols = {sig.symbol: sig for sig in ops.values()}

    def need(i: int) -> tuple[str, int]:
        if i >= len(tokens):
            raise ParseError("unexpected end of input", len(text))
        return tokens[i]

    def parse_expr(i: int) -> tuple[Expr, int]:
        tok, pos = need(i)
        if tok in VARIABLE_NAMES:
            return Expr(tok), i + 1
        if tok != "(":
            raise ParseError(f"expected variable or '(', got {tok!r}", pos)
        tok2, pos2 = need(i + 1)
        if tok2 in symbols and symbols[tok2].arity == 1:
            inner, j = parse_expr(i + 2)
            tok3, pos3 = need(j)
            if tok3 != ")":
                raise ParseError(f"expected ')', got {tok3!r}", pos3)
            return Expr(symbols[tok2].name, (inner,)), j + 1
        left, j = parse_expr(i + 1)
        tok3, pos3 = need(j)
        sig = symbols.get(tok3)
        if sig is None or sig.arity != 2:
            raise ParseError(f"expected a binary operator of the {domain.value} domain, got {tok3!r}", pos3)
        right, j2 = parse_expr(j + 1)
        tok4, pos4 = need(j2)
        if tok4 != ")":
            raise ParseError(f"expected ')', got {tok4!r}", pos4)
        return Expr(sig.name, (left, right)), j2 + 1

    e, i = parse_expr(0)
    if i < len(tokens):
        # Lenient top level: one unparenthesized binary application.
        tok, pos = tokens[i]
        sig = symbols.get(tok)
        if sig is None or sig.arity != 2:
            raise ParseError(f"trailing input starting with {tok!r}", pos)
        right, i = parse_expr(i + 1)
        if i < len(tokens):
            raise ParseError(f"trailing input starting with {tokens[i][0]!r}", tokens[i][1])
        e = Expr(sig.name, (e, right))
    return e
