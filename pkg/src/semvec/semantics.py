"""Semantic canonicalization: truth tables and polynomial normal forms.

An expression's meaning is captured by a fingerprint that is identical for
all semantically equivalent expressions and distinct otherwise: a packed
truth-table bitvector for the boolean domain, an expanded monomial map for
the polynomial domain.  Fingerprints serialize to stable class-identifier
strings used throughout dataset files and evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .expr import Domain, Expr
from .rng import SplitMix64

_COEFF_LIMIT = 1 << 63


class CanonicalizationError(ValueError):
    """Raised when a fingerprint cannot be computed (unknown variable,
    coefficient outside signed 64-bit range)."""


@dataclass(frozen=True)
class TruthTable:
    """Boolean fingerprint: bit i holds the value under assignment i.

    Assignment i sets variable j (by position in the order) to bit j of i,
    so the bitvector has 2^V bits packed into a Python int.
    """

    bits: int
    nvars: int

    def serialize(self) -> str:
        width = max(1, (1 << self.nvars) // 4)
        return f"B:{self.nvars}:{self.bits:0{width}x}"


@dataclass(frozen=True)
class PolyNormalForm:
    """Polynomial fingerprint: expanded monomial → coefficient map.

    ``terms`` pairs each exponent vector (one entry per variable of the
    order) with its non-zero signed 64-bit coefficient, sorted
    lexicographically by exponent vector.
    """

    terms: tuple[tuple[tuple[int, ...], int], ...]
    nvars: int

    def serialize(self) -> str:
        body = ";".join(f"{','.join(map(str, exps))}={coeff}" for exps, coeff in self.terms)
        return f"P:{self.nvars}:{body}"


def _var_index(order: tuple[str, ...]) -> dict[str, int]:
    idx = {v: i for i, v in enumerate(order)}
    if len(idx) != len(order):
        raise CanonicalizationError(f"duplicate variable in order {order!r}")
    return idx


def eval_bool(e: Expr, assignment: dict[str, bool]) -> bool:
    """Reference evaluator for one boolean assignment.

    Deliberately per-assignment and table-free so it can serve as an
    independent check on :func:`bool_canonical`.
    """
    if e.is_leaf:
        try:
            return assignment[e.label]
        except KeyError:
            raise CanonicalizationError(f"unknown variable {e.label!r}") from None
    if e.label == "not":
        return not eval_bool(e.children[0], assignment)
    a = eval_bool(e.children[0], assignment)
    b = eval_bool(e.children[1], assignment)
    if e.label == "and":
        return a and b
    if e.label == "or":
        return a or b
    if e.label == "xor":
        return a != b
    if e.label == "implies":
        return (not a) or b
    raise CanonicalizationError(f"operator {e.label!r} is not boolean")


def eval_poly(e: Expr, point: dict[str, int]) -> int:
    """Reference evaluator at one integer point (exact bigint arithmetic)."""
    if e.is_leaf:
        try:
            return point[e.label]
        except KeyError:
            raise CanonicalizationError(f"unknown variable {e.label!r}") from None
    a = eval_poly(e.children[0], point)
    b = eval_poly(e.children[1], point)
    if e.label == "add":
        return a + b
    if e.label == "sub":
        return a - b
    if e.label == "mul":
        return a * b
    raise CanonicalizationError(f"operator {e.label!r} is not polynomial")


def bool_canonical(e: Expr, order: tuple[str, ...]) -> TruthTable:
    """Truth table over all 2^V assignments, computed bit-parallel.

    Each variable's column is the mask whose bit i is that variable's
    value in assignment i; operator application is then plain integer
    bitwise arithmetic on whole columns at once.
    """
    idx = _var_index(order)
    nvars = len(order)
    rows = 1 << nvars
    full = (1 << rows) - 1

    var_mask: list[int] = []
    for j in range(nvars):
        block = (1 << (1 << j)) - 1
        period = 1 << (j + 1)
        m = 0
        for start in range(1 << j, rows, period):
            m |= block << start
        var_mask.append(m)

    def walk(n: Expr) -> int:
        if n.is_leaf:
            if n.label not in idx:
                raise CanonicalizationError(f"unknown variable {n.label!r}")
            return var_mask[idx[n.label]]
        if n.label == "not":
            return walk(n.children[0]) ^ full
        a = walk(n.children[0])
        b = walk(n.children[1])
        if n.label == "and":
            return a & b
        if n.label == "or":
            return a | b
        if n.label == "xor":
            return a ^ b
        if n.label == "implies":
            return (a ^ full) | b
        raise CanonicalizationError(f"operator {n.label!r} is not boolean")

    return TruthTable(walk(e), nvars)


def poly_canonical(e: Expr, order: tuple[str, ...]) -> PolyNormalForm:
    """Fully expanded monomial map with collected signed 64-bit coefficients."""
    idx = _var_index(order)
    nvars = len(order)

    def check(c: int) -> int:
        if not -_COEFF_LIMIT <= c < _COEFF_LIMIT:
            raise CanonicalizationError(f"coefficient {c} exceeds signed 64-bit range")
        return c

    def walk(n: Expr) -> dict[tuple[int, ...], int]:
        if n.is_leaf:
            if n.label not in idx:
                raise CanonicalizationError(f"unknown variable {n.label!r}")
            exps = tuple(1 if j == idx[n.label] else 0 for j in range(nvars))
            return {exps: 1}
        a = walk(n.children[0])
        b = walk(n.children[1])
        out: dict[tuple[int, ...], int] = {}
        if n.label in ("add", "sub"):
            sign = 1 if n.label == "add" else -1
            out.update(a)
            for exps, c in b.items():
                out[exps] = check(out.get(exps, 0) + sign * c)
        elif n.label == "mul":
            for ea, ca in a.items():
                for eb, cb in b.items():
                    exps = tuple(x + y for x, y in zip(ea, eb))
                    out[exps] = check(out.get(exps, 0) + check(ca * cb))
        else:
            raise CanonicalizationError(f"operator {n.label!r} is not polynomial")
        return {exps: c for exps, c in out.items() if c != 0}

    terms = tuple(sorted(walk(e).items()))
    return PolyNormalForm(terms, nvars)


def equiv_key(e: Expr, order: tuple[str, ...], domain: Domain) -> str:
    """Stable class identifier: equal iff the canonical forms are equal."""
    if domain is Domain.BOOLEAN:
        return bool_canonical(e, order).serialize()
    return poly_canonical(e, order).serialize()


def random_point_check(
    e1: Expr,
    e2: Expr,
    order: tuple[str, ...],
    domain: Domain,
    trials: int = 64,
    seed: int = 0,
    lo: int = -7,
    hi: int = 7,
) -> str:
    """Probabilistic equivalence test, independent of the canonicalizers.

    Boolean expressions over ≤ ``trials``' worth of assignments are checked
    exhaustively; otherwise both expressions are evaluated at ``trials``
    random points (integer coordinates in ``[lo, hi]`` for polynomials).
    Returns ``"distinguished"`` or ``"indistinguishable"``.
    """
    rng = SplitMix64(seed)
    if domain is Domain.BOOLEAN:
        rows = 1 << len(order)
        if rows <= trials:
            picks = range(rows)
        else:
            picks = [rng.below(rows) for _ in range(trials)]
        for i in picks:
            assignment = {v: bool((i >> j) & 1) for j, v in enumerate(order)}
            if eval_bool(e1, assignment) != eval_bool(e2, assignment):
                return "distinguished"
        return "indistinguishable"
    span = hi - lo + 1
    for _ in range(trials):
        point = {v: lo + rng.below(span) for v in order}
        if eval_poly(e1, point) != eval_poly(e2, point):
            return "distinguished"
    return "indistinguishable"
