"""Recursive-descent parser for field component expressions.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor ('*' factor)*
    factor := '-' factor | base ('^' uint)?
    base   := rational | 'x'uint | '(' expr ')' | ('sin'|'cos'|'exp') '(' expr ')'

Rationals are integers or ``p/q``.  A leading unary minus is accepted so that
printed polynomials parse back.  Calls to sin/cos/exp are replaced by their
Maclaurin series composed with the argument, truncated at ``taylor_degree``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from math import factorial
from typing import Sequence, Union

from .fields import VectorField
from .polynomial import Polynomial


class ParseError(ValueError):
    def __init__(self, message: str, position: int | None = None, text: str | None = None):
        self.position = position
        self.text = text
        where = "" if position is None else f" at position {position}"
        super().__init__(f"{message}{where}")


@dataclass(frozen=True)
class Const:
    value: Fraction


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, as written


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Union[Const, Var, Neg, BinOp, Pow, Call]

FUNCTIONS = ("sin", "cos", "exp")

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))")


def tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ParseError(message, tok[2], self.text)

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            found = tok[1] or "end of input"
            raise self.error(f"expected {value!r}, found {found!r}", tok)
        return tok

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek()[1] == "*":
            self.take()
            node = BinOp("*", node, self.factor())
        return node

    def factor(self) -> Node:
        if self.peek()[1] == "-":
            self.take()
            return Neg(self.factor())
        node = self.base()
        if self.peek()[1] == "^":
            self.take()
            tok = self.peek()
            if tok[1] == "-":
                raise self.error("negative exponent", tok)
            if tok[0] != "num":
                raise self.error("exponent must be a non-negative integer", tok)
            self.take()
            node = Pow(node, int(tok[1]))
        return node

    def base(self) -> Node:
        tok = self.take()
        kind, value, pos = tok
        if kind == "num":
            num = int(value)
            if self.peek()[1] == "/":
                self.take()
                den_tok = self.take()
                if den_tok[0] != "num":
                    raise self.error("expected integer denominator", den_tok)
                den = int(den_tok[1])
                if den == 0:
                    raise self.error("zero denominator", den_tok)
                return Const(Fraction(num, den))
            return Const(Fraction(num))
        if kind == "name":
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(value, arg)
            m = re.fullmatch(r"x(\d+)", value)
            if m is None:
                raise ParseError(f"unknown name {value!r}", pos, self.text)
            idx = int(m.group(1))
            if not 1 <= idx <= self.dim:
                raise ParseError(f"unknown variable {value!r} (dimension is {self.dim})", pos, self.text)
            return Var(idx)
        if value == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = value or "end of input"
        raise ParseError(f"unexpected token {found!r}", pos, self.text)


def parse_expression(text: str, dim: int) -> Node:
    """Parse ``text`` into an expression tree over x1..x{dim}."""
    return _Parser(text, dim).parse()


def _series(fn: str, arg: Polynomial, degree: int) -> Polynomial:
    """Maclaurin series of ``fn`` composed with ``arg``, truncated at ``degree``."""
    c0 = arg.constant_term()
    if c0:
        raise ValueError(
            f"{fn}() argument must vanish at the expansion centre (constant term {c0})"
        )
    dim = arg.dim
    if fn == "exp":
        coeffs = lambda j: Fraction(1, factorial(j))
    elif fn == "sin":
        coeffs = lambda j: Fraction((-1) ** (j // 2), factorial(j)) if j % 2 else Fraction(0)
    elif fn == "cos":
        coeffs = lambda j: Fraction(0) if j % 2 else Fraction((-1) ** (j // 2), factorial(j))
    else:
        raise ValueError(f"unknown function {fn}")
    out = Polynomial.zero(dim)
    power = Polynomial.constant(1, dim)
    low = max(arg.min_degree(), 1) if not arg.is_zero() else None
    for j in range(degree + 1):
        if j > 0:
            if low is None:
                break
            if j * low > degree:
                break
            power = power.mul(arg, degree)
        c = coeffs(j)
        if c:
            out = out + power * c
    return out.truncate(degree)


def _evaluate(node: Node, dim: int, degree: int, center: Sequence[Fraction]) -> tuple[Polynomial, bool]:
    """Return (polynomial, used_transcendental)."""
    if isinstance(node, Const):
        return Polynomial.constant(node.value, dim), False
    if isinstance(node, Var):
        v = Polynomial.variable(node.index - 1, dim)
        c = center[node.index - 1]
        return (v + c if c else v), False
    if isinstance(node, Neg):
        p, t = _evaluate(node.operand, dim, degree, center)
        return -p, t
    if isinstance(node, BinOp):
        a, ta = _evaluate(node.left, dim, degree, center)
        b, tb = _evaluate(node.right, dim, degree, center)
        if node.op == "+":
            return a + b, ta or tb
        if node.op == "-":
            return a - b, ta or tb
        cap = degree if (ta or tb) else None
        return a.mul(b, cap), ta or tb
    if isinstance(node, Pow):
        p, t = _evaluate(node.base, dim, degree, center)
        return p.pow(node.exponent, degree if t else None), t
    if isinstance(node, Call):
        arg, _ = _evaluate(node.arg, dim, degree, center)
        return _series(node.fn, arg.truncate(degree), degree), True
    raise TypeError(f"not an expression node: {node!r}")


def parse_field_component(
    text: str, dim: int, taylor_degree: int = 8, center: Sequence | None = None
) -> Polynomial:
    """Parse one field component into a Polynomial.

    Pure polynomial input is returned exactly.  If the expression contains a
    transcendental call the result is truncated at total degree
    ``taylor_degree``.  With ``center`` the polynomial is expressed in the
    shifted coordinates ``x - center`` and series are expanded about it.
    """
    if taylor_degree < 1:
        raise ValueError("taylor_degree must be >= 1")
    center = [Fraction(c) for c in center] if center is not None else [Fraction(0)] * dim
    if len(center) != dim:
        raise ValueError(f"center has length {len(center)}, expected {dim}")
    node = parse_expression(text, dim)
    try:
        poly, transcendental = _evaluate(node, dim, taylor_degree, center)
    except ValueError as exc:
        raise ParseError(str(exc), None, text) from exc
    return poly.truncate(taylor_degree) if transcendental else poly


def parse_vector_field(
    components: Sequence[str], taylor_degree: int = 8, center: Sequence | None = None
) -> VectorField:
    dim = len(components)
    return VectorField(
        [parse_field_component(c, dim, taylor_degree, center) for c in components]
    )
