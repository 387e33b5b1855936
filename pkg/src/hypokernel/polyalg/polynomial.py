"""Exact multivariate polynomials over the rationals."""

from __future__ import annotations

from fractions import Fraction
from functools import reduce
from numbers import Rational
from typing import Iterable, Mapping, Sequence

import numpy as np

Monomial = tuple  # tuple of non-negative ints, one exponent per coordinate


def _as_fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, (int, Rational)):
        return Fraction(c)
    if isinstance(c, str):
        return Fraction(c)
    raise TypeError(f"coefficient must be rational, got {type(c).__name__}")


def _glex_key(mono: Monomial):
    # ascending total degree; within a degree, x1^2 before x1*x2 before x2^2
    return (sum(mono), tuple(-e for e in mono))


class DimensionMismatch(ValueError):
    pass


class Polynomial:
    """Immutable polynomial in ``dim`` variables with Fraction coefficients.

    Terms are stored as ``{exponents: coefficient}`` with zero coefficients
    removed, so two polynomials are equal iff their term dicts are equal.
    """

    __slots__ = ("dim", "_terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, object] | None = None, dim: int = 1):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        clean = {}
        for mono, c in (terms or {}).items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != dim:
                raise DimensionMismatch(f"monomial {mono} has length {len(mono)}, expected {dim}")
            if any(e < 0 for e in mono):
                raise ValueError(f"negative exponent in {mono}")
            c = _as_fraction(c)
            if c:
                clean[mono] = clean.get(mono, Fraction(0)) + c
                if not clean[mono]:
                    del clean[mono]
        self.dim = dim
        self._terms = clean
        self._hash = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, dim: int) -> Polynomial:
        return cls({}, dim)

    @classmethod
    def constant(cls, c, dim: int) -> Polynomial:
        return cls({(0,) * dim: c}, dim)

    @classmethod
    def variable(cls, j: int, dim: int) -> Polynomial:
        """The coordinate function x_{j+1} (0-based ``j``)."""
        if not 0 <= j < dim:
            raise IndexError(f"variable index {j} out of range for dim {dim}")
        mono = [0] * dim
        mono[j] = 1
        return cls({tuple(mono): 1}, dim)

    @classmethod
    def _raw(cls, terms: dict, dim: int) -> Polynomial:
        # trusted fast path: terms already clean
        p = cls.__new__(cls)
        p.dim = dim
        p._terms = terms
        p._hash = None
        return p

    # -- inspection ---------------------------------------------------------

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        """Terms in graded lexicographic order."""
        return sorted(self._terms.items(), key=lambda kv: _glex_key(kv[0]))

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(m) for m in self._terms), default=-1)

    def min_degree(self) -> int:
        """Smallest total degree among terms; -1 for the zero polynomial."""
        return min((sum(m) for m in self._terms), default=-1)

    def coefficient(self, mono: Sequence[int]) -> Fraction:
        return self._terms.get(tuple(mono), Fraction(0))

    def constant_term(self) -> Fraction:
        return self._terms.get((0,) * self.dim, Fraction(0))

    def is_constant(self) -> bool:
        return all(not any(m) for m in self._terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, Polynomial):
            return self.dim == other.dim and self._terms == other._terms
        if isinstance(other, (int, Rational)):
            return self == Polynomial.constant(other, self.dim)
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.dim, frozenset(self._terms.items())))
        return self._hash

    # -- ring operations ----------------------------------------------------

    def _coerce(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            if other.dim != self.dim:
                raise DimensionMismatch(f"dimension mismatch: {self.dim} vs {other.dim}")
            return other
        if isinstance(other, (int, Rational)):
            return Polynomial.constant(other, self.dim)
        raise TypeError(f"cannot combine Polynomial with {type(other).__name__}")

    def __add__(self, other) -> Polynomial:
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        out = dict(self._terms)
        for m, c in other._terms.items():
            s = out.get(m, 0) + c
            if s:
                out[m] = s
            else:
                out.pop(m, None)
        return Polynomial._raw(out, self.dim)

    __radd__ = __add__

    def __neg__(self) -> Polynomial:
        return Polynomial._raw({m: -c for m, c in self._terms.items()}, self.dim)

    def __sub__(self, other) -> Polynomial:
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> Polynomial:
        return (-self) + other

    def mul(self, other, max_degree: int | None = None) -> Polynomial:
        """Product, optionally discarding terms of total degree > ``max_degree``."""
        other = self._coerce(other)
        out: dict = {}
        for m1, c1 in self._terms.items():
            d1 = sum(m1)
            for m2, c2 in other._terms.items():
                if max_degree is not None and d1 + sum(m2) > max_degree:
                    continue
                m = tuple(a + b for a, b in zip(m1, m2))
                s = out.get(m, 0) + c1 * c2
                if s:
                    out[m] = s
                else:
                    out.pop(m, None)
        return Polynomial._raw(out, self.dim)

    def __mul__(self, other) -> Polynomial:
        if isinstance(other, (int, Rational)):
            c = Fraction(other)
            if not c:
                return Polynomial.zero(self.dim)
            return Polynomial._raw({m: v * c for m, v in self._terms.items()}, self.dim)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.mul(other)

    __rmul__ = __mul__

    def __truediv__(self, other) -> Polynomial:
        if isinstance(other, (int, Rational)):
            return self * (1 / Fraction(other))
        return NotImplemented

    def pow(self, k: int, max_degree: int | None = None) -> Polynomial:
        if k < 0:
            raise ValueError("negative exponent")
        result = Polynomial.constant(1, self.dim)
        base = self
        while k:
            if k & 1:
                result = result.mul(base, max_degree)
            k >>= 1
            if k:
                base = base.mul(base, max_degree)
        return result

    def __pow__(self, k: int) -> Polynomial:
        return self.pow(k)

    # -- calculus and truncation -------------------------------------------

    def diff(self, j: int) -> Polynomial:
        """Partial derivative in the 0-based coordinate ``j``."""
        if not 0 <= j < self.dim:
            raise IndexError(f"coordinate {j} out of range for dim {self.dim}")
        out = {}
        for m, c in self._terms.items():
            e = m[j]
            if e:
                mm = list(m)
                mm[j] = e - 1
                out[tuple(mm)] = c * e
        return Polynomial._raw(out, self.dim)

    def truncate(self, max_degree: int) -> Polynomial:
        """Drop every term of total degree > ``max_degree``."""
        return Polynomial._raw(
            {m: c for m, c in self._terms.items() if sum(m) <= max_degree}, self.dim
        )

    def homogeneous_part(self, degree: int) -> Polynomial:
        return Polynomial._raw({m: c for m, c in self._terms.items() if sum(m) == degree}, self.dim)

    def filter_terms(self, keep) -> Polynomial:
        """Keep the terms for which ``keep(monomial)`` is true."""
        return Polynomial._raw({m: c for m, c in self._terms.items() if keep(m)}, self.dim)

    def map_coefficients(self, fn) -> Polynomial:
        return Polynomial({m: fn(m, c) for m, c in self._terms.items()}, self.dim)

    # -- evaluation and substitution ---------------------------------------

    def __call__(self, *point):
        if len(point) == 1 and isinstance(point[0], (list, tuple, np.ndarray)):
            point = point[0]
        return self.evaluate(point)

    def evaluate(self, point: Sequence):
        """Value at ``point``; exact for rational input, float otherwise."""
        if len(point) != self.dim:
            raise DimensionMismatch(f"point has length {len(point)}, expected {self.dim}")
        exact = all(isinstance(v, (int, Rational)) for v in point)
        pt = [Fraction(v) for v in point] if exact else [float(v) for v in point]
        total = Fraction(0) if exact else 0.0
        powers: dict = {}
        for m, c in self._terms.items():
            term = c if exact else float(c)
            for j, e in enumerate(m):
                if e:
                    key = (j, e)
                    if key not in powers:
                        powers[key] = pt[j] ** e
                    term = term * powers[key]
            total += term
        return total

    def compose(self, subs: Sequence[Polynomial], max_degree: int | None = None) -> Polynomial:
        """Substitute ``subs[j]`` for x_{j+1}.  All substitutes share one dimension.

        With ``max_degree`` the result is truncated; this is exact up to that
        degree provided the substitutes have no constant term.
        """
        if len(subs) != self.dim:
            raise DimensionMismatch(f"need {self.dim} substitutes, got {len(subs)}")
        if not subs:
            raise ValueError("empty substitution")
        target = subs[0].dim
        if any(s.dim != target for s in subs):
            raise DimensionMismatch("substitutes have different dimensions")
        cache: dict = {}

        def power(j, e):
            key = (j, e)
            if key not in cache:
                if e == 1:
                    cache[key] = subs[j]
                else:
                    cache[key] = power(j, e - 1).mul(subs[j], max_degree)
            return cache[key]

        acc: dict = {}
        one = Polynomial.constant(1, target)
        for m, c in self._terms.items():
            term = one
            for j, e in enumerate(m):
                if e:
                    term = term.mul(power(j, e), max_degree)
            for mm, cc in term._terms.items():
                s = acc.get(mm, 0) + c * cc
                if s:
                    acc[mm] = s
                else:
                    acc.pop(mm, None)
        out = Polynomial._raw(acc, target)
        return out if max_degree is None else out.truncate(max_degree)

    def shift(self, center: Sequence) -> Polynomial:
        """The polynomial x -> p(x + center)."""
        subs = [Polynomial.variable(j, self.dim) + _as_fraction(center[j]) for j in range(self.dim)]
        return self.compose(subs)

    def scale_variables(self, factors: Sequence) -> Polynomial:
        """The polynomial x -> p(factors * x), computed monomial by monomial."""
        fs = [_as_fraction(f) for f in factors]
        out = {}
        for m, c in self._terms.items():
            out[m] = c * reduce(lambda a, b: a * b, (f**e for f, e in zip(fs, m)), Fraction(1))
        return Polynomial(out, self.dim)

    def to_numpy(self):
        """Return ``f(X)`` evaluating on an array of shape ``(dim, ...)``."""
        items = [(np.array(m), float(c)) for m, c in self.items()]
        dim = self.dim
        maxdeg = [max((m[j] for m, _ in items), default=0) for j in range(dim)]

        def f(X):
            X = np.asarray(X, dtype=float)
            out = np.zeros(X.shape[1:])
            if not items:
                return out
            pows = [[None, X[j]] for j in range(dim)]
            for j in range(dim):
                for e in range(2, maxdeg[j] + 1):
                    pows[j].append(pows[j][-1] * X[j])
            for m, c in items:
                term = None
                for j, e in enumerate(m):
                    if e:
                        term = pows[j][e] if term is None else term * pows[j][e]
                out = out + (c if term is None else c * term)
            return out

        return f

    # -- printing -----------------------------------------------------------

    def __str__(self) -> str:
        return format_polynomial(self)

    def __repr__(self) -> str:
        return f"Polynomial({format_polynomial(self)!r}, dim={self.dim})"


def format_polynomial(p: Polynomial, names: Sequence[str] | None = None) -> str:
    """Render in the parser's input syntax, terms in graded lex order."""
    if p.is_zero():
        return "0"
    names = names or [f"x{j + 1}" for j in range(p.dim)]
    parts = []
    for m, c in p.items():
        factors = []
        for j, e in enumerate(m):
            if e == 1:
                factors.append(names[j])
            elif e > 1:
                factors.append(f"{names[j]}^{e}")
        mag = abs(c)
        if not factors:
            body = str(mag)
        elif mag == 1:
            body = "*".join(factors)
        else:
            body = f"{mag}*" + "*".join(factors)
        if not parts:
            parts.append(body if c > 0 else f"-{body}")
        else:
            parts.append(f"+ {body}" if c > 0 else f"- {body}")
    return " ".join(parts)


def ring_op(op: str, p: Polynomial, q: Polynomial) -> Polynomial:
    """``op`` is one of ``add``, ``subtract``, ``multiply``."""
    if p.dim != q.dim:
        raise DimensionMismatch(f"dimension mismatch: {p.dim} vs {q.dim}")
    if op == "add":
        return p + q
    if op == "subtract":
        return p - q
    if op == "multiply":
        return p * q
    raise ValueError(f"unknown ring operation {op!r}")


def partial_derivative(p: Polynomial, j: int) -> Polynomial:
    """Formal partial derivative in the 1-based coordinate ``j``."""
    if not 1 <= j <= p.dim:
        raise IndexError(f"coordinate index {j} out of range 1..{p.dim}")
    return p.diff(j - 1)


def evaluate(p: Polynomial, point: Sequence):
    return p.evaluate(point)


def polynomials_from(values: Iterable, dim: int) -> list[Polynomial]:
    return [v if isinstance(v, Polynomial) else Polynomial.constant(v, dim) for v in values]
