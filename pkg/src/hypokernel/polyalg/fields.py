"""Polynomial vector fields acting as derivations."""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Sequence

import numpy as np

from .polynomial import DimensionMismatch, Polynomial, format_polynomial


class VectorField:
    """``sum_j components[j] * d/dx_{j+1}`` with polynomial components."""

    __slots__ = ("components", "dim", "_hash")

    def __init__(self, components: Sequence[Polynomial]):
        comps = tuple(components)
        if not comps:
            raise ValueError("a vector field needs at least one component")
        dim = comps[0].dim
        if len(comps) != dim or any(c.dim != dim for c in comps):
            raise DimensionMismatch(
                f"vector field on R^{dim} needs {dim} components of dim {dim}"
            )
        self.components = comps
        self.dim = dim
        self._hash = None

    @classmethod
    def zero(cls, dim: int) -> VectorField:
        return cls([Polynomial.zero(dim)] * dim)

    @classmethod
    def coordinate(cls, j: int, dim: int) -> VectorField:
        """The constant field d/dx_{j+1} (0-based ``j``)."""
        return cls([Polynomial.constant(1 if i == j else 0, dim) for i in range(dim)])

    @classmethod
    def constant(cls, vector: Sequence) -> VectorField:
        dim = len(vector)
        return cls([Polynomial.constant(v, dim) for v in vector])

    @classmethod
    def linear(cls, A: Sequence[Sequence]) -> VectorField:
        """The field x -> A x."""
        n = len(A)
        comps = []
        for i in range(n):
            terms = {}
            for j in range(n):
                if A[i][j]:
                    mono = [0] * n
                    mono[j] = 1
                    terms[tuple(mono)] = Fraction(A[i][j])
            comps.append(Polynomial(terms, n))
        return cls(comps)

    def __getitem__(self, j: int) -> Polynomial:
        return self.components[j]

    def __iter__(self):
        return iter(self.components)

    def __len__(self) -> int:
        return self.dim

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def __eq__(self, other) -> bool:
        if not isinstance(other, VectorField):
            return NotImplemented
        return self.components == other.components

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.components)
        return self._hash

    def _check(self, other: VectorField) -> None:
        if other.dim != self.dim:
            raise DimensionMismatch(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: VectorField) -> VectorField:
        self._check(other)
        return VectorField([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: VectorField) -> VectorField:
        self._check(other)
        return VectorField([a - b for a, b in zip(self.components, other.components)])

    def __neg__(self) -> VectorField:
        return VectorField([-a for a in self.components])

    def __mul__(self, scalar) -> VectorField:
        """Multiply by a rational or by a polynomial function."""
        if isinstance(scalar, (int, Rational, Polynomial)):
            return VectorField([a * scalar for a in self.components])
        return NotImplemented

    __rmul__ = __mul__

    def apply(self, p: Polynomial, max_degree: int | None = None) -> Polynomial:
        """Directional derivative ``sum_j V^j dp/dx_j``."""
        if p.dim != self.dim:
            raise DimensionMismatch(f"dimension mismatch: {self.dim} vs {p.dim}")
        out = Polynomial.zero(self.dim)
        for j, comp in enumerate(self.components):
            if comp.is_zero():
                continue
            dp = p.diff(j)
            if not dp.is_zero():
                out = out + comp.mul(dp, max_degree)
        return out

    def bracket(self, other: VectorField, max_degree: int | None = None) -> VectorField:
        """Lie bracket ``[self, other]``; component j is self(other^j) - other(self^j)."""
        self._check(other)
        return VectorField(
            [
                self.apply(w, max_degree) - other.apply(v, max_degree)
                for v, w in zip(self.components, other.components)
            ]
        )

    def divergence(self) -> Polynomial:
        out = Polynomial.zero(self.dim)
        for j, comp in enumerate(self.components):
            out = out + comp.diff(j)
        return out

    def evaluate(self, point: Sequence) -> list:
        return [c.evaluate(point) for c in self.components]

    def truncate(self, max_degree: int) -> VectorField:
        return VectorField([c.truncate(max_degree) for c in self.components])

    def degree(self) -> int:
        return max(c.degree() for c in self.components)

    def shift(self, center: Sequence) -> VectorField:
        """Express the field in coordinates centred at ``center``."""
        if not any(center):
            return self
        return VectorField([c.shift(center) for c in self.components])

    def to_numpy(self):
        """Return ``F(X)`` mapping an array ``(dim, ...)`` to ``(dim, ...)``."""
        fns = [c.to_numpy() for c in self.components]

        def F(X):
            X = np.asarray(X, dtype=float)
            return np.stack([f(X) for f in fns])

        return F

    def __str__(self) -> str:
        return format_field(self)

    def __repr__(self) -> str:
        return f"VectorField({format_field(self)!r})"


def format_field(V: VectorField, names: Sequence[str] | None = None) -> str:
    names = names or [f"x{j + 1}" for j in range(V.dim)]
    parts = []
    for j, c in enumerate(V.components):
        if c.is_zero():
            continue
        parts.append(f"({format_polynomial(c, names)})*d/d{names[j]}")
    return " + ".join(parts) if parts else "0"


def apply_field(V: VectorField, p: Polynomial) -> Polynomial:
    return V.apply(p)


def lie_bracket(V: VectorField, W: VectorField) -> VectorField:
    return V.bracket(W)
