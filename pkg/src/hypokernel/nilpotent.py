"""Graded orders, weighted truncation and the nilpotent approximating system."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .chart import AdaptedChart, transform_fields
from .errors import HypoKernelError, HormanderUndecided
from .lie import (
    BracketEvaluator,
    Filtration,
    enumerate_brackets,
    filtration_at_point,
    letter_weight,
)
from .linalg import exact_inverse, exact_rank
from .polyalg import Polynomial, VectorField


@dataclass(frozen=True)
class GradedStructure:
    weights_w: tuple
    step: int
    N: int

    def __post_init__(self):
        w = self.weights_w
        if any(a > b for a, b in zip(w, w[1:])):
            raise ValueError("coordinate weights must be non-decreasing")
        if sum(w) != self.N:
            raise ValueError("N must equal the sum of coordinate weights")

    @classmethod
    def from_filtration(cls, filtration: Filtration) -> GradedStructure:
        return cls(filtration.weights_w, filtration.step, filtration.N)

    @classmethod
    def from_weights(cls, weights: Sequence[int]) -> GradedStructure:
        w = tuple(weights)
        return cls(w, max(w), sum(w))

    @property
    def dim(self) -> int:
        return len(self.weights_w)

    def monomial_weight(self, mono: Sequence[int]) -> int:
        return sum(a * w for a, w in zip(mono, self.weights_w))


def graded_order(p: Polynomial, g: GradedStructure) -> float:
    """Smallest weighted degree among the monomials of ``p`` (``inf`` for 0)."""
    if p.is_zero():
        return math.inf
    return min(g.monomial_weight(m) for m, _ in p.items())


def polynomial_weight(p: Polynomial, g: GradedStructure) -> float:
    """Largest weighted degree among the monomials of ``p`` (``-inf`` for 0)."""
    if p.is_zero():
        return -math.inf
    return max(g.monomial_weight(m) for m, _ in p.items())


def _term_weights(V: VectorField, g: GradedStructure):
    for j, comp in enumerate(V.components):
        for mono, c in comp.items():
            yield j, mono, c, g.weights_w[j] - g.monomial_weight(mono)


def field_graded_order(V: VectorField, g: GradedStructure) -> float:
    """Largest ``w_j - W(alpha)`` over all terms; a term ``x^alpha d/dx_j`` of a
    weight-h homogeneous field contributes exactly h."""
    if V.is_zero():
        return -math.inf
    return max(t[3] for t in _term_weights(V, g))


def graded_truncate(V: VectorField, target_weight: int, g: GradedStructure) -> VectorField:
    """Keep the terms whose field weight ``w_j - W(alpha)`` equals ``target_weight``."""
    comps = []
    for j, comp in enumerate(V.components):
        wj = g.weights_w[j]
        comps.append(comp.filter_terms(lambda m: wj - g.monomial_weight(m) == target_weight))
    return VectorField(comps)


def dilate(p: Polynomial, eps, g: GradedStructure) -> Polynomial:
    """``p o delta_eps``: each monomial picks up ``eps`` to its weight."""
    return p.scale_variables([Fraction(eps) ** w for w in g.weights_w])


def pushforward_dilation(V: VectorField, eps, g: GradedStructure) -> VectorField:
    """``(delta_eps)_* V``: component j is ``eps^{w_j} V_j(delta_{1/eps} y)``."""
    eps = Fraction(eps)
    inv = [eps ** -w for w in g.weights_w]
    return VectorField([
        c.scale_variables(inv) * (eps ** w) for c, w in zip(V.components, g.weights_w)
    ])


@dataclass(frozen=True)
class NilpotentSystem:
    fhat: tuple                               # (f0_hat, f1_hat, ..., fk_hat)
    graded: GradedStructure
    transformed: tuple | None = field(default=None, compare=False)  # originals in chart coordinates

    @property
    def drift(self) -> VectorField:
        return self.fhat[0]

    @property
    def diffusions(self) -> tuple:
        return self.fhat[1:]

    @property
    def dim(self) -> int:
        return self.graded.dim

    @property
    def k(self) -> int:
        return len(self.fhat) - 1

    def zero_fields(self) -> list[int]:
        return [i for i, f in enumerate(self.fhat) if f.is_zero()]


class ApproximationError(HypoKernelError):
    """The truncated system violates a structural property of the construction."""


def nilpotency_check(fhat: Sequence[VectorField], step: int) -> bool:
    """Hall brackets of weight ``step + 1`` and ``step + 2`` vanish identically."""
    ev = BracketEvaluator(fhat)
    for b in enumerate_brackets(len(fhat) - 1, step + 2):
        if b.weight > step and not ev.field(b.tree).is_zero():
            return False
    return True


def nilpotent_approximation(
    fields: Sequence[VectorField],
    chart: AdaptedChart,
    filtration: Filtration,
) -> NilpotentSystem:
    """Weight-2 part of the drift and weight-1 parts of the diffusion fields in chart coordinates."""
    g = GradedStructure.from_filtration(filtration)
    chart.require_degree(filtration.step - 1)
    transformed = transform_fields(fields, chart)
    fhat = []
    for i, V in enumerate(transformed):
        li = letter_weight(i)
        over = [t for t in _term_weights(V, g) if t[3] > li]
        if over:
            j, mono, c, w = over[0]
            raise ApproximationError(
                f"field {i} has a term of weight {w} > {li} in component {j + 1}; chart not adapted"
            )
        fhat.append(graded_truncate(V, li, g))
    if any(fhat[0].evaluate([0] * g.dim)):
        raise ApproximationError("truncated drift does not vanish at the origin")
    if not nilpotency_check(fhat, g.step):
        raise ApproximationError("truncated system is not nilpotent of the expected step")
    return NilpotentSystem(tuple(fhat), g, tuple(transformed))


def check_homogeneity(ns: NilpotentSystem, eps) -> bool:
    """Exact test of ``(delta_eps)_* fhat_i = eps^{l_i} fhat_i``."""
    eps = Fraction(eps)
    for i, V in enumerate(ns.fhat):
        if pushforward_dilation(V, eps, ns.graded) != V * (eps ** letter_weight(i)):
            return False
    return True


def is_homogeneous(V: VectorField, weight: int, g: GradedStructure, eps=Fraction(1, 3)) -> bool:
    eps = Fraction(eps)
    return pushforward_dilation(V, eps, g) == V * (eps ** weight)


@dataclass(frozen=True)
class LieEqualityResult:
    equal: bool
    d_original: tuple
    d_nilpotent: tuple

    def __bool__(self) -> bool:
        return self.equal


def lie_algebra_equality_check(
    fields: Sequence[VectorField] | None,
    ns: NilpotentSystem,
    x0: Sequence | None = None,
    rank_tol: float = 1e-10,
    exact: bool = True,
) -> LieEqualityResult:
    """Compare layer dimensions of the original fields (in chart coordinates) and of ``fhat`` at 0."""
    if fields is None:
        fields = ns.transformed
    cap = ns.graded.step + 2

    def dims(fs, point):
        try:
            return filtration_at_point(fs, point, cap, rank_tol, exact).d
        except HormanderUndecided as exc:
            return exc.dims

    d_orig = dims(fields, x0)
    d_hat = dims(ns.fhat, None)
    return LieEqualityResult(d_orig == d_hat and d_orig[-1] == ns.dim, d_orig, d_hat)


def bracket_compatibility_check(ns: NilpotentSystem, weight_cap: int | None = None) -> list:
    """Brackets whose original and approximated values at 0 differ outside ``L_{i-1}(0)``.

    An empty list means every Hall bracket of weight ``i`` satisfies
    ``Lambda_f(0) - Lambda_fhat(0) in L_{i-1}(0)``.
    """
    cap = ns.graded.step if weight_cap is None else weight_cap
    ev_f = BracketEvaluator(ns.transformed)
    ev_h = BracketEvaluator(ns.fhat)
    brackets = enumerate_brackets(ns.k, cap)
    bad = []
    for b in brackets:
        lower = [ev_f.value_at_origin(c.tree) for c in brackets if c.weight < b.weight]
        lower = [v for v in lower if any(v)]
        diff = [p - q for p, q in zip(ev_f.value_at_origin(b.tree), ev_h.value_at_origin(b.tree))]
        if any(diff) and exact_rank(lower + [diff]) > exact_rank(lower):
            bad.append(b)
    return bad


def divergence_drift_adjust(fields: Sequence[VectorField], x0: Sequence | None = None) -> VectorField:
    """``f0 + 1/2 sum_i div(f_i) f_i`` with respect to Lebesgue measure."""
    drift = fields[0]
    for f in fields[1:]:
        div = f.divergence()
        if not div.is_zero():
            drift = drift + f * (div * Fraction(1, 2))
    return drift


def linear_pushforward(V: VectorField, T: Sequence[Sequence]) -> VectorField:
    """``T_* V(y) = T V(T^{-1} y)`` for an invertible rational matrix ``T``."""
    n = V.dim
    Tinv = exact_inverse(T)
    lin = [
        sum((Polynomial.variable(j, n) * Tinv[i][j] for j in range(n) if Tinv[i][j]), Polynomial.zero(n))
        for i in range(n)
    ]
    moved = [c.compose(lin) for c in V.components]
    return VectorField([
        sum((moved[j] * Fraction(T[i][j]) for j in range(n) if T[i][j]), Polynomial.zero(n))
        for i in range(n)
    ])


def graded_equivalence(a: NilpotentSystem, b_fields: Sequence[VectorField]) -> list[list[Fraction]] | None:
    """A layer-preserving linear map carrying ``a.fhat`` onto ``b_fields``, or None.

    The map is pinned by evaluating a's basis brackets on both systems at 0.
    """
    filt = filtration_at_point(list(a.fhat), None, a.graded.step + 2, exact=True)
    ev_b = BracketEvaluator(b_fields)
    Ma = filt.basis_matrix()
    cols = [ev_b.value_at_origin(e.bracket.tree) for e in filt.basis]
    n = a.dim
    Mb = [[cols[j][i] for j in range(n)] for i in range(n)]
    if exact_rank(Mb) < n:
        return None
    Ma_inv = exact_inverse(Ma)
    T = [[sum(Mb[i][k] * Ma_inv[k][j] for k in range(n)) for j in range(n)] for i in range(n)]
    w = a.graded.weights_w
    if any(T[i][j] for i in range(n) for j in range(n) if w[i] != w[j]):
        return None
    for V, W in zip(a.fhat, b_fields):
        if linear_pushforward(V, T) != W:
            return None
    return T
