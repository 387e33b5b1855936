"""Adapted coordinates at a stationary point and pushforward of fields.

A chart is stored as polynomials ``y(u)`` in the displacement ``u = x - x0``
together with a formal inverse ``u(y)``.  The forward polynomials are the
chart itself (no truncation error); only the inverse is a truncated series.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial
from typing import Sequence

from .errors import TruncationTooLow
from .lie import BracketEvaluator, Filtration, WeightedBracket, enumerate_brackets, translate_fields
from .linalg import exact_inverse, exact_rank
from .polyalg import Polynomial, VectorField


def _linear_map(matrix: Sequence[Sequence], dim: int) -> list[Polynomial]:
    """Components of ``v -> matrix @ v`` as linear polynomials."""
    out = []
    for row in matrix:
        terms = {}
        for j, c in enumerate(row):
            if c:
                mono = [0] * dim
                mono[j] = 1
                terms[tuple(mono)] = Fraction(c)
        out.append(Polynomial(terms, dim))
    return out


def _linear_part(polys: Sequence[Polynomial]) -> list[list[Fraction]]:
    n = polys[0].dim
    unit = lambda j: tuple(int(i == j) for i in range(n))
    return [[p.coefficient(unit(j)) for j in range(n)] for p in polys]


def _is_linear(polys: Sequence[Polynomial]) -> bool:
    return all(p.is_zero() or (p.degree() <= 1 and p.min_degree() >= 1) for p in polys)


def invert_series(polys: Sequence[Polynomial], max_degree: int) -> list[Polynomial]:
    """Formal inverse of a map fixing 0 with invertible linear part.

    Solves ``s = L^{-1} (u - H(s))`` by fixed-point iteration; each pass fixes
    one more degree.  Linear maps are inverted exactly.
    """
    n = len(polys)
    lin = _linear_part(polys)
    try:
        lin_inv = exact_inverse(lin)
    except Exception as exc:
        raise ValueError("linear part is singular") from exc
    first = _linear_map(lin_inv, n)
    if _is_linear(polys):
        return first
    lin_polys = _linear_map(lin, n)
    higher = [p - q for p, q in zip(polys, lin_polys)]
    u = [Polynomial.variable(j, n) for j in range(n)]
    s = first
    for _ in range(max_degree):
        h = [c.compose(s, max_degree) for c in higher]
        rhs = [a - b for a, b in zip(u, h)]
        nxt = [
            sum((r * lin_inv[i][j] for j, r in enumerate(rhs) if lin_inv[i][j]), Polynomial.zero(n)).truncate(max_degree)
            for i in range(n)
        ]
        if nxt == s:
            break
        s = nxt
    return s


def flow_composition(fields: Sequence[VectorField], max_degree: int) -> list[Polynomial]:
    """``s -> exp(s_n Y_n) ... exp(s_1 Y_1)(0)`` as a truncated series.

    The flow of ``fields[0]`` is applied first.  Each exponential is the
    formal series ``sum_j t^j / j! * Y^j(id)``.
    """
    n = fields[0].dim
    point = [Polynomial.zero(n) for _ in range(n)]
    for i, Y in enumerate(fields):
        Y = Y.truncate(max_degree)
        s_i = Polynomial.variable(i, n)
        iterate = [Polynomial.variable(c, n) for c in range(n)]
        new = [Polynomial.zero(n) for _ in range(n)]
        for j in range(max_degree + 1):
            if j > 0:
                iterate = [Y.apply(g, max_degree - j).truncate(max_degree - j) for g in iterate]
                if all(g.is_zero() for g in iterate):
                    break
            weight = s_i.pow(j) / factorial(j)
            for c in range(n):
                if iterate[c].is_zero():
                    continue
                moved = iterate[c].compose(point, max_degree - j)
                new[c] = new[c] + moved.mul(weight, max_degree)
        point = new
    return point


@dataclass(frozen=True)
class AdaptedChart:
    forward: tuple            # y_i as polynomials in u = x - x0
    inverse: tuple            # u_i as polynomials in y
    trunc_deg: int
    weights_w: tuple
    x0: tuple
    exact: bool = False       # forward(inverse(y)) == y with no truncation
    corrected: tuple = ()     # 0-based coordinates rebuilt by the flow construction

    @property
    def dim(self) -> int:
        return len(self.forward)

    def jacobian_at_origin(self) -> list[list[Fraction]]:
        return _linear_part(self.forward)

    def forward_in_original(self) -> list[Polynomial]:
        """``y`` as polynomials in the original ``x``."""
        minus = [-Fraction(c) for c in self.x0]
        return [p.shift(minus) for p in self.forward]

    def require_degree(self, degree: int) -> None:
        if not self.exact and degree > self.trunc_deg - 1:
            raise TruncationTooLow(
                f"need field jets of degree {degree}, chart keeps {self.trunc_deg - 1}"
            )

    def inverted(self) -> AdaptedChart:
        """The chart going back from ``y`` to ``u``, centred at 0."""
        zero = tuple(Fraction(0) for _ in self.x0)
        return AdaptedChart(self.inverse, self.forward, self.trunc_deg, self.weights_w, zero, self.exact)


def identity_chart(filtration: Filtration, trunc_deg: int | None = None) -> AdaptedChart:
    n = filtration.dim
    ident = tuple(Polynomial.variable(j, n) for j in range(n))
    T = trunc_deg if trunc_deg is not None else filtration.step + 2
    return AdaptedChart(ident, ident, T, filtration.weights_w, filtration.x0, True)


def linear_chart(filtration: Filtration, trunc_deg: int | None = None) -> AdaptedChart:
    """``y = M^{-1} u`` where the columns of ``M`` are the basis bracket values."""
    n = filtration.dim
    M = filtration.basis_matrix()
    forward = tuple(_linear_map(exact_inverse(M), n))
    inverse = tuple(_linear_map(M, n))
    T = trunc_deg if trunc_deg is not None else filtration.step + 2
    return AdaptedChart(forward, inverse, T, filtration.weights_w, filtration.x0, True)


# ---------------------------------------------------------------- verification

@dataclass(frozen=True)
class Witness:
    """``word`` applied to coordinate ``coordinate`` (1-based) gives ``value`` at x0."""

    coordinate: int
    word: tuple               # operators left to right; the rightmost acts first
    value: Fraction

    def describe(self, coord_name: str = "y") -> str:
        ops = []
        for tree in self.word:
            s = str(tree).replace("X", "f")
            if ops and ops[-1][0] == s:
                ops[-1][1] += 1
            else:
                ops.append([s, 1])
        text = "".join(f"({s})" + (f"^{p}" if p > 1 else "") for s, p in ops)
        return f"{text}{coord_name}{self.coordinate}(x0) = {self.value}"

    def __str__(self) -> str:
        return self.describe()


@dataclass(frozen=True)
class AdaptedReport:
    prop_i: bool
    prop_ii: bool
    failures: tuple = field(default_factory=tuple)
    witnesses: tuple = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return self.prop_i and self.prop_ii


def _layer_generators(filtration: Filtration) -> list[WeightedBracket]:
    return enumerate_brackets(filtration.k, max(filtration.step, 1))


def word_witnesses(
    ev: BracketEvaluator,
    generators: Sequence[WeightedBracket],
    target: Polynomial,
    budget: int,
    first_only: bool = False,
) -> list[tuple[tuple, Fraction]]:
    """Words ``Z_1...Z_l`` of total weight <= budget with nonzero value on ``target`` at 0.

    Each intermediate polynomial is truncated at the weight still available,
    since every further operator lowers the degree by at most one.
    """
    found: list = []

    def walk(p: Polynomial, remaining: int, word: tuple) -> bool:
        for g in generators:
            if g.weight > remaining:
                continue
            rest = remaining - g.weight
            q = ev.field(g.tree, rest).apply(p.truncate(rest + 1), rest).truncate(rest)
            if q.is_zero():
                continue
            w = (g.tree,) + word
            c = q.constant_term()
            if c:
                found.append((w, c))
                if first_only:
                    return True
            if rest >= 1 and walk(q, rest, w):
                return True
        return False

    walk(target, budget, ())
    return found


def verify_adapted(
    chart: AdaptedChart,
    fields: Sequence[VectorField],
    filtration: Filtration,
    first_only: bool = False,
) -> AdaptedReport:
    """Check both adaptedness properties exactly.

    (i): the chart Jacobian maps each ``L_j(x0)`` onto the first ``d_j`` axes.
    (ii): every word of layer generators with total weight <= j annihilates
    ``y_h`` at x0 whenever ``h > d_j``.
    """
    n = chart.dim
    ev = BracketEvaluator(translate_fields(fields, filtration.x0))
    gens = _layer_generators(filtration)
    J = chart.jacobian_at_origin()
    failures = []
    prop_i = True
    for j in range(1, filtration.step + 1):
        d_j = filtration.d[j]
        images = []
        for g in gens:
            if g.weight > j:
                continue
            v = ev.value_at_origin(g.tree)
            img = [sum(J[r][c] * v[c] for c in range(n)) for r in range(n)]
            if any(img[d_j:]):
                prop_i = False
                failures.append(f"(i) {g} at x0 leaves the first {d_j} axes")
            images.append(img[:d_j])
        if d_j and exact_rank(images) != d_j:
            prop_i = False
            failures.append(f"(i) layer {j} spans fewer than {d_j} axes")
    witnesses = []
    for h in range(n):
        budget = chart.weights_w[h] - 1
        if budget < 1:
            continue
        for word, value in word_witnesses(ev, gens, chart.forward[h], budget, first_only):
            witnesses.append(Witness(h + 1, word, value))
    for w in witnesses:
        failures.append(f"(ii) {w}")
    return AdaptedReport(prop_i, not witnesses, tuple(failures), tuple(witnesses))


# ---------------------------------------------------------------- construction

def build_adapted_chart(
    fields: Sequence[VectorField],
    filtration: Filtration,
    trunc_deg: int | None = None,
) -> AdaptedChart:
    """Adapted chart by a linear change followed by per-coordinate flow corrections."""
    m = filtration.step
    T = m + 2 if trunc_deg is None else trunc_deg
    if T < m:
        raise TruncationTooLow(f"trunc_deg {T} is below the step {m}")
    n = filtration.dim
    ev = BracketEvaluator(translate_fields(fields, filtration.x0))
    gens = _layer_generators(filtration)
    base = linear_chart(filtration, T)
    forward = list(base.forward)
    corrected = []
    Y = None
    for h in range(n):
        budget = filtration.weights_w[h] - 1
        if budget < 1 or not word_witnesses(ev, gens, forward[h], budget, first_only=True):
            continue
        if Y is None:
            Y = [ev.field(b.bracket.tree, T) for b in filtration.basis]
        order = [i for i in range(n) if i != h] + [h]
        flow = flow_composition([Y[i] for i in order], T)
        forward[h] = invert_series(flow, T)[-1]
        corrected.append(h)
    if corrected:
        inverse = invert_series(forward, T)
        exact = all(
            f.compose(inverse) == Polynomial.variable(i, n) for i, f in enumerate(forward)
        )
        chart = AdaptedChart(tuple(forward), tuple(inverse), T, filtration.weights_w,
                             filtration.x0, exact, tuple(corrected))
    else:
        chart = base
    report = verify_adapted(chart, fields, filtration, first_only=True)
    if not report.ok:
        raise TruncationTooLow(
            f"chart fails adaptedness at trunc_deg {T}: {'; '.join(report.failures[:3])}"
        )
    return chart


def transform_field(V: VectorField, chart: AdaptedChart, centred: bool = False) -> VectorField:
    """Pushforward ``Dy(x(y)) V(x(y))`` in chart coordinates.

    ``V`` is given in the original coordinates unless ``centred`` is set, in
    which case it is already expressed in ``u = x - x0``.  The result is kept
    to degree ``trunc_deg - 1`` unless the chart inverse is exact.
    """
    if V.dim != chart.dim:
        raise ValueError(f"field has dim {V.dim}, chart has dim {chart.dim}")
    n = chart.dim
    if not centred:
        V = V.shift(chart.x0)
    cap = None if chart.exact else chart.trunc_deg - 1
    G = list(chart.inverse)
    Vy = [c.compose(G, cap) for c in V.components]
    out = []
    for F in chart.forward:
        acc = Polynomial.zero(n)
        for j in range(n):
            dF = F.diff(j)
            if dF.is_zero() or Vy[j].is_zero():
                continue
            acc = acc + dF.compose(G, cap).mul(Vy[j], cap)
        out.append(acc if cap is None else acc.truncate(cap))
    return VectorField(out)


def transform_fields(fields: Sequence[VectorField], chart: AdaptedChart) -> list[VectorField]:
    return [transform_field(f, chart) for f in fields]
