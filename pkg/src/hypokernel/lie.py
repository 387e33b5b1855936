"""Weighted Lie brackets, the bracket filtration at a point, and the order N.

Brackets are formal trees over letters X0 (the drift) and X1..Xk (the
diffusion fields).  The drift letter carries weight 2 and every other letter
weight 1, so a bracket's weight is ``2*|b|_0 + sum_i |b|_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .errors import DriftNotStationary, HormanderUndecided
from .linalg import exact_rank, float_rank, is_exact, rank as matrix_rank
from .polyalg import VectorField

DRIFT_WEIGHT = 2
DIFFUSION_WEIGHT = 1


def letter_weight(i: int) -> int:
    return DRIFT_WEIGHT if i == 0 else DIFFUSION_WEIGHT


@dataclass(frozen=True)
class BracketTree:
    """A leaf ``X_letter`` or a node ``[left, right]``."""

    letter: int | None = None
    left: "BracketTree | None" = None
    right: "BracketTree | None" = None

    def __post_init__(self):
        if (self.letter is None) == (self.left is None or self.right is None):
            raise ValueError("a bracket tree is either a letter or a pair of subtrees")
        if self.letter is not None and self.letter < 0:
            raise ValueError("letter indices are non-negative")

    @classmethod
    def leaf(cls, i: int) -> BracketTree:
        return cls(letter=i)

    @classmethod
    def node(cls, left: BracketTree, right: BracketTree) -> BracketTree:
        return cls(left=left, right=right)

    @property
    def is_leaf(self) -> bool:
        return self.letter is not None

    def leaves(self):
        if self.is_leaf:
            yield self.letter
        else:
            yield from self.left.leaves()
            yield from self.right.leaves()

    def max_letter(self) -> int:
        return max(self.leaves())

    def __str__(self) -> str:
        if self.is_leaf:
            return f"X{self.letter}"
        return f"[{self.left},{self.right}]"


def X(i: int) -> BracketTree:
    return BracketTree.leaf(i)


def br(a: BracketTree, b: BracketTree) -> BracketTree:
    return BracketTree.node(a, b)


@dataclass(frozen=True)
class WeightedBracket:
    tree: BracketTree
    lengths: tuple
    weight: int

    def __str__(self) -> str:
        return str(self.tree)


def bracket_weight(tree: BracketTree, k: int | None = None) -> WeightedBracket:
    """Letter counts and weight of ``tree``; ``k`` fixes the length vector size."""
    top = tree.max_letter()
    if k is None:
        k = top
    elif top > k:
        raise ValueError(f"letter X{top} exceeds k={k}")
    lengths = [0] * (k + 1)
    for i in tree.leaves():
        lengths[i] += 1
    weight = sum(letter_weight(i) * c for i, c in enumerate(lengths))
    return WeightedBracket(tree, tuple(lengths), weight)


def enumerate_brackets(k: int, weight_cap: int) -> list[WeightedBracket]:
    """A Hall family on X1 < ... < Xk < X0, sorted by weight.

    A compound ``[u, v]`` is kept when ``u < v`` and either ``v`` is a letter
    or ``v = [x, y]`` with ``x <= u``.  Within one weight, letters come first,
    then compounds ordered by the positions of ``(u, v)``.  The result is a
    basis of the free Lie algebra truncated at ``weight_cap``.
    """
    if weight_cap < 1:
        raise ValueError("weight_cap must be >= 1")
    if k < 0:
        raise ValueError("k must be >= 0")
    letters = list(range(1, k + 1)) + [0]
    hall: list[WeightedBracket] = []
    position: dict[BracketTree, int] = {}

    def add(wb: WeightedBracket) -> None:
        position[wb.tree] = len(hall)
        hall.append(wb)

    for w in range(1, weight_cap + 1):
        for i in letters:
            if letter_weight(i) == w:
                add(bracket_weight(X(i), k))
        new = []
        for pu, u in enumerate(hall):
            for pv in range(pu + 1, len(hall)):
                v = hall[pv]
                if u.weight + v.weight != w:
                    continue
                if not v.tree.is_leaf and position[v.tree.left] > pu:
                    continue
                new.append(WeightedBracket(
                    br(u.tree, v.tree),
                    tuple(a + b for a, b in zip(u.lengths, v.lengths)),
                    w,
                ))
        for wb in new:
            add(wb)
    return hall


class BracketEvaluator:
    """Caches truncated jets of bracket fields ``Lambda_f``.

    ``fields[i]`` is the field substituted for ``X_i``.  A jet of degree ``D``
    of ``[u, v]`` only needs jets of degree ``D + 1`` of ``u`` and ``v``.
    """

    def __init__(self, fields: Sequence[VectorField]):
        self.fields = list(fields)
        self._cache: dict = {}

    def field(self, tree: BracketTree, degree: int | None = None) -> VectorField:
        key = (tree, degree)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if tree.is_leaf:
            f = self.fields[tree.letter]
            out = f if degree is None else f.truncate(degree)
        else:
            sub = None if degree is None else degree + 1
            a = self.field(tree.left, sub)
            b = self.field(tree.right, sub)
            out = a.bracket(b, degree)
            if degree is not None:
                out = out.truncate(degree)
        self._cache[key] = out
        return out

    def value_at_origin(self, tree: BracketTree) -> list:
        return [c.constant_term() for c in self.field(tree, 0).components]


@dataclass(frozen=True)
class BasisElement:
    bracket: WeightedBracket
    value: tuple

    @property
    def weight(self) -> int:
        return self.bracket.weight


@dataclass(frozen=True)
class Filtration:
    """Layer dimensions of the bracket filtration at ``x0``.

    ``d[i]`` is ``dim L_i(x0)`` for ``i = 0..step``; ``basis`` lists ``n``
    bracket values in layer order, so ``basis[j]`` has weight ``weights_w[j]``.
    """

    d: tuple
    step: int
    basis: tuple
    x0: tuple
    k: int
    exact: bool = False
    rank_tol: float = 1e-10

    @property
    def dim(self) -> int:
        return self.d[-1]

    @property
    def k_layers(self) -> tuple:
        return tuple(self.d[i] - self.d[i - 1] for i in range(1, len(self.d)))

    @property
    def weights_w(self) -> tuple:
        w = []
        for i in range(1, len(self.d)):
            w.extend([i] * (self.d[i] - self.d[i - 1]))
        return tuple(w)

    @property
    def N(self) -> int:
        return homogeneity_order(self.k_layers)

    def layer_slice(self, i: int) -> slice:
        """Coordinates (0-based) whose weight is exactly ``i``."""
        return slice(self.d[i - 1], self.d[i])

    def basis_matrix(self) -> list[list]:
        """Columns are the basis bracket values at ``x0``."""
        n = self.dim
        return [[self.basis[j].value[i] for j in range(n)] for i in range(n)]


def homogeneity_order(k_layers: Sequence[int]) -> int:
    """``N = sum_i i * k_i`` with ``k_layers[0] = k_1``."""
    return sum((i + 1) * k for i, k in enumerate(k_layers))


def _check_stationary(drift: VectorField, x0: Sequence) -> None:
    value = drift.evaluate(x0)
    if is_exact([value]):
        bad = any(value)
    else:
        bad = any(abs(float(v)) > 1e-12 for v in value)
    if bad:
        raise DriftNotStationary(f"drift at x0 is {[str(v) for v in value]}, expected 0")


def translate_fields(fields: Sequence[VectorField], x0: Sequence) -> list[VectorField]:
    return [f.shift([Fraction(c) for c in x0]) for f in fields]


def filtration_at_point(
    fields: Sequence[VectorField],
    x0: Sequence | None = None,
    weight_cap: int | None = None,
    rank_tol: float = 1e-10,
    exact: bool = False,
) -> Filtration:
    """Compute ``d_i = dim L_i(x0)`` until full rank.

    ``fields[0]`` is the drift.  Bracket values are taken from the Hall family
    in weight order and a value joins the basis when it raises the rank.
    """
    if not fields:
        raise ValueError("need at least the drift field")
    n = fields[0].dim
    if any(f.dim != n for f in fields):
        raise ValueError("all fields must share one dimension")
    x0 = tuple(Fraction(0) for _ in range(n)) if x0 is None else tuple(x0)
    if len(x0) != n:
        raise ValueError(f"x0 has length {len(x0)}, expected {n}")
    _check_stationary(fields[0], x0)
    if weight_cap is None:
        weight_cap = 2 * n + 2
    k = len(fields) - 1
    ev = BracketEvaluator(translate_fields(fields, x0))
    brackets = enumerate_brackets(k, weight_cap)

    def rank_of(rows):
        if exact:
            return exact_rank(rows)
        return float_rank(rows, rank_tol)

    basis: list[BasisElement] = []
    d = [0]
    idx = 0
    for w in range(1, weight_cap + 1):
        while idx < len(brackets) and brackets[idx].weight == w:
            wb = brackets[idx]
            idx += 1
            if len(basis) == n:
                continue
            value = tuple(ev.value_at_origin(wb.tree))
            if not any(value):
                continue
            rows = [b.value for b in basis] + [value]
            if rank_of(rows) > len(basis):
                basis.append(BasisElement(wb, value))
        d.append(len(basis))
        if len(basis) == n:
            return Filtration(tuple(d), w, tuple(basis), x0, k, exact, rank_tol)
    raise HormanderUndecided(
        f"filtration reached dimension {d[-1]} < {n} at weight cap {weight_cap}", tuple(d)
    )


@dataclass(frozen=True)
class HormanderResult:
    satisfied: bool
    step: int | None
    dims: tuple
    filtration: Filtration | None = field(default=None, compare=False)


def hormander_check(
    fields: Sequence[VectorField],
    x0: Sequence | None = None,
    weight_cap: int | None = None,
    rank_tol: float = 1e-10,
    exact: bool = False,
) -> HormanderResult:
    """Whether the brackets span R^n at ``x0`` within the weight cap."""
    try:
        filt = filtration_at_point(fields, x0, weight_cap, rank_tol, exact)
    except HormanderUndecided as exc:
        return HormanderResult(False, None, exc.dims)
    return HormanderResult(True, filt.step, filt.d, filt)


@dataclass(frozen=True)
class KalmanLayers:
    ranks: tuple          # rank of [B], [B, AB], ...
    k_layers: dict        # odd weight 2i-1 -> new directions from A^{i-1} B
    N: int
    controllable: bool


def kalman_layers(A: Sequence[Sequence], B: Sequence[Sequence], rank_tol: float = 1e-10) -> KalmanLayers:
    """Rank profile of the Kalman matrix for ``x' = A x + B u``.

    Block ``A^{i-1} B`` corresponds to brackets of weight ``2i - 1``.
    """
    n = len(A)
    exact = is_exact(A) and is_exact(B)
    conv = Fraction if exact else float
    A = [[conv(v) for v in row] for row in A]
    B = [[conv(v) for v in row] for row in B]
    if any(len(row) != n for row in A) or len(B) != n:
        raise ValueError("A must be n x n and B must have n rows")
    cols = [list(c) for c in zip(*B)]
    block = cols
    acc: list = []
    ranks = []
    k_layers = {}
    prev = 0
    for i in range(1, n + 1):
        acc = acc + block
        r = matrix_rank(acc, rank_tol, exact) if acc else 0
        ranks.append(r)
        if r > prev:
            k_layers[2 * i - 1] = r - prev
        prev = r
        block = [[sum(A[p][q] * c[q] for q in range(n)) for p in range(n)] for c in block]
    N = sum(w * kw for w, kw in k_layers.items())
    return KalmanLayers(tuple(ranks), k_layers, N, ranks[-1] == n)


def linear_system_fields(A: Sequence[Sequence], B: Sequence[Sequence]) -> list[VectorField]:
    """Drift ``x -> A x`` and one constant field per column of ``B``."""
    return [VectorField.linear(A)] + [VectorField.constant(list(c)) for c in zip(*B)]
