import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypokernel.errors import DriftNotStationary, HormanderUndecided
from hypokernel.fixtures import FIXTURES, ben_arous_leandre, example_sine_drift, fields_from_text, heisenberg
from hypokernel.lie import (
    BracketEvaluator,
    X,
    br,
    bracket_weight,
    enumerate_brackets,
    filtration_at_point,
    hormander_check,
    kalman_layers,
    linear_system_fields,
)
from hypokernel.linalg import exact_rank
from hypokernel.polyalg import VectorField


def test_bracket_weights():
    wb = bracket_weight(br(X(0), br(X(2), X(0))))
    assert wb.lengths == (2, 0, 1)
    assert wb.weight == 5
    assert bracket_weight(X(0)).weight == 2
    assert bracket_weight(X(3)).weight == 1


def test_enumerate_small_cases():
    names = [(str(b), b.weight) for b in enumerate_brackets(1, 2)]
    assert names == [("X1", 1), ("X0", 2)]
    k2 = {str(b): b.weight for b in enumerate_brackets(2, 2)}
    assert k2["[X1,X2]"] == 2
    k1 = {str(b): b.weight for b in enumerate_brackets(1, 4)}
    assert k1["[X1,[X1,X0]]"] == 4


def test_enumeration_order_is_by_weight():
    ws = [b.weight for b in enumerate_brackets(2, 6)]
    assert ws == sorted(ws)


def test_enumerate_rejects_bad_cap():
    with pytest.raises(ValueError):
        enumerate_brackets(1, 0)


# ---------------------------------------------------------------- Hall family oracle

def _expand(tree):
    """Bracket tree as a noncommutative polynomial {word: coefficient}."""
    if tree.is_leaf:
        return {(tree.letter,): 1}
    a, b = _expand(tree.left), _expand(tree.right)
    out = Counter()
    for (u, cu), (v, cv) in itertools.product(a.items(), b.items()):
        out[u + v] += cu * cv
        out[v + u] -= cu * cv
    return {w: c for w, c in out.items() if c}


def _mobius(n):
    result, p, m = 1, 2, n
    while p * p <= m:
        if m % p == 0:
            m //= p
            if m % p == 0:
                return 0
            result = -result
        p += 1
    return -result if m > 1 else result


def _witt(alpha):
    """Dimension of the multi-degree ``alpha`` part of the free Lie algebra."""
    total = sum(alpha)
    g = math.gcd(*alpha)
    s = 0
    for d in range(1, g + 1):
        if g % d == 0:
            s += _mobius(d) * math.factorial(total // d) // math.prod(math.factorial(a // d) for a in alpha)
    return s // total


@pytest.mark.parametrize("k,cap", [(1, 7), (2, 5), (3, 4)])
def test_hall_family_is_a_basis_per_multidegree(k, cap):
    family = enumerate_brackets(k, cap)
    by_degree = {}
    for b in family:
        by_degree.setdefault(b.lengths, []).append(b)
    # every multidegree of the given weights must be present with Witt's dimension
    for lengths in itertools.product(*[range(cap + 1)] * (k + 1)):
        weight = 2 * lengths[0] + sum(lengths[1:])
        if not 1 <= weight <= cap:
            continue
        expected = _witt(lengths) if sum(lengths) else 0
        got = by_degree.get(tuple(lengths), [])
        assert len(got) == expected, lengths
        if got:
            polys = [_expand(b.tree) for b in got]
            words = sorted({w for p in polys for w in p})
            M = np.array([[p.get(w, 0) for w in words] for p in polys], dtype=float)
            assert np.linalg.matrix_rank(M) == len(got)


# ---------------------------------------------------------------- filtrations

def test_example1_filtration():
    f = filtration_at_point(example_sine_drift())
    assert f.d == (0, 1, 1, 1, 2)
    assert f.step == 4 and f.N == 5
    assert [str(b.bracket) for b in f.basis] == ["X1", "[X1,[X1,X0]]"]


def test_heisenberg_filtration():
    f = filtration_at_point(heisenberg())
    assert f.d == (0, 2, 3) and f.step == 2 and f.N == 4


def test_ben_arous_leandre_1_3():
    f = filtration_at_point(ben_arous_leandre(1, 3))
    assert f.step == 3 and f.N == 4


@pytest.mark.parametrize("a,b", list(itertools.product(range(1, 5), repeat=2)))
def test_ben_arous_leandre_order_table(a, b):
    f = filtration_at_point(ben_arous_leandre(a, b))
    assert f.N == (b + 2 if b <= a + 1 else a + 3)


def test_hormander_check():
    assert hormander_check(example_sine_drift()).step == 4
    assert hormander_check(heisenberg()).step == 2
    single = fields_from_text(["0", "0"], [["1", "0"]])
    res = hormander_check(single, weight_cap=10)
    assert not res.satisfied and res.dims[-1] == 1


def test_undecided_raises_with_dims():
    single = fields_from_text(["0", "0"], [["1", "0"]])
    with pytest.raises(HormanderUndecided) as info:
        filtration_at_point(single, weight_cap=5)
    assert info.value.dims == (0, 1, 1, 1, 1, 1)


def test_drift_not_stationary():
    with pytest.raises(DriftNotStationary):
        filtration_at_point(fields_from_text(["1", "0"], [["0", "1"]]))


def test_filtration_at_shifted_point():
    fields = fields_from_text(["0", "(x1 - 1)^2"], [["1", "0"]])
    f = filtration_at_point(fields, (1, 0))
    assert f.d == (0, 1, 1, 1, 2)


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_filtration_properties_on_fixtures(name):
    fields = FIXTURES[name]()
    f = filtration_at_point(fields)
    assert all(a <= b for a, b in zip(f.d, f.d[1:]))
    assert filtration_at_point(fields, exact=True).d == f.d
    for tol in (1e-9, 1e-11):
        assert filtration_at_point(fields, rank_tol=tol).d == f.d


def _all_trees(k, cap):
    """Every bracket tree of weight <= cap, without Hall reduction."""
    by_weight = {1: [X(i) for i in range(1, k + 1)], 2: [X(0)]}
    for w in range(2, cap + 1):
        by_weight.setdefault(w, [])
        for a in range(1, w):
            for u in by_weight.get(a, []):
                for v in by_weight.get(w - a, []):
                    by_weight[w].append(br(u, v))
    return by_weight


@pytest.mark.parametrize("name", ["example1", "heisenberg", "bal_2_1", "bal_2_4", "double_integrator"])
def test_extra_brackets_do_not_raise_dimensions(name):
    fields = FIXTURES[name]()
    f = filtration_at_point(fields, exact=True)
    ev = BracketEvaluator(fields)
    trees = _all_trees(len(fields) - 1, min(f.step, 5))
    rows = []
    for i in range(1, min(f.step, 5) + 1):
        rows += [ev.value_at_origin(t) for t in trees.get(i, [])]
        rows = [r for r in rows if any(r)]
        assert (exact_rank(rows) if rows else 0) == f.d[i]


def test_layer_brackets_stay_in_sum_of_weights():
    # [L_i, L_j] lies in L_{i+j} at the base point
    fields = example_sine_drift()
    f = filtration_at_point(fields, exact=True)
    ev = BracketEvaluator(fields)
    family = enumerate_brackets(1, f.step)
    for a, b in itertools.product(family, repeat=2):
        total = a.weight + b.weight
        if total > f.step:
            continue
        layer = [ev.value_at_origin(c.tree) for c in family if c.weight <= total]
        layer = [r for r in layer if any(r)]
        val = ev.value_at_origin(br(a.tree, b.tree))
        base = exact_rank(layer) if layer else 0
        assert exact_rank(layer + [val]) == base


# ---------------------------------------------------------------- linear systems

def test_kalman_examples():
    kl = kalman_layers([[0, 0], [1, 0]], [[1], [0]])
    assert kl.k_layers == {1: 1, 3: 1} and kl.N == 4 and kl.controllable
    eye = kalman_layers([[1, 2], [3, 4]], [[1, 0], [0, 1]])
    assert eye.k_layers == {1: 2} and eye.N == 2
    stuck = kalman_layers([[0, 0], [0, 0]], [[1], [0]])
    assert not stuck.controllable


matrices = st.lists(st.lists(st.integers(-2, 2), min_size=3, max_size=3), min_size=3, max_size=3)
columns = st.lists(st.integers(-2, 2), min_size=3, max_size=3)


@settings(max_examples=40, deadline=None)
@given(matrices, columns)
def test_kalman_matches_filtration(A, b):
    B = [[v] for v in b]
    kl = kalman_layers(A, B)
    fields = linear_system_fields(A, B)
    if kl.controllable:
        f = filtration_at_point(fields, exact=True)
        assert f.N == kl.N
    else:
        with pytest.raises(HormanderUndecided):
            filtration_at_point(fields, exact=True, weight_cap=8)


def test_linear_fields_convention():
    fields = linear_system_fields([[0, 0], [1, 0]], [[1], [0]])
    assert fields[0] == VectorField.linear([[0, 0], [1, 0]])
    assert fields[0].evaluate((Fraction(2), Fraction(0))) == [0, 2]
