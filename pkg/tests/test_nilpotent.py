from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from hypokernel.chart import build_adapted_chart, identity_chart
from hypokernel.fixtures import FIXTURES, example_sine_drift, fields_from_text, heisenberg
from hypokernel.lie import filtration_at_point
from hypokernel.nilpotent import (
    ApproximationError,
    GradedStructure,
    bracket_compatibility_check,
    check_homogeneity,
    dilate,
    divergence_drift_adjust,
    field_graded_order,
    graded_equivalence,
    graded_order,
    graded_truncate,
    is_homogeneous,
    lie_algebra_equality_check,
    nilpotency_check,
    nilpotent_approximation,
    polynomial_weight,
    pushforward_dilation,
)
from hypokernel.polyalg import Polynomial, VectorField, parse_field_component

W12 = GradedStructure.from_weights((1, 2))
W14 = GradedStructure.from_weights((1, 4))


def approximate(fields):
    filt = filtration_at_point(fields)
    chart = build_adapted_chart(fields, filt)
    return nilpotent_approximation(fields, chart, filt)


def P(text, dim=2, degree=12):
    return parse_field_component(text, dim, degree)


# hand-derived approximations in the fixtures' own coordinates
EXPECTED = {
    "example1": (["0", "x1^2"], [["1", "0"]]),
    "heisenberg": (["0", "0", "0"], [["1", "0", "1/2*x2"], ["0", "1", "-1/2*x1"]]),
    "bal_1_1": (["0", "0"], [["1", "0"], ["0", "x1"]]),
    "bal_2_1": (["0", "0"], [["1", "0"], ["0", "x1"]]),
    "bal_2_4": (["0", "x1^2"], [["1", "0"], ["0", "0"]]),
    "double_integrator": (["0", "x1"], [["1", "0"]]),
    "brownian": (["0"], [["1"]]),
}


def test_graded_order_examples():
    assert graded_order(P("sin(x1*x2)", degree=8), W12) == 3
    assert graded_order(Polynomial.constant(1, 2), W12) == 0
    p = P("x1*x2 - 1/6*x1^2*x2^2")
    assert graded_order(p, W12) == 3 and polynomial_weight(p, W12) == 6


def test_field_graded_order_examples():
    V = VectorField([P("sin(x1*x2)", degree=8), Polynomial.zero(2)])
    assert field_graded_order(V, W12) == -2
    assert field_graded_order(VectorField.coordinate(0, 2), W12) == 1
    assert field_graded_order(VectorField([Polynomial.zero(2), P("x1^2")]), W14) == 2


def test_graded_truncate_keeps_one_weight():
    V = VectorField([Polynomial.constant(1, 2), P("x1^2 + x1^3")])
    assert graded_truncate(V, 2, W14) == VectorField([Polynomial.zero(2), P("x1^2")])
    assert graded_truncate(V, 1, W14) == VectorField([Polynomial.constant(1, 2), P("x1^3")])


def test_sine_drift_approximation():
    ns = approximate(example_sine_drift())
    assert ns.graded.weights_w == (1, 4) and ns.graded.N == 5
    assert ns.diffusions[0] == VectorField.coordinate(0, 2)
    assert ns.drift == VectorField([Polynomial.zero(2), P("1/2*x1^2")])
    T = graded_equivalence(ns, fields_from_text(*EXPECTED["example1"]))
    assert T == [[1, 0], [0, 2]]


def test_heisenberg_fields_unchanged():
    ns = approximate(heisenberg())
    assert graded_equivalence(ns, heisenberg()) is not None


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_fixture_approximations(name):
    fields = FIXTURES[name]()
    ns = approximate(fields)
    assert graded_equivalence(ns, fields_from_text(*EXPECTED[name])) is not None
    for eps in (Fraction(1, 2), Fraction(1, 3), Fraction(2)):
        assert check_homogeneity(ns, eps)
    res = lie_algebra_equality_check(None, ns)
    assert res.equal and res.d_original == filtration_at_point(fields).d
    assert nilpotency_check(ns.fhat, ns.graded.step)
    assert bracket_compatibility_check(ns) == []
    # each component only depends on coordinates of strictly smaller weight
    w = ns.graded.weights_w
    for V in ns.fhat:
        for j, comp in enumerate(V.components):
            for mono, _ in comp.items():
                assert all(w[i] < w[j] for i, e in enumerate(mono) if e)


def test_zero_truncation_is_reported():
    ns = approximate(FIXTURES["bal_2_4"]())
    assert ns.zero_fields() == [2]
    assert lie_algebra_equality_check(None, ns).equal


def test_lie_equality_layers_for_sine_drift():
    res = lie_algebra_equality_check(None, approximate(example_sine_drift()))
    assert res and res.d_nilpotent == (0, 1, 1, 1, 2)


def test_untruncated_drift_is_not_homogeneous():
    fields = example_sine_drift()
    filt = filtration_at_point(fields)
    ns = nilpotent_approximation(fields, build_adapted_chart(fields, filt, trunc_deg=8), filt)
    assert not is_homogeneous(ns.transformed[0], 2, ns.graded)
    assert not is_homogeneous(fields[0], 2, ns.graded)
    assert is_homogeneous(ns.drift, 2, ns.graded)
    assert is_homogeneous(VectorField.coordinate(0, 2), 1, ns.graded, Fraction(7, 5))


def test_unadapted_chart_rejected():
    fields = example_sine_drift()
    filt = filtration_at_point(fields)
    with pytest.raises(ApproximationError):
        nilpotent_approximation(fields, identity_chart(filt), filt)


def test_divergence_adjust():
    assert divergence_drift_adjust(heisenberg()) == heisenberg()[0]
    gbm = fields_from_text(["0"], [["x1"]])
    assert divergence_drift_adjust(gbm) == VectorField([P("1/2*x1", dim=1)])
    const = fields_from_text(["0", "x1"], [["1", "2"]])
    assert divergence_drift_adjust(const) == const[0]


def test_pushforward_dilation_of_homogeneous_field():
    V = VectorField([Polynomial.zero(2), P("x1^2")])
    assert pushforward_dilation(V, Fraction(1, 3), W14) == V * Fraction(1, 9)


coef = st.fractions(min_value=-3, max_value=3, max_denominator=4)
monos = st.tuples(st.integers(0, 3), st.integers(0, 3))


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(monos, coef, min_size=1, max_size=5), st.fractions(Fraction(1, 5), 5, max_denominator=5))
def test_dilation_scales_monomials_by_weight(terms, eps):
    p = Polynomial(terms, 2)
    q = dilate(p, eps, W12)
    for mono, c in p.items():
        assert q.coefficient(mono) == c * eps ** W12.monomial_weight(mono)
    if not p.is_zero():
        assert graded_order(q, W12) == graded_order(p, W12)
