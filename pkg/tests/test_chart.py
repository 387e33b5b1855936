from fractions import Fraction

import pytest

from hypokernel.chart import (
    AdaptedChart,
    build_adapted_chart,
    identity_chart,
    invert_series,
    transform_field,
    transform_fields,
    verify_adapted,
)
from hypokernel.errors import TruncationTooLow
from hypokernel.fixtures import FIXTURES, example_sine_drift, fields_from_text, heisenberg
from hypokernel.lie import filtration_at_point, linear_system_fields
from hypokernel.nilpotent import GradedStructure, field_graded_order
from hypokernel.polyalg import Polynomial, VectorField, parse_field_component


def _chart_from_text(forward, fields, trunc_deg=6):
    n = len(forward)
    filt = filtration_at_point(fields)
    fwd = tuple(parse_field_component(t, n, trunc_deg) for t in forward)
    inv = tuple(invert_series(fwd, trunc_deg))
    exact = all(p.compose(inv) == Polynomial.variable(i, n) for i, p in enumerate(fwd))
    return AdaptedChart(fwd, inv, trunc_deg, filt.weights_w, filt.x0, exact), filt


def test_reference_chart_for_sine_drift():
    fields = example_sine_drift()
    chart, filt = _chart_from_text(["x1 - 1/2*x1^2 + x2", "-1/2*x1^2 + x2"], fields)
    assert chart.exact
    rep = verify_adapted(chart, fields, filt)
    assert rep.prop_i and rep.prop_ii
    assert transform_field(fields[1], chart) == VectorField.coordinate(0, 2)


def test_original_coordinates_fail_second_property():
    fields = example_sine_drift()
    filt = filtration_at_point(fields)
    rep = verify_adapted(identity_chart(filt), fields, filt)
    assert rep.prop_i and not rep.prop_ii
    assert [w.describe("x") for w in rep.witnesses] == ["(f1)^2x2(x0) = 1"]


def test_built_chart_for_sine_drift():
    fields = example_sine_drift()
    filt = filtration_at_point(fields)
    chart = build_adapted_chart(fields, filt)
    rep = verify_adapted(chart, fields, filt)
    assert rep.ok
    assert chart.corrected == (1,)
    # the control field is straightened up to terms of negative weight
    rest = transform_field(fields[1], chart) - VectorField.coordinate(0, 2)
    assert field_graded_order(rest, GradedStructure.from_filtration(filt)) < 0


def test_heisenberg_chart_is_layer_preserving_linear():
    fields = heisenberg()
    filt = filtration_at_point(fields)
    chart = build_adapted_chart(fields, filt)
    assert chart.exact and chart.corrected == ()
    assert all(p.degree() <= 1 for p in chart.forward)
    J = chart.jacobian_at_origin()
    assert J[2][0] == J[2][1] == J[0][2] == J[1][2] == 0
    assert verify_adapted(identity_chart(filt), fields, filt).ok


def test_linear_system_with_unit_inputs_gets_linear_chart():
    fields = linear_system_fields([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[1], [0], [0]])
    filt = filtration_at_point(fields)
    chart = build_adapted_chart(fields, filt)
    assert chart.corrected == () and all(p.degree() <= 1 for p in chart.forward)
    assert verify_adapted(chart, fields, filt).ok


def test_linear_conjugation():
    A = [[1, 2], [0, 3]]
    T = [[2, 1], [1, 1]]
    Tinv = [[1, -1], [-1, 2]]
    n = 2
    fwd = tuple(sum((Polynomial.variable(j, n) * T[i][j] for j in range(n)), Polynomial.zero(n)) for i in range(n))
    inv = tuple(sum((Polynomial.variable(j, n) * Tinv[i][j] for j in range(n)), Polynomial.zero(n)) for i in range(n))
    chart = AdaptedChart(fwd, inv, 4, (1, 1), (Fraction(0), Fraction(0)), True)
    TAT = [[sum(T[i][a] * A[a][b] * Tinv[b][j] for a in range(n) for b in range(n)) for j in range(n)] for i in range(n)]
    assert transform_field(VectorField.linear(A), chart) == VectorField.linear(TAT)


def test_identity_chart_transform_is_identity():
    fields = example_sine_drift()
    chart = identity_chart(filtration_at_point(fields))
    for V in fields:
        assert transform_field(V, chart) == V


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_fixture_charts(name):
    fields = FIXTURES[name]()
    filt = filtration_at_point(fields)
    chart = build_adapted_chart(fields, filt)
    assert verify_adapted(chart, fields, filt).ok
    zero = [0] * filt.dim
    assert all(p.evaluate(zero) == 0 for p in chart.forward)
    assert all(p.evaluate(zero) == 0 for p in chart.inverse)
    # layer dimensions do not depend on the coordinates
    moved = transform_fields(fields, chart)
    assert filtration_at_point(moved, exact=True).d == filt.d


@pytest.mark.parametrize("name", ["example1", "bal_2_1", "heisenberg"])
def test_round_trip_and_bracket_commutation(name):
    fields = FIXTURES[name]()
    filt = filtration_at_point(fields)
    chart = build_adapted_chart(fields, filt)
    T = chart.trunc_deg
    back = chart.inverted()
    for V in fields:
        W = transform_field(transform_field(V, chart), back)
        assert W.truncate(T - 1) == V.truncate(T - 1)
    V, W = fields[0], fields[1]
    lhs = transform_field(V.bracket(W), chart).truncate(T - 2)
    rhs = transform_field(V, chart).bracket(transform_field(W, chart)).truncate(T - 2)
    assert lhs == rhs


def test_chart_at_shifted_point():
    fields = fields_from_text(["0", "(x1 - 1)^2"], [["1", "x1 - 1"]])
    filt = filtration_at_point(fields, (1, 0))
    chart = build_adapted_chart(fields, filt)
    assert verify_adapted(chart, fields, filt).ok
    assert transform_field(fields[1], chart) == VectorField.coordinate(0, 2)
    assert chart.forward_in_original()[0].evaluate((1, 0)) == 0


def test_truncation_guards():
    fields = example_sine_drift()
    filt = filtration_at_point(fields)
    with pytest.raises(TruncationTooLow):
        build_adapted_chart(fields, filt, trunc_deg=2)
    chart = build_adapted_chart(fields, filt)
    with pytest.raises(TruncationTooLow):
        chart.require_degree(chart.trunc_deg)
    chart.require_degree(chart.trunc_deg - 1)


def test_invert_series_polynomial_inverse():
    n = 2
    x1, x2 = Polynomial.variable(0, n), Polynomial.variable(1, n)
    fwd = [x1, x2 + x1 ** 2]
    inv = invert_series(fwd, 5)
    assert inv == [x1, x2 - x1 ** 2]
