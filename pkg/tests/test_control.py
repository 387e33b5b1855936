import numpy as np
import pytest
from scipy.integrate import solve_ivp

from hypokernel.chart import build_adapted_chart
from hypokernel.control import (
    Status,
    classify,
    homogeneous_coordinates,
    kalman_test,
    mc_reachability,
    monotone_obstruction_test,
    ode_residual,
    rescale_admissible_curve,
    sound_verdict,
    symmetric_test,
)
from hypokernel.errors import NotLinear
from hypokernel.fixtures import FIXTURES, ben_arous_leandre, example_sine_drift, fields_from_text, heisenberg
from hypokernel.lie import filtration_at_point, linear_system_fields
from hypokernel.nilpotent import nilpotent_approximation


def approximate(fields):
    filt = filtration_at_point(fields)
    return nilpotent_approximation(fields, build_adapted_chart(fields, filt), filt)


@pytest.fixture(scope="module")
def heis():
    return approximate(heisenberg())


@pytest.fixture(scope="module")
def sine():
    return approximate(example_sine_drift())


def test_symmetric_test(heis, sine):
    assert symmetric_test(heis).status is Status.CONTROLLABLE
    assert symmetric_test(sine).status is Status.UNDETERMINED
    single = fields_from_text(["0", "0"], [["1", "0"]])
    assert symmetric_test(single).status is Status.UNDETERMINED


def test_kalman_test(heis):
    ok = linear_system_fields([[0, 0], [1, 0]], [[1], [0]])
    assert kalman_test(ok).status is Status.CONTROLLABLE
    stuck = linear_system_fields([[0, 0], [0, 0]], [[1], [0]])
    assert kalman_test(stuck).status is Status.NOT_CONTROLLABLE
    with pytest.raises(NotLinear):
        kalman_test(heis)


def test_monotone_obstruction(heis, sine):
    assert monotone_obstruction_test(sine).status is Status.NOT_CONTROLLABLE
    bal = approximate(ben_arous_leandre(2, 4))
    assert monotone_obstruction_test(bal).status is Status.NOT_CONTROLLABLE
    assert monotone_obstruction_test(heis).status is Status.UNDETERMINED
    odd = fields_from_text(["0", "x1^3"], [["1", "0"]])
    assert monotone_obstruction_test(odd).status is Status.UNDETERMINED


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_sound_tests_never_disagree(name):
    fields = FIXTURES[name]()
    for system in (fields, approximate(fields)):
        verdict, all_verdicts = sound_verdict(system)
        decided = {v.status for v in all_verdicts if v.decided}
        assert len(decided) <= 1
        if decided:
            assert verdict.status in decided


def test_classification_cases(heis, sine):
    assert classify(heis, heisenberg()).case == "ii.1"
    assert classify(sine, example_sine_drift(), original_exact=False).case == "ii.2"
    for a in range(1, 5):
        for b in range(1, 5):
            fields = ben_arous_leandre(a, b)
            case = classify(approximate(fields), fields).case
            if b <= a + 1:
                assert case == "ii.1", (a, b)
            elif a % 2 == 0:
                assert case == "ii.2", (a, b)


def test_classification_case_i():
    # the original drift is itself monotone in a direction with no control
    fields = fields_from_text(["0", "x1^2 + x2^2"], [["1", "0"]])
    ns = approximate(fields)
    assert classify(ns, fields).case == "i"


def test_reachability_heisenberg(heis):
    rep = mc_reachability(heis, t=1.0, n=10_000, seed=3)
    assert rep.direction_coverage >= 0.99
    assert rep.discarded == 0


def test_reachability_monotone_coordinate(sine):
    rep, Y = mc_reachability(sine, t=1.0, n=2000, seed=0, return_endpoints=True)
    assert (Y[:, 1] < 0).sum() == 0
    # orthants with a negative second coordinate have index bit 1 cleared
    assert rep.orthant_counts[0] == rep.orthant_counts[1] == 0
    assert rep.direction_coverage <= 0.5


def test_reachability_rejects_empty(heis):
    with pytest.raises(ValueError):
        mc_reachability(heis, n=0)


def test_coverage_monotone_in_sample_count(heis):
    small, Ys = mc_reachability(heis, n=300, seed=9, chunk_size=128, return_endpoints=True)
    large, Yl = mc_reachability(heis, n=900, seed=9, chunk_size=128, return_endpoints=True)
    assert np.array_equal(Ys, Yl[:300])
    assert large.fine_coverage >= small.fine_coverage
    assert large.direction_coverage >= small.direction_coverage


def test_homogeneous_coordinates():
    Y = np.array([[8.0, -8.0]])
    assert np.allclose(homogeneous_coordinates(Y, (1, 3)), [[8.0, -2.0]])


def _circle_curve(ns, n_points=801):
    def control(s):
        return np.array([np.cos(2 * np.pi * s), np.sin(2 * np.pi * s)])

    F = [f.to_numpy() for f in ns.fhat]

    def rhs(s, y):
        u = control(s)
        v = F[0](y[:, None])[:, 0]
        for i, Fi in enumerate(F[1:]):
            v = v + u[i] * Fi(y[:, None])[:, 0]
        return v

    times = np.linspace(0.0, 1.0, n_points)
    sol = solve_ivp(rhs, (0, 1), np.zeros(ns.dim), t_eval=times, rtol=1e-12, atol=1e-14, method="DOP853")
    return times, sol.y.T, control


def test_rescaled_circle_control(heis):
    times, states, control = _circle_curve(heis)
    base = ode_residual(heis, times, states, control)
    assert base < 1e-6
    for M in (2.0, 3.0):
        t2, s2, c2 = rescale_admissible_curve(times, states, control, M, heis.graded)
        res = ode_residual(heis, t2, s2, c2)
        assert res < 1e-6
        assert res <= 10 * max(base, 1e-15)


def test_rescale_identity_and_zero_control(sine):
    times = np.linspace(0, 1, 11)
    states = np.column_stack([times, times ** 2])
    ctl = lambda s: np.array([1.0])
    t1, s1, c1 = rescale_admissible_curve(times, states, ctl, 1.0, sine.graded)
    assert np.array_equal(t1, times) and np.array_equal(s1, states) and c1(0.3)[0] == 1.0
    # pure drift flow from (1, 0): y2 grows linearly at rate 1/2
    zero = lambda s: np.array([0.0])
    flow = np.column_stack([np.ones_like(times), 0.5 * times])
    assert ode_residual(sine, times, flow, zero) < 1e-12
    t2, s2, c2 = rescale_admissible_curve(times, flow, zero, 2.0, sine.graded)
    assert ode_residual(sine, t2, s2, c2) < 1e-12
