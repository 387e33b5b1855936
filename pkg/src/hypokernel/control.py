"""Controllability of x' = f0(x) + sum_i u_i f_i(x) near a stationary point.

Sound tests (each either decides or returns Undetermined) are layered before
a Monte-Carlo reachability probe, which never produces a verdict on its own.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import HormanderUndecided, NotLinear
from .lie import filtration_at_point, kalman_layers
from .nilpotent import GradedStructure, NilpotentSystem
from .polyalg import Polynomial, VectorField


class Status(str, enum.Enum):
    CONTROLLABLE = "Controllable"
    NOT_CONTROLLABLE = "NotControllable"
    UNDETERMINED = "Undetermined"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ControlVerdict:
    status: Status
    method: str
    evidence: str = ""

    @property
    def decided(self) -> bool:
        return self.status is not Status.UNDETERMINED


def _undetermined(method: str, why: str) -> ControlVerdict:
    return ControlVerdict(Status.UNDETERMINED, method, why)


def _fields_of(system) -> list[VectorField]:
    if isinstance(system, NilpotentSystem):
        return list(system.fhat)
    return list(system)


def _generating(diffusions: Sequence[VectorField], x0=None, weight_cap: int | None = None) -> tuple[bool, tuple]:
    n = diffusions[0].dim
    try:
        filt = filtration_at_point([VectorField.zero(n)] + list(diffusions), x0, weight_cap, exact=True)
    except HormanderUndecided as exc:
        return False, exc.dims
    return True, filt.d


def symmetric_test(system) -> ControlVerdict:
    """Driftless and bracket generating at 0: controllable."""
    fs = _fields_of(system)
    if not fs[0].is_zero():
        return _undetermined("symmetric", "drift is not identically zero")
    if len(fs) < 2:
        return _undetermined("symmetric", "no control fields")
    ok, dims = _generating(fs[1:])
    if ok:
        return ControlVerdict(Status.CONTROLLABLE, "symmetric",
                              f"driftless, control fields bracket generating with layers {list(dims)}")
    return _undetermined("symmetric", f"control fields not bracket generating (layers {list(dims)})")


def bracket_generating_test(system, x0=None) -> ControlVerdict:
    """Control fields alone bracket generating at ``x0``: controllable with unbounded controls."""
    fs = _fields_of(system)
    if len(fs) < 2:
        return _undetermined("bracket-generating", "no control fields")
    ok, dims = _generating(fs[1:], x0)
    if ok:
        return ControlVerdict(Status.CONTROLLABLE, "bracket-generating",
                              f"control fields alone span with layers {list(dims)}")
    return _undetermined("bracket-generating", "control fields alone do not span")


def linear_data(system) -> tuple[list[list[Fraction]], list[list[Fraction]]]:
    """``(A, B)`` when the drift is linear and every control field constant."""
    fs = _fields_of(system)
    n = fs[0].dim
    unit = lambda j: tuple(int(i == j) for i in range(n))
    A = []
    for comp in fs[0].components:
        if any(sum(m) != 1 for m, _ in comp.items()):
            raise NotLinear("drift is not linear")
        A.append([comp.coefficient(unit(j)) for j in range(n)])
    cols = []
    for f in fs[1:]:
        if any(not c.is_constant() for c in f.components):
            raise NotLinear("a control field is not constant")
        cols.append([c.constant_term() for c in f.components])
    B = [[col[i] for col in cols] for i in range(n)]
    return A, B


def kalman_test(system) -> ControlVerdict:
    """Rank of ``[B, AB, ..., A^{n-1}B]``; raises NotLinear outside the linear class."""
    A, B = linear_data(system)
    if not B or not B[0]:
        return ControlVerdict(Status.NOT_CONTROLLABLE, "kalman", "no control fields")
    kl = kalman_layers(A, B)
    status = Status.CONTROLLABLE if kl.controllable else Status.NOT_CONTROLLABLE
    return ControlVerdict(status, "kalman", f"Kalman rank profile {list(kl.ranks)}")


def _sign_definite_even(p: Polynomial) -> int:
    """+1 / -1 if every monomial has even exponents and one coefficient sign, else 0."""
    if p.is_zero():
        return 0
    signs = set()
    for mono, c in p.items():
        if any(e % 2 for e in mono):
            return 0
        signs.add(1 if c > 0 else -1)
    return signs.pop() if len(signs) == 1 else 0


def monotone_obstruction_test(system) -> ControlVerdict:
    """A coordinate untouched by controls whose drift is an even sign-definite sum.

    Such a coordinate can only move one way along every admissible curve, so
    the reachable set stays in a half-space through the base point.
    """
    fs = _fields_of(system)
    n = fs[0].dim
    for j in range(n):
        if any(not f.components[j].is_zero() for f in fs[1:]):
            continue
        s = _sign_definite_even(fs[0].components[j])
        if s:
            direction = "non-decreasing" if s > 0 else "non-increasing"
            return ControlVerdict(
                Status.NOT_CONTROLLABLE, "monotone-obstruction",
                f"coordinate {j + 1} is {direction} along every admissible curve (drift {fs[0].components[j]})",
            )
    return _undetermined("monotone-obstruction", "no monotone coordinate found")


def sound_verdict(system, x0=None, include_linear: bool = True) -> tuple[ControlVerdict, list[ControlVerdict]]:
    """Run all sound tests; the first decided verdict wins and conflicts raise."""
    verdicts = [symmetric_test(system), bracket_generating_test(system, x0)]
    if include_linear:
        try:
            verdicts.append(kalman_test(system))
        except NotLinear:
            pass
    verdicts.append(monotone_obstruction_test(system))
    decided = [v for v in verdicts if v.decided]
    if len({v.status for v in decided}) > 1:
        raise RuntimeError(f"sound tests disagree: {decided}")
    if decided:
        return decided[0], verdicts
    return _undetermined("sound-tests", "no sound test applies"), verdicts


# ---------------------------------------------------------------- Monte Carlo

@dataclass(frozen=True)
class ReachabilityReport:
    time_horizon: float
    sample_count: int
    direction_coverage: float      # fraction of the 2^n orthants reached
    fine_coverage: float           # fraction of (orthant, dominant axis) bins reached
    min_scaled_radius: float       # smallest over orthants of the largest homogeneous radius reached
    discarded: int = 0
    orthant_counts: tuple = field(default=(), compare=False)


def homogeneous_coordinates(Y: np.ndarray, weights: Sequence[int]) -> np.ndarray:
    """``sign(y_j) |y_j|^{1/w_j}``, which scales linearly under the dilations."""
    w = np.asarray(weights, dtype=float)
    return np.sign(Y) * np.abs(Y) ** (1.0 / w)


def _combined_field(F0, Fs, U):
    def rhs(_t, flat, n, m):
        X = flat.reshape(n, m)
        out = F0(X)
        for i, Fi in enumerate(Fs):
            out = out + U[:, i] * Fi(X)
        return out.ravel()
    return rhs


def _integrate(F0, Fs, X0: np.ndarray, controls: np.ndarray, t: float, rtol: float, atol: float):
    """Piecewise-constant controls ``controls[s, switch, i]``; returns endpoints and success mask."""
    n, m = X0.shape
    switches = controls.shape[1]
    dt = t / switches
    X = X0.copy()
    ok = np.ones(m, dtype=bool)
    with np.errstate(all="ignore"):
        for s in range(switches):
            U = controls[:, s, :]
            rhs = _combined_field(F0, Fs, U)
            sol = solve_ivp(rhs, (0.0, dt), X.ravel(), method="RK45", rtol=rtol, atol=atol, args=(n, m))
            Xn = sol.y[:, -1].reshape(n, m) if sol.success else None
            if Xn is None or not np.all(np.isfinite(Xn)):
                break
            X = Xn
        else:
            return X, ok
    # stacked integration failed: redo sample by sample, dropping failures
    X = X0.copy()
    with np.errstate(all="ignore"):
        for p in range(m):
            x = X0[:, p:p + 1].copy()
            for s in range(switches):
                rhs = _combined_field(F0, Fs, controls[p:p + 1, s, :])
                sol = solve_ivp(rhs, (0.0, dt), x.ravel(), method="RK45", rtol=rtol, atol=atol, args=(n, 1))
                if not sol.success or not np.all(np.isfinite(sol.y[:, -1])):
                    ok[p] = False
                    break
                x = sol.y[:, -1].reshape(n, 1)
            X[:, p] = x[:, 0]
    return X, ok


def mc_reachability(
    system,
    x0: Sequence | None = None,
    t: float = 1.0,
    n: int = 10_000,
    seed: int = 0,
    weights: Sequence[int] | None = None,
    control_bound: float = 5.0,
    switches: int = 8,
    chunk_size: int = 1024,
    rtol: float = 1e-6,
    atol: float = 1e-9,
    return_endpoints: bool = False,
):
    """Endpoints of random piecewise-constant controls, summarised by direction coverage.

    Chunk ``c`` draws its controls from ``Philox(SeedSequence([seed, c]))`` and
    is always integrated at full chunk size, so the first ``n`` samples do not
    depend on ``n``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    fs = _fields_of(system)
    dim = fs[0].dim
    k = len(fs) - 1
    if weights is None:
        weights = system.graded.weights_w if isinstance(system, NilpotentSystem) else (1,) * dim
    x0 = np.zeros(dim) if x0 is None else np.asarray([float(v) for v in x0])
    F0 = fs[0].to_numpy()
    Fs = [f.to_numpy() for f in fs[1:]]
    ends, kept = [], []
    n_chunks = -(-n // chunk_size)
    for c in range(n_chunks):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, c])))
        U = rng.uniform(-control_bound, control_bound, size=(chunk_size, switches, max(k, 1)))[:, :, :k]
        X0 = np.repeat(x0[:, None], chunk_size, axis=1)
        X, ok = _integrate(F0, Fs, X0, U, t, rtol, atol)
        take = min(chunk_size, n - c * chunk_size)
        ends.append(X[:, :take])
        kept.append(ok[:take])
    X = np.concatenate(ends, axis=1)
    ok = np.concatenate(kept)
    Y = (X[:, ok] - x0[:, None]).T
    report = summarize_reachability(Y, weights, t, n, int((~ok).sum()))
    return (report, Y) if return_endpoints else report


def summarize_reachability(Y: np.ndarray, weights: Sequence[int], t: float, n: int, discarded: int = 0) -> ReachabilityReport:
    dim = Y.shape[1]
    Z = homogeneous_coordinates(Y, weights)
    nonzero = np.all(Z != 0, axis=1)
    Zs = Z[nonzero]
    bits = (Zs > 0).astype(np.int64)
    orthant = bits @ (1 << np.arange(dim, dtype=np.int64))
    n_orth = 1 << dim
    counts = np.bincount(orthant, minlength=n_orth)
    axis = np.argmax(np.abs(Zs), axis=1)
    fine = np.unique(orthant * dim + axis).size
    radius = np.max(np.abs(Zs), axis=1) if len(Zs) else np.zeros(0)
    per_orthant = np.zeros(n_orth)
    if len(Zs):
        np.maximum.at(per_orthant, orthant, radius)
    return ReachabilityReport(
        time_horizon=float(t),
        sample_count=int(n),
        direction_coverage=float(np.count_nonzero(counts)) / n_orth,
        fine_coverage=fine / (n_orth * dim),
        min_scaled_radius=float(per_orthant.min()),
        discarded=discarded,
        orthant_counts=tuple(int(c) for c in counts),
    )


# ---------------------------------------------------------------- rescaling

def ode_residual(
    system,
    times: np.ndarray,
    states: np.ndarray,
    control: Callable[[float], np.ndarray],
) -> float:
    """Largest Simpson-rule defect over consecutive sample triples, per unit time.

    ``times`` must be uniformly spaced; ``states`` has shape ``(len(times), n)``.
    """
    fs = _fields_of(system)
    F0 = fs[0].to_numpy()
    Fs = [f.to_numpy() for f in fs[1:]]
    times = np.asarray(times, dtype=float)
    X = np.asarray(states, dtype=float)
    U = np.array([np.atleast_1d(control(s)) for s in times])
    F = F0(X.T)
    for i, Fi in enumerate(Fs):
        F = F + U[:, i] * Fi(X.T)
    F = F.T
    h = times[1] - times[0]
    k = np.arange(0, len(times) - 2, 2)
    defect = X[k + 2] - X[k] - h / 3.0 * (F[k] + 4.0 * F[k + 1] + F[k + 2])
    return float(np.max(np.abs(defect)) / (2.0 * h))


def rescale_admissible_curve(
    times: np.ndarray,
    states: np.ndarray,
    control: Callable[[float], np.ndarray],
    M: float,
    graded: GradedStructure,
):
    """Map a curve of the homogeneous system to ``s -> delta_M(y(s / M^2))`` with control ``u(s / M^2) / M``."""
    M = float(M)
    scale = M ** np.asarray(graded.weights_w, dtype=float)
    new_times = np.asarray(times, dtype=float) * M * M
    new_states = np.asarray(states, dtype=float) * scale

    def new_control(s):
        return np.asarray(control(s / (M * M)), dtype=float) / M

    return new_times, new_states, new_control


# ---------------------------------------------------------------- classification

@dataclass(frozen=True)
class Classification:
    case: str                      # "i", "ii.1", "ii.2" or "undetermined"
    nilpotent: ControlVerdict
    original: ControlVerdict
    hormander: bool
    notes: tuple = ()
    reachability: ReachabilityReport | None = None


def classify(
    ns: NilpotentSystem,
    original_fields: Sequence[VectorField],
    x0: Sequence | None = None,
    hormander: bool = True,
    original_exact: bool = True,
    reachability: ReachabilityReport | None = None,
) -> Classification:
    """Place the problem in one of the cases of the final case analysis.

    The original system is only tested by sound criteria that are valid for
    its polynomial fields as given; with Taylor-truncated input
    (``original_exact=False``) the monotone test is skipped because the sign
    of the true drift is unknown.
    """
    nil, _ = sound_verdict(ns)
    notes = []
    orig_tests = [bracket_generating_test(original_fields, x0)]
    if original_exact:
        orig_tests.append(monotone_obstruction_test(original_fields))
    else:
        notes.append("original fields are Taylor truncations; monotone test on originals skipped")
    decided = [v for v in orig_tests if v.decided]
    orig = decided[0] if decided else _undetermined("sound-tests", "no sound test decides the original system")

    if orig.status is Status.NOT_CONTROLLABLE:
        case = "i"
    elif nil.status is Status.CONTROLLABLE:
        case = "ii.1"
    elif nil.status is Status.NOT_CONTROLLABLE and hormander:
        case = "ii.2"
        if orig.status is not Status.CONTROLLABLE:
            notes.append("original controllability not proven; Hörmander holds and no obstruction was found")
    else:
        case = "undetermined"
    if reachability is not None:
        notes.append(
            f"Monte-Carlo orthant coverage {reachability.direction_coverage:.4f} "
            f"over {reachability.sample_count} samples (evidence only)"
        )
    return Classification(case, nil, orig, hormander, tuple(notes), reachability)
