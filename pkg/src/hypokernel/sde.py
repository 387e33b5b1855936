"""Monte-Carlo simulation of the diffusion and on-diagonal density estimates.

The Stratonovich equation ``dx = f0 dt + sum_i f_i o dw_i`` is simulated
either through its Itô form with Euler-Maruyama, or directly with the
Euler-Heun predictor-corrector.  Randomness is counter based: chunk ``c`` of
paths uses ``Philox(SeedSequence([seed, c]))`` and always draws full-chunk
arrays, so endpoint ``i`` depends only on ``(seed, i)`` and the chunk size.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InsufficientHits, SimulationError
from .nilpotent import GradedStructure, NilpotentSystem
from .polyalg import Polynomial, VectorField

MIN_HITS = 30
DEFAULT_H_SCHEDULE = (0.8, 0.6, 0.45, 0.34, 0.25)
DEFAULT_T_GRID = (0.05, 0.08, 0.125, 0.2, 0.32, 0.5)
MAX_DISCARD_FRACTION = 0.01


# ---------------------------------------------------------------- systems

@dataclass(frozen=True)
class ItoSystem:
    drift: VectorField                   # Itô drift (Stratonovich drift plus correction)
    diffusions: tuple
    stratonovich_drift: VectorField

    @property
    def dim(self) -> int:
        return self.drift.dim

    @property
    def correction(self) -> VectorField:
        return self.drift - self.stratonovich_drift


def ito_correction(diffusions: Sequence[VectorField], dim: int | None = None) -> VectorField:
    """Component j is ``1/2 sum_i sum_l f_i^l d f_i^j / dx_l``."""
    n = diffusions[0].dim if diffusions else dim
    out = VectorField.zero(n)
    for f in diffusions:
        out = out + VectorField([f.apply(c) for c in f.components])
    return out * Fraction(1, 2)


def stratonovich_to_ito(drift: VectorField, diffusions: Sequence[VectorField]) -> ItoSystem:
    return ItoSystem(drift + ito_correction(diffusions, drift.dim), tuple(diffusions), drift)


def system_from_fields(fields: Sequence[VectorField]) -> ItoSystem:
    return stratonovich_to_ito(fields[0], list(fields[1:]))


def _compile(V: VectorField):
    """List of ``(component, evaluator or float)`` for nonzero components."""
    out = []
    for j, c in enumerate(V.components):
        if c.is_zero():
            continue
        out.append((j, float(c.constant_term()) if c.is_constant() else c.to_numpy()))
    return out


def _apply(compiled, X, out, scale):
    """``out += scale * V(X)`` where ``scale`` is a scalar or per-path array."""
    for j, f in compiled:
        if isinstance(f, float):
            out[j] += f * scale
        else:
            out[j] += f(X) * scale


# ---------------------------------------------------------------- simulation

@dataclass(frozen=True)
class EnsembleConfig:
    t_final: float = 1.0
    dt: float | None = None              # defaults to t_final / 400
    n_paths: int = 100_000
    seed: int = 0
    scheme: str = "euler-maruyama"       # or "euler-heun" (Stratonovich)
    chunk_size: int = 1 << 15

    def __post_init__(self):
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.dt is not None and not 0 < self.dt <= self.t_final:
            raise ValueError("dt must lie in (0, t_final]")
        if self.scheme not in ("euler-maruyama", "euler-heun"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be positive")

    @property
    def n_steps(self) -> int:
        if self.dt is None:
            return 400
        return max(1, int(round(self.t_final / self.dt)))

    @property
    def step(self) -> float:
        return self.t_final / self.n_steps

    def with_(self, **kw) -> EnsembleConfig:
        d = dict(self.__dict__)
        d.update(kw)
        return EnsembleConfig(**d)


@dataclass(frozen=True)
class Endpoints:
    samples: np.ndarray         # (n_kept, dim)
    path_index: np.ndarray      # original path index of each kept sample
    discarded: int
    config: EnsembleConfig = field(compare=False)

    @property
    def n_total(self) -> int:
        return self.config.n_paths

    def to_csv(self, path) -> None:
        write_endpoints_csv(path, self)


def _run_chunk(sys: ItoSystem, compiled, x0, take: int, cfg: EnsembleConfig, rng):
    """Integrate the first ``take`` paths of a chunk.

    Noise is always drawn at full chunk size and sliced, so a path sees the
    same increments whether or not its chunk is complete.
    """
    k = len(sys.diffusions)
    h = cfg.step
    sq = math.sqrt(h)
    X = np.repeat(np.asarray(x0, dtype=float)[:, None], take, axis=1)
    drift_c, diff_c = compiled
    heun = cfg.scheme == "euler-heun"
    for _ in range(cfg.n_steps):
        dW = rng.standard_normal((k, cfg.chunk_size))[:, :take] * sq if k else None
        inc = np.zeros_like(X)
        _apply(drift_c, X, inc, h)
        for i in range(k):
            _apply(diff_c[i], X, inc, dW[i])
        if heun:
            Xp = X + inc
            inc2 = np.zeros_like(X)
            _apply(drift_c, Xp, inc2, h)
            for i in range(k):
                _apply(diff_c[i], Xp, inc2, dW[i])
            X = X + 0.5 * (inc + inc2)
        else:
            X = X + inc
    return X


def simulate_endpoints(sys: ItoSystem, x0: Sequence | None, cfg: EnsembleConfig) -> Endpoints:
    """Endpoints at ``cfg.t_final`` of paths started at ``x0``.

    Non-finite endpoints are dropped and counted; more than 1% dropped raises
    SimulationError.
    """
    n = sys.dim
    x0 = np.zeros(n) if x0 is None else np.asarray([float(v) for v in x0])
    drift = sys.stratonovich_drift if cfg.scheme == "euler-heun" else sys.drift
    compiled = (_compile(drift), [_compile(f) for f in sys.diffusions])
    ends = []
    c = 0
    with np.errstate(all="ignore"):
        while c * cfg.chunk_size < cfg.n_paths:
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, c])))
            take = min(cfg.chunk_size, cfg.n_paths - c * cfg.chunk_size)
            X = _run_chunk(sys, compiled, x0, take, cfg, rng)
            ends.append(X.T)
            c += 1
    samples = np.concatenate(ends, axis=0)
    finite = np.all(np.isfinite(samples), axis=1)
    discarded = int((~finite).sum())
    if discarded > MAX_DISCARD_FRACTION * cfg.n_paths:
        raise SimulationError(
            f"{discarded} of {cfg.n_paths} paths produced non-finite endpoints (limit 1%)"
        )
    idx = np.nonzero(finite)[0]
    return Endpoints(samples[finite], idx, discarded, cfg)


def write_endpoints_csv(path, ends: Endpoints) -> None:
    dim = ends.samples.shape[1] if ends.samples.ndim == 2 else 0
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("path_index," + ",".join(f"x{j + 1}" for j in range(dim)) + "\n")
        for i, row in zip(ends.path_index, ends.samples):
            fh.write(f"{int(i)}," + ",".join(f"{v:.17g}" for v in row) + "\n")


# ---------------------------------------------------------------- density

@dataclass(frozen=True)
class DensityEstimate:
    value: float
    stderr: float
    h_used: tuple               # schedule entries that had enough hits
    n_in: int                   # hits in the smallest usable box
    scale: float = 1.0
    raw: tuple = ()             # (h, hits, raw estimate) for every schedule entry

    def interval(self, k: float = 3.0) -> tuple[float, float]:
        return self.value - k * self.stderr, self.value + k * self.stderr


def box_scale(samples: np.ndarray, point: np.ndarray, weights: Sequence[int]) -> float:
    """Median over coordinates of ``(IQR_j / 1.349)^{1/w_j}``.

    Under ``y -> delta_eps y`` every term scales by ``eps``, so boxes built
    from it transform with the dilations.
    """
    q75, q25 = np.percentile(samples, [75, 25], axis=0)
    spread = (q75 - q25) / 1.349
    w = np.asarray(weights, dtype=float)
    per = np.where(spread > 0, np.abs(spread) ** (1.0 / w), np.nan)
    if np.all(np.isnan(per)):
        return 1.0
    return float(np.nanmedian(per))


def density_at_point(
    samples,
    point: Sequence | None,
    graded: GradedStructure | Sequence[int],
    h_schedule: Sequence[float] = DEFAULT_H_SCHEDULE,
    n_total: int | None = None,
    scale: float | None = None,
    min_hits: int = MIN_HITS,
) -> DensityEstimate:
    """Anisotropic box-counting density with ``h -> 0`` extrapolation.

    Box ``h`` is ``prod_j [p_j - (h s)^{w_j}, p_j + (h s)^{w_j}]``.  The raw
    estimates are fitted by ``a + b h^2`` and ``a`` is reported.  The nested
    boxes make the hit counts multinomial; their full covariance is pushed
    through the linear fit to obtain the standard error.
    """
    if isinstance(samples, Endpoints):
        n_total = samples.n_total if n_total is None else n_total
        samples = samples.samples
    Y = np.asarray(samples, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(Y) == 0:
        raise ValueError("no samples")
    weights = graded.weights_w if isinstance(graded, GradedStructure) else tuple(graded)
    dim = Y.shape[1]
    if len(weights) != dim:
        raise ValueError("weights do not match sample dimension")
    point = np.zeros(dim) if point is None else np.asarray([float(v) for v in point])
    n = len(Y) if n_total is None else int(n_total)
    s = box_scale(Y, point, weights) if scale is None else float(scale)
    w = np.asarray(weights, dtype=float)
    D = np.abs(Y - point)
    # smallest h at which each sample falls in the box: max_j D_j^{1/w_j} / s
    reach = np.max(D ** (1.0 / w), axis=1) / s
    hs = np.asarray(sorted(h_schedule, reverse=True), dtype=float)
    counts = np.array([np.count_nonzero(reach <= h) for h in hs])
    vols = np.array([np.prod(2.0 * (h * s) ** w) for h in hs])
    raw = tuple((float(h), int(c), float(c / (n * v))) for h, c, v in zip(hs, counts, vols))
    usable = counts >= min_hits
    if usable.sum() < 2:
        raise InsufficientHits(
            f"only {int(usable.sum())} box sizes have >= {min_hits} hits (counts {counts.tolist()})"
        )
    hu, cu, vu = hs[usable], counts[usable], vols[usable]
    P = cu / n
    est = P / vu
    A = np.column_stack([np.ones_like(hu), hu ** 2])
    coef = np.linalg.pinv(A)[0]          # weights giving the intercept
    value = float(coef @ est)
    Pmin = np.minimum.outer(P, P)        # nested boxes: P(both) = P(smaller)
    cov = (Pmin - np.outer(P, P)) / n / np.outer(vu, vu)
    var = float(coef @ cov @ coef)
    return DensityEstimate(
        value=max(value, 0.0),
        stderr=math.sqrt(max(var, 0.0)),
        h_used=tuple(float(h) for h in hu),
        n_in=int(cu[-1]),
        scale=s,
        raw=raw,
    )


@dataclass(frozen=True)
class Q0Estimate:
    value: float
    stderr: float
    estimate: DensityEstimate | None
    flags: tuple
    boundary_coordinates: tuple
    discarded: int = 0


def support_boundary_coordinates(samples: np.ndarray, point: np.ndarray) -> tuple:
    """1-based coordinates along which every sample lies on one side of ``point``."""
    D = samples - point
    out = []
    for j in range(D.shape[1]):
        if np.all(D[:, j] >= 0) or np.all(D[:, j] <= 0):
            out.append(j + 1)
    return tuple(out)


def estimate_q0_diagonal(
    ns: NilpotentSystem,
    cfg: EnsembleConfig,
    h_schedule: Sequence[float] = DEFAULT_H_SCHEDULE,
    controllable: bool | None = None,
) -> Q0Estimate:
    """Density of the homogeneous process at time 1 at its starting point 0."""
    cfg = cfg.with_(t_final=1.0)
    sys = system_from_fields(ns.fhat)
    ends = simulate_endpoints(sys, None, cfg)
    point = np.zeros(ns.dim)
    flags = []
    if controllable is False:
        flags.append("advisory: nilpotent system not shown controllable")
    boundary = support_boundary_coordinates(ends.samples, point)
    if boundary:
        flags.append(
            "support boundary: all endpoints on one side of the base point in coordinate(s) "
            + ",".join(map(str, boundary))
        )
    if boundary:
        # one-sided support: the smooth h -> 0 model does not apply, use the smallest box as is
        est = smallest_box_estimate(ends, point, ns.graded.weights_w, h_schedule)
        flags.append(f"no extrapolation at the boundary; smallest box (h={est.h_used[0]:g}) has {est.n_in} hits")
        return Q0Estimate(est.value, est.stderr, est, tuple(flags), boundary, ends.discarded)
    try:
        est = density_at_point(ends, point, ns.graded, h_schedule)
    except InsufficientHits as exc:
        flags.append(f"insufficient hits: {exc}")
        # with zero hits in the widest box the density is below ~3/(n * volume)
        s = box_scale(ends.samples, point, ns.graded.weights_w)
        vol = float(np.prod([2.0 * (max(h_schedule) * s) ** w for w in ns.graded.weights_w]))
        return Q0Estimate(0.0, 3.0 / (cfg.n_paths * vol), None, tuple(flags), boundary, ends.discarded)
    return Q0Estimate(est.value, est.stderr, est, tuple(flags), boundary, ends.discarded)


def smallest_box_estimate(ends: Endpoints, point: np.ndarray, weights: Sequence[int],
                          h_schedule: Sequence[float] = DEFAULT_H_SCHEDULE) -> DensityEstimate:
    """Hit frequency of the smallest box divided by its volume.

    With no hits the reported stderr is the rule-of-three bound ``3 / (n vol)``.
    """
    Y = ends.samples
    n = ends.n_total
    s = box_scale(Y, point, weights)
    h = float(min(h_schedule))
    w = np.asarray(weights, dtype=float)
    inside = np.all(np.abs(Y - point) <= (h * s) ** w, axis=1)
    c = int(np.count_nonzero(inside))
    vol = float(np.prod(2.0 * (h * s) ** w))
    se = math.sqrt(c * (1 - c / n)) / (n * vol) if c else 3.0 / (n * vol)
    return DensityEstimate(c / (n * vol), se, (h,), c, s, ((h, c, c / (n * vol)),))


# ---------------------------------------------------------------- scaling identity

@dataclass(frozen=True)
class ScalingIdentityResult:
    passed: bool
    left: DensityEstimate
    right: DensityEstimate
    factor: float               # eps^N applied to the right-hand side

    @property
    def right_scaled(self) -> tuple[float, float]:
        return self.factor * self.right.value, self.factor * self.right.stderr


def verify_scaling_identity(
    ns: NilpotentSystem,
    eps: float,
    t: float,
    x: Sequence | None,
    cfg: EnsembleConfig,
    seeds: tuple[int, int] | None = None,
    h_schedule: Sequence[float] = DEFAULT_H_SCHEDULE,
) -> ScalingIdentityResult:
    """Monte-Carlo check of ``q(t, 0, x) = eps^N q(eps^2 t, 0, delta_eps x)``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    g = ns.graded
    x = np.zeros(ns.dim) if x is None else np.asarray([float(v) for v in x])
    seeds = seeds or (cfg.seed, cfg.seed + 1)
    sys = system_from_fields(ns.fhat)
    left_ends = simulate_endpoints(sys, None, cfg.with_(t_final=t, seed=seeds[0]))
    left = density_at_point(left_ends, x, g, h_schedule)
    xe = x * eps ** np.asarray(g.weights_w, dtype=float)
    right_ends = simulate_endpoints(sys, None, cfg.with_(t_final=eps * eps * t, seed=seeds[1]))
    right = density_at_point(right_ends, xe, g, h_schedule)
    factor = float(eps) ** g.N
    lo1, hi1 = left.interval(3.0)
    lo2, hi2 = factor * right.value - 3 * factor * right.stderr, factor * right.value + 3 * factor * right.stderr
    return ScalingIdentityResult(lo1 <= hi2 and lo2 <= hi1, left, right, factor)


def gaussian_density(t: float, x: float) -> float:
    """Heat kernel of ``1/2 d^2/dx^2`` on the line."""
    return math.exp(-x * x / (2 * t)) / math.sqrt(2 * math.pi * t)


# ---------------------------------------------------------------- exponent fit

@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    t_grid: tuple
    p_hats: tuple
    stderrs: tuple
    slope_stderr: float = float("nan")
    expected_slope: float | None = None
    warnings: tuple = ()


def fit_log_log(t_grid: Sequence[float], p_hats: Sequence[float], stderrs: Sequence[float],
                expected_slope: float | None = None, notes: Sequence[str] = ()) -> ScalingFit:
    t = np.asarray(t_grid, dtype=float)
    p = np.asarray(p_hats, dtype=float)
    se = np.asarray(stderrs, dtype=float)
    if np.any(p <= 0):
        raise ValueError("cannot fit a power law to non-positive estimates")
    x, y = np.log(t), np.log(p)
    A = np.column_stack([np.ones_like(x), x])
    W = np.linalg.pinv(A)
    intercept, slope = W @ y
    resid = y - A @ np.array([intercept, slope])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    slope_se = float(np.sqrt(np.sum((W[1] * se / p) ** 2)))
    return ScalingFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0), tuple(t.tolist()),
                      tuple(p.tolist()), tuple(se.tolist()), slope_se, expected_slope, tuple(notes))


def scaling_exponent_fit(
    fields: Sequence[VectorField],
    x0: Sequence | None,
    chart_forward: Sequence[Polynomial] | None,
    graded: GradedStructure,
    cfg: EnsembleConfig,
    t_grid: Sequence[float] = DEFAULT_T_GRID,
    h_schedule: Sequence[float] = DEFAULT_H_SCHEDULE,
) -> ScalingFit:
    """Fit ``log p(t, x0, x0)`` against ``log t`` for the original diffusion.

    Paths are simulated with the original fields from ``x0``; endpoints are
    mapped through the chart (polynomials in ``x - x0``) and the density is
    estimated at the chart origin with boxes shaped by the coordinate weights.
    """
    t_grid = tuple(sorted(float(t) for t in t_grid))
    if len(t_grid) < 4 or t_grid[-1] / t_grid[0] < 8:
        raise ValueError("t_grid needs at least 4 points spanning a factor of 8")
    n = graded.dim
    x0 = np.zeros(n) if x0 is None else np.asarray([float(v) for v in x0])
    sys = system_from_fields(fields)
    fwd = None
    if chart_forward is not None:
        fwd = [p.to_numpy() for p in chart_forward]
    p_hats, ses, notes = [], [], []
    for i, t in enumerate(t_grid):
        ends = simulate_endpoints(sys, x0, cfg.with_(t_final=t, seed=cfg.seed + i))
        U = ends.samples - x0
        Y = np.column_stack([f(U.T) for f in fwd]) if fwd is not None else U
        est = density_at_point(Y, None, graded, h_schedule, n_total=cfg.n_paths)
        if est.value < 2 * est.stderr:
            notes.append(f"t={t:g}: estimate {est.value:.4g} is within 2 stderr of zero")
        p_hats.append(est.value)
        ses.append(est.stderr)
    if notes:
        warnings.warn("; ".join(notes), RuntimeWarning, stacklevel=2)
    return fit_log_log(t_grid, p_hats, ses, -graded.N / 2, notes)
