"""End-to-end analysis: filtration, chart, approximation, classification, simulation."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .chart import build_adapted_chart, verify_adapted
from .control import Status, classify, mc_reachability
from .errors import HormanderUndecided, InsufficientHits, SimulationError, TruncationTooLow
from .lie import filtration_at_point
from .nilpotent import (
    check_homogeneity,
    divergence_drift_adjust,
    lie_algebra_equality_check,
    nilpotent_approximation,
)
from .polyalg import format_field, format_polynomial
from .problem import ProblemSpec
from .sde import (
    EnsembleConfig,
    estimate_q0_diagonal,
    scaling_exponent_fit,
    simulate_endpoints,
    system_from_fields,
    verify_scaling_identity,
    write_endpoints_csv,
)

MODES = ("analyze", "simulate", "full")
EXIT_OK, EXIT_VALIDATION, EXIT_HORMANDER, EXIT_SIMULATION = 0, 2, 3, 4
HOMOGENEITY_EPS = (Fraction(1, 2), Fraction(1, 3), Fraction(2))
CHART_ESCALATION = 4


@dataclass
class PipelineResult:
    summary: dict
    exit_code: int = EXIT_OK
    artifacts: dict = field(default_factory=dict)     # file name -> text

    @property
    def report_text(self) -> str:
        return render_report(self.summary)

    @property
    def summary_json(self) -> str:
        return json.dumps(self.summary, indent=2, ensure_ascii=False) + "\n"


def _u_names(n: int) -> list[str]:
    return [f"u{j + 1}" for j in range(n)]


def _y_names(n: int) -> list[str]:
    return [f"y{j + 1}" for j in range(n)]


def _fmt_field(V, names) -> str:
    return format_field(V, names)


def _chart_with_escalation(fields, filt, trunc_deg):
    T = filt.step + 2 if trunc_deg is None else trunc_deg
    last = None
    for extra in range(CHART_ESCALATION + 1):
        try:
            return build_adapted_chart(fields, filt, T + extra)
        except TruncationTooLow as exc:
            last = exc
    raise last


def _ensemble(spec: ProblemSpec, **kw) -> EnsembleConfig:
    cfg = EnsembleConfig(n_paths=spec.paths, seed=spec.seed, chunk_size=spec.chunk_size).with_(**kw)
    if spec.dt is not None:
        cfg = cfg.with_(dt=min(spec.dt, cfg.t_final))
    return cfg


def run_pipeline(spec: ProblemSpec, mode: str = "analyze", export_endpoints: bool = False) -> PipelineResult:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    fields = list(spec.fields)
    n = spec.dim
    u, y = _u_names(n), _y_names(n)
    summary: dict = {}
    result = PipelineResult(summary)
    summary["problem"] = {
        "name": spec.name,
        "mode": mode,
        "dim": n,
        "k": spec.k,
        "x0": [str(c) for c in spec.x0],
        "f0": list(spec.f0),
        "f": [list(c) for c in spec.f],
        "coordinates": "u = x - x0" if any(spec.x0) else "u = x",
        "taylor_degree": spec.taylor_degree,
        "taylor_truncated": spec.transcendental,
        "weight_cap": spec.weight_cap,
        "rank_tol": spec.rank_tol,
        "adjust_divergence": spec.adjust_divergence,
    }

    # -- filtration
    try:
        filt = filtration_at_point(fields, None, spec.weight_cap, spec.rank_tol)
    except HormanderUndecided as exc:
        summary["hormander"] = {
            "satisfied": False,
            "dims": list(exc.dims or ()),
            "detail": str(exc),
        }
        summary["status"] = {"exit_code": EXIT_HORMANDER, "message": "Hörmander condition undecided at the weight cap"}
        result.exit_code = EXIT_HORMANDER
        return result
    exact = filtration_at_point(fields, None, spec.weight_cap, exact=True)
    summary["hormander"] = {
        "satisfied": True,
        "step": filt.step,
        "d": list(filt.d),
        "k_layers": list(filt.k_layers),
        "weights_w": list(filt.weights_w),
        "N": filt.N,
        "basis": [str(b.bracket) for b in filt.basis],
        "exact_rank_agrees": exact.d == filt.d,
    }

    # -- chart
    chart = _chart_with_escalation(fields, filt, spec.trunc_deg)
    report = verify_adapted(chart, fields, filt)
    summary["chart"] = {
        "trunc_deg": chart.trunc_deg,
        "inverse_exact": chart.exact,
        "flow_corrected_coordinates": [h + 1 for h in chart.corrected],
        "forward": [f"y{j + 1} = {format_polynomial(p, u)}" for j, p in enumerate(chart.forward)],
        "property_i": report.prop_i,
        "property_ii": report.prop_ii,
        "failures": list(report.failures),
    }

    # -- nilpotent approximation
    ns = nilpotent_approximation(fields, chart, filt)
    lie_eq = lie_algebra_equality_check(None, ns)
    summary["nilpotent"] = {
        "fhat": [f"fhat{i} = {_fmt_field(V, y)}" for i, V in enumerate(ns.fhat)],
        "zero_fields": [f"fhat{i}" for i in ns.zero_fields()],
        "homogeneity": {str(e): check_homogeneity(ns, e) for e in HOMOGENEITY_EPS},
        "lie_equality": lie_eq.equal,
        "d_original": list(lie_eq.d_original),
        "d_nilpotent": list(lie_eq.d_nilpotent),
    }

    simulate = mode in ("simulate", "full")
    reach = None
    if simulate:
        reach = mc_reachability(ns, None, spec.mc_time, spec.mc_samples, spec.seed,
                                control_bound=spec.control_bound, switches=spec.switches)
    cls = classify(ns, fields, None, True, not spec.transcendental, reach)
    summary["control"] = {
        "case": cls.case,
        "nilpotent_status": str(cls.nilpotent.status),
        "nilpotent_method": cls.nilpotent.method,
        "nilpotent_evidence": cls.nilpotent.evidence,
        "original_status": str(cls.original.status),
        "original_method": cls.original.method,
        "original_evidence": cls.original.evidence,
        "notes": list(cls.notes),
    }
    if reach is not None:
        summary["control"]["reachability"] = {
            "time_horizon": reach.time_horizon,
            "samples": reach.sample_count,
            "seed": spec.seed,
            "control_bound": spec.control_bound,
            "switches": spec.switches,
            "orthant_coverage": reach.direction_coverage,
            "fine_coverage": reach.fine_coverage,
            "min_scaled_radius": reach.min_scaled_radius,
            "discarded": reach.discarded,
        }

    if not simulate:
        summary["sampling"] = {"performed": False, "reason": "analyze mode draws no random numbers"}
        summary["status"] = {"exit_code": EXIT_OK, "message": "analysis complete; simulation skipped in analyze mode"}
        return result

    summary["sampling"] = {
        "performed": True,
        "seed": spec.seed,
        "paths": spec.paths,
        "chunk_size": spec.chunk_size,
        "dt": "t/400" if spec.dt is None else spec.dt,
        "h_schedule": list(spec.h_schedule),
        "t_grid": list(spec.t_grid),
        "seed_use": "reachability seed; q0 seed; scaling fit seed+1+i for t_grid[i]; checks seed+100..",
    }
    try:
        _simulation_stages(spec, fields, filt, chart, ns, cls, mode, result, export_endpoints)
    except (SimulationError, InsufficientHits) as exc:
        summary["status"] = {"exit_code": EXIT_SIMULATION, "message": f"simulation quality gate failed: {exc}"}
        result.exit_code = EXIT_SIMULATION
        return result
    if result.exit_code == EXIT_OK:
        summary["status"] = {"exit_code": EXIT_OK, "message": f"{mode} run complete"}
    return result


def _simulation_stages(spec, fields, filt, chart, ns, cls, mode, result, export_endpoints):
    summary = result.summary
    controllable = cls.nilpotent.status is Status.CONTROLLABLE
    q0 = estimate_q0_diagonal(ns, _ensemble(spec), spec.h_schedule, controllable)
    summary["q0"] = {
        "value": q0.value,
        "stderr": q0.stderr,
        "coordinates": "chart (y), time 1, base point 0",
        "flags": list(q0.flags),
        "boundary_coordinates": list(q0.boundary_coordinates),
        "discarded": q0.discarded,
    }
    if export_endpoints:
        ends = simulate_endpoints(system_from_fields(ns.fhat), None, _ensemble(spec, t_final=1.0))
        buf = io.StringIO(newline="")
        _write_csv(buf, ends)
        result.artifacts["endpoints_q0.csv"] = buf.getvalue()

    sim_fields = list(fields)
    if spec.adjust_divergence:
        sim_fields[0] = divergence_drift_adjust(fields)
    if cls.case != "ii.1":
        summary["scaling_fit"] = {
            "performed": False,
            "reason": f"case {cls.case}: the t^(-N/2) law needs a controllable approximating system",
            "expected_slope": -filt.N / 2,
        }
    else:
        fit = scaling_exponent_fit(sim_fields, None, chart.forward, ns.graded,
                                   _ensemble(spec, seed=spec.seed + 1), spec.t_grid, spec.h_schedule)
        summary["scaling_fit"] = {
            "performed": True,
            "slope": fit.slope,
            "slope_stderr": fit.slope_stderr,
            "expected_slope": fit.expected_slope,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
            "warnings": list(fit.warnings),
        }
        lines = ["t,p_hat,stderr"]
        lines += [f"{t:.17g},{p:.17g},{s:.17g}" for t, p, s in zip(fit.t_grid, fit.p_hats, fit.stderrs)]
        result.artifacts["scaling_fit.csv"] = "\n".join(lines) + "\n"

    if mode != "full":
        return
    checks = {}
    if controllable:
        sid = verify_scaling_identity(ns, 0.5, 1.0, None, _ensemble(spec), seeds=(spec.seed + 100, spec.seed + 101),
                                      h_schedule=spec.h_schedule)
        checks["scaling_identity"] = {
            "eps": 0.5,
            "left": sid.left.value,
            "left_stderr": sid.left.stderr,
            "right_scaled": sid.right_scaled[0],
            "right_scaled_stderr": sid.right_scaled[1],
            "passed": sid.passed,
        }
    else:
        checks["scaling_identity"] = {"performed": False, "reason": "q0 at the base point is not expected to be positive"}
    checks["scheme_consistency"] = scheme_consistency(system_from_fields(ns.fhat), _ensemble(spec, seed=spec.seed + 102))
    summary["verification"] = checks
    failed = [k for k, v in checks.items() if v.get("passed") is False]
    if failed:
        summary["status"] = {"exit_code": EXIT_SIMULATION, "message": f"verification failed: {', '.join(failed)}"}
        result.exit_code = EXIT_SIMULATION


def mean_cov_stderr(X: np.ndarray):
    """Means and covariances with standard errors from the sample itself."""
    n = len(X)
    m = X.mean(axis=0)
    D = X - m
    cov = D.T @ D / (n - 1)
    m_se = np.sqrt(np.diag(cov) / n)
    prod = D[:, :, None] * D[:, None, :]
    cov_se = prod.std(axis=0, ddof=1) / np.sqrt(n)
    return m, m_se, cov, cov_se


def compare_ensembles(A: np.ndarray, B: np.ndarray, k: float = 4.0) -> dict:
    """Component means and covariances agree within ``k`` combined standard errors."""
    ma, sa, ca, csa = mean_cov_stderr(A)
    mb, sb, cb, csb = mean_cov_stderr(B)
    zm = np.abs(ma - mb) / np.maximum(np.hypot(sa, sb), 1e-300)
    zc = np.abs(ca - cb) / np.maximum(np.hypot(csa, csb), 1e-300)
    return {
        "max_mean_z": float(zm.max()),
        "max_cov_z": float(zc.max()),
        "threshold": k,
        "passed": bool(zm.max() <= k and zc.max() <= k),
    }


def scheme_consistency(sys, cfg: EnsembleConfig, x0=None) -> dict:
    """Euler-Maruyama on the Itô form against Euler-Heun on the Stratonovich form."""
    em = simulate_endpoints(sys, x0, cfg.with_(scheme="euler-maruyama"))
    heun = simulate_endpoints(sys, x0, cfg.with_(scheme="euler-heun", seed=cfg.seed + 1))
    out = compare_ensembles(em.samples, heun.samples)
    out["paths"] = cfg.n_paths
    return out


def _write_csv(fh, ends) -> None:
    dim = ends.samples.shape[1]
    fh.write("path_index," + ",".join(f"x{j + 1}" for j in range(dim)) + "\n")
    for i, row in zip(ends.path_index, ends.samples):
        fh.write(f"{int(i)}," + ",".join(f"{v:.17g}" for v in row) + "\n")


def _flatten(prefix: str, value, out: list) -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(value, list) and value and all(isinstance(v, str) for v in value) and len(value) > 1:
        out.append((prefix, ""))
        for v in value:
            out.append(("", v))
    else:
        out.append((prefix, value))


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    return str(v)


def render_report(summary: dict) -> str:
    """Plain-text report with one line per key of the summary."""
    out = ["hypokernel report", "=" * 17]
    for section, body in summary.items():
        out.append("")
        out.append(f"[{section}]")
        rows: list = []
        _flatten("", body, rows)
        for key, value in rows:
            if key == "":
                out.append(f"    {value}")
            elif value == "":
                out.append(f"{key}:")
            else:
                out.append(f"{key}: {_fmt_value(value)}")
    return "\n".join(out) + "\n"


def write_outputs(result: PipelineResult, out_dir) -> list:
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    files = {"report.txt": result.report_text, "summary.json": result.summary_json}
    files.update(result.artifacts)
    for name, text in files.items():
        p = out / name
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written.append(p)
    return written
