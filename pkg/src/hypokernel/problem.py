"""Problem files: an INI-style description of the fields, base point and options.

Example::

    [fields]
    dim = 2
    f0 = 0, sin(x1^2)
    f1 = 1, x1

    [point]
    x0 = 0, 0

    [options]
    taylor_degree = 12
    paths = 200000

Field components are separated by commas.  ``f0`` is the drift and
``f1, f2, ...`` must be numbered consecutively.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import DriftNotStationary, HypoKernelError
from .polyalg import ParseError, VectorField, parse_vector_field
from .sde import DEFAULT_H_SCHEDULE, DEFAULT_T_GRID


class ProblemError(HypoKernelError):
    """Invalid problem file; the message carries the line number when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        where = ""
        if path:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


OPTION_TYPES = {
    "taylor_degree": int,
    "weight_cap": int,
    "rank_tol": float,
    "trunc_deg": int,
    "seed": int,
    "paths": int,
    "dt": float,
    "chunk_size": int,
    "t_grid": "floats",
    "h_schedule": "floats",
    "adjust_divergence": bool,
    "control_bound": float,
    "switches": int,
    "mc_samples": int,
    "mc_time": float,
}


@dataclass(frozen=True)
class ProblemSpec:
    dim: int
    f0: tuple                       # n expression strings
    f: tuple                        # k tuples of n expression strings
    x0: tuple                       # n Fractions
    taylor_degree: int
    weight_cap: int
    rank_tol: float = 1e-10
    trunc_deg: int | None = None
    seed: int = 0
    paths: int = 100_000
    dt: float | None = None
    chunk_size: int = 1 << 15
    t_grid: tuple = DEFAULT_T_GRID
    h_schedule: tuple = DEFAULT_H_SCHEDULE
    adjust_divergence: bool = False
    control_bound: float = 5.0
    switches: int = 8
    mc_samples: int = 10_000
    mc_time: float = 1.0
    name: str = "problem"
    fields: tuple = field(default=(), compare=False, repr=False)   # in u = x - x0
    transcendental: bool = field(default=False, compare=False)

    @property
    def k(self) -> int:
        return len(self.f)

    def with_overrides(self, **kw) -> ProblemSpec:
        kw = {k: v for k, v in kw.items() if v is not None}
        if not kw:
            return self
        d = {name: getattr(self, name) for name in self.__dataclass_fields__}
        d.update(kw)
        reparse = "taylor_degree" in kw
        if "weight_cap" in kw and "taylor_degree" not in kw and self.transcendental:
            d["taylor_degree"] = max(self.taylor_degree, 2 * kw["weight_cap"])
            reparse = True
        spec = ProblemSpec(**d)
        if reparse:
            fields, transcendental = _parse_fields(spec.f0, spec.f, spec.taylor_degree, {}, None, spec.x0)
            spec = _replace(spec, fields=tuple(fields), transcendental=transcendental)
        return spec


def _replace(spec: ProblemSpec, **kw) -> ProblemSpec:
    d = {name: getattr(spec, name) for name in spec.__dataclass_fields__}
    d.update(kw)
    return ProblemSpec(**d)


_FUNC = re.compile(r"\b(sin|cos|exp)\s*\(")


def _line_numbers(text: str) -> dict:
    """Map ``(section, key)`` to the 1-based line where the key is defined."""
    out = {}
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            out[(section, None)] = i
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            out[(section, m.group(1).strip().lower())] = i
    return out


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",")]


def _parse_fields(f0, fs, taylor_degree, lines, path=None, center=None):
    out = []
    transcendental = False
    for name, comps in [("f0", f0)] + [(f"f{i + 1}", c) for i, c in enumerate(fs)]:
        line = lines.get(("fields", name))
        for c in comps:
            if _FUNC.search(c):
                transcendental = True
        try:
            out.append(parse_vector_field(list(comps), taylor_degree, center))
        except ParseError as exc:
            raise ProblemError(f"field {name}: {exc}", line, path) from exc
    return out, transcendental


def _convert(key: str, value: str, line, path):
    kind = OPTION_TYPES[key]
    try:
        if kind == "floats":
            vals = tuple(float(v) for v in _split(value))
            if not vals:
                raise ValueError
            return vals
        if kind is bool:
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        return kind(value.strip())
    except ValueError:
        raise ProblemError(f"option {key}: cannot read {value!r}", line, path) from None


def parse_problem(text: str, path: str | None = None, check_stationary: bool = True) -> ProblemSpec:
    lines = _line_numbers(text)
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        cp.read_string(text, source=path or "<problem>")
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ProblemError(str(exc).splitlines()[0], line, path) from None
    for section in cp.sections():
        if section.lower() not in ("fields", "point", "options"):
            raise ProblemError(f"unknown section [{section}]", lines.get((section.lower(), None)), path)
    if not cp.has_section("fields"):
        raise ProblemError("missing [fields] section", None, path)
    fields_sec = cp["fields"]
    if "dim" not in fields_sec:
        raise ProblemError("[fields] needs dim", lines.get(("fields", None)), path)
    try:
        dim = int(fields_sec["dim"])
        if dim < 1:
            raise ValueError
    except ValueError:
        raise ProblemError(f"dim must be a positive integer, got {fields_sec['dim']!r}",
                           lines.get(("fields", "dim")), path) from None
    if "f0" not in fields_sec:
        raise ProblemError("[fields] needs the drift f0", lines.get(("fields", None)), path)
    names = [k for k in fields_sec if k != "dim"]
    for k in names:
        if not re.fullmatch(r"f\d+", k):
            raise ProblemError(f"unknown key {k!r} in [fields]", lines.get(("fields", k)), path)
    idx = sorted(int(k[1:]) for k in names)
    if idx != list(range(len(idx))):
        raise ProblemError(f"fields must be numbered f0, f1, ... consecutively, got {sorted(names)}",
                           lines.get(("fields", None)), path)
    comps = {}
    for k in names:
        parts = _split(fields_sec[k])
        if len(parts) != dim or any(p == "" for p in parts):
            raise ProblemError(f"field {k} needs {dim} non-empty components, got {len(parts)}",
                               lines.get(("fields", k)), path)
        comps[int(k[1:])] = tuple(parts)
    f0 = comps[0]
    fs = tuple(comps[i] for i in range(1, len(comps)))

    x0 = tuple(Fraction(0) for _ in range(dim))
    if cp.has_section("point"):
        for k in cp["point"]:
            if k != "x0":
                raise ProblemError(f"unknown key {k!r} in [point]", lines.get(("point", k)), path)
        if "x0" in cp["point"]:
            parts = _split(cp["point"]["x0"])
            line = lines.get(("point", "x0"))
            if len(parts) != dim:
                raise ProblemError(f"x0 needs {dim} entries, got {len(parts)}", line, path)
            try:
                x0 = tuple(Fraction(p) for p in parts)
            except (ValueError, ZeroDivisionError):
                raise ProblemError(f"x0 entries must be rationals, got {parts}", line, path) from None

    opts = {}
    if cp.has_section("options"):
        for k, v in cp["options"].items():
            if k not in OPTION_TYPES:
                raise ProblemError(f"unknown option {k!r}", lines.get(("options", k)), path)
            opts[k] = _convert(k, v, lines.get(("options", k)), path)
    weight_cap = opts.pop("weight_cap", 2 * dim + 2)
    taylor_degree = opts.pop("taylor_degree", 2 * weight_cap)
    if weight_cap < 1 or taylor_degree < 1:
        raise ProblemError("weight_cap and taylor_degree must be positive", None, path)
    if opts.get("paths", 1) < 1:
        raise ProblemError("paths must be positive", lines.get(("options", "paths")), path)

    fields, transcendental = _parse_fields(f0, fs, taylor_degree, lines, path, x0)
    spec = ProblemSpec(
        dim=dim, f0=f0, f=fs, x0=x0, taylor_degree=taylor_degree, weight_cap=weight_cap,
        name=Path(path).stem if path else "problem", fields=tuple(fields),
        transcendental=transcendental, **opts,
    )
    if check_stationary:
        drift_at = fields[0].evaluate([0] * dim)
        if any(drift_at):
            raise DriftNotStationary(
                f"drift f0 at x0 is ({', '.join(str(v) for v in drift_at)}); "
                "the base point must be stationary"
            )
    return spec


def load_problem(path, check_stationary: bool = True) -> ProblemSpec:
    """Read and validate a problem file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemError(f"cannot read problem file: {exc.strerror}", None, str(path)) from None
    return parse_problem(text, str(path), check_stationary)


def fields_of(spec: ProblemSpec) -> list[VectorField]:
    """Parsed fields in the displacement coordinates ``u = x - x0``."""
    return list(spec.fields)
