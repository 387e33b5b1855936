"""Reference systems used by the tests, the acceptance suite and the CLI.

Each builder returns ``[f0, f1, ..., fk]`` with ``f0`` the drift; the base
point is the origin.
"""

from __future__ import annotations

from .polyalg import VectorField, parse_vector_field


def fields_from_text(drift: list[str], diffusions: list[list[str]], taylor_degree: int = 10) -> list[VectorField]:
    return [parse_vector_field(drift, taylor_degree)] + [
        parse_vector_field(f, taylor_degree) for f in diffusions
    ]


def example_sine_drift(taylor_degree: int = 10) -> list[VectorField]:
    """R^2 with f1 = d/dx1 + x1 d/dx2 and drift sin(x1^2) d/dx2."""
    return fields_from_text(["0", "sin(x1^2)"], [["1", "x1"]], taylor_degree)


def heisenberg() -> list[VectorField]:
    """Driftless Heisenberg fields on R^3."""
    drift, diffusions = heisenberg_text()
    return fields_from_text(drift, diffusions)


def heisenberg_text() -> tuple[list[str], list[list[str]]]:
    return ["0", "0", "0"], [["1", "0", "1/2*x2"], ["0", "1", "-1/2*x1"]]


def ben_arous_leandre(a: int, b: int) -> list[VectorField]:
    """Drift x1^a d/dx2 with f1 = d/dx1 and f2 = x1^b d/dx2."""
    return fields_from_text(["0", f"x1^{a}"], [["1", "0"], ["0", f"x1^{b}"]])


def double_integrator() -> list[VectorField]:
    """Drift x1 d/dx2, one input d/dx1."""
    return fields_from_text(["0", "x1"], [["1", "0"]])


def brownian() -> list[VectorField]:
    return fields_from_text(["0"], [["1"]])


def linear_multiplicative() -> list[VectorField]:
    """One-dimensional f1 = x1 d/dx1 without drift (geometric Brownian motion)."""
    return fields_from_text(["0"], [["x1"]])


FIXTURES = {
    "example1": example_sine_drift,
    "heisenberg": heisenberg,
    "bal_1_1": lambda: ben_arous_leandre(1, 1),
    "bal_2_1": lambda: ben_arous_leandre(2, 1),
    "bal_2_4": lambda: ben_arous_leandre(2, 4),
    "double_integrator": double_integrator,
    "brownian": brownian,
}
