"""Exact polynomial algebra and the field-expression parser."""

from .fields import VectorField, apply_field, format_field, lie_bracket
from .parse import ParseError, parse_expression, parse_field_component, parse_vector_field
from .polynomial import (
    DimensionMismatch,
    Polynomial,
    evaluate,
    format_polynomial,
    partial_derivative,
    ring_op,
)

__all__ = [
    "DimensionMismatch",
    "ParseError",
    "Polynomial",
    "VectorField",
    "apply_field",
    "evaluate",
    "format_field",
    "format_polynomial",
    "lie_bracket",
    "parse_expression",
    "parse_field_component",
    "parse_vector_field",
    "partial_derivative",
    "ring_op",
]
