"""Validation and threshold-gated aggregation of secret-shared unit vectors."""

from .client import BlindMode, make_submissions, unit_vector
from .field import FieldParams, ParameterError, gen_field
from .pipeline import RunConfig, run_sim, run_tcp

__all__ = [
    "BlindMode",
    "FieldParams",
    "ParameterError",
    "RunConfig",
    "gen_field",
    "make_submissions",
    "run_sim",
    "run_tcp",
    "unit_vector",
]
