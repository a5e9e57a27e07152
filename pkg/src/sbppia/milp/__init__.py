"""Exact formulation: model building, LP text I/O, validation and a tiny-instance optimizer."""

from .build import (
    MilpInstance, RequestChoice, RobustModel, Violation, build_model, choice_objective,
    decode_choice, solution_assignment, validate_solution,
)
from .exhaustive import ExhaustiveResult, SearchSpaceExceeded, exhaustive_optimize
from .model import Model, ModelTooLarge, dumps_lp, emit_lp, loads_lp, loads_solution, read_lp

__all__ = [
    "ExhaustiveResult", "MilpInstance", "Model", "ModelTooLarge", "RequestChoice", "RobustModel",
    "SearchSpaceExceeded", "Violation", "build_model", "choice_objective", "decode_choice",
    "dumps_lp", "emit_lp", "exhaustive_optimize", "loads_lp", "loads_solution", "read_lp",
    "solution_assignment", "validate_solution",
]
