"""Sampled certification of general s-convex functions, sets and optimality conditions."""

from .expr import DomainError, Expr, differentiate, evaluate, evaluate_many, parse, to_string
from .sampling import BoxDomain, SamplePlan, sample_pairs
from .defcheck import (
    CheckReport,
    ModifierMap,
    Verdict,
    check_convex,
    check_general_s_convex,
    check_s_convex_second_sense,
    check_sub_b_convex,
    check_sub_b_s_convex,
)

__version__ = "0.1.0"

__all__ = [
    "BoxDomain",
    "CheckReport",
    "DomainError",
    "Expr",
    "ModifierMap",
    "SamplePlan",
    "Verdict",
    "check_convex",
    "check_general_s_convex",
    "check_s_convex_second_sense",
    "check_sub_b_convex",
    "check_sub_b_s_convex",
    "differentiate",
    "evaluate",
    "evaluate_many",
    "parse",
    "sample_pairs",
    "to_string",
]
