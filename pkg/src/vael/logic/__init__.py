"""Restricted probabilistic-logic dialect: parsing, grounding, exact inference."""

from .errors import (
    CyclicProgramError,
    GroundingError,
    InconsistentEvidenceError,
    LogicError,
    NonGroundFormulaError,
    ParseError,
    UnboundVariableError,
    UnknownPredicateError,
    WorldCapExceededError,
)
from .grounding import GroundClause, GroundProgram, ground
from .parser import parse_formula, parse_ground_atom, parse_program
from .programs import (
    TASK_PROGRAMS,
    addition_program,
    multiplication_program,
    power_program,
    subtraction_program,
)
from .syntax import (
    AnnotatedDisjunction,
    Atom,
    Clause,
    Conj,
    Disj,
    Neg,
    Program,
    Var,
    conjunction,
    make_program,
)
from .worlds import (
    DEFAULT_WORLD_CAP,
    FactProbabilities,
    World,
    WorldDistribution,
    entailment_mask,
    entails,
    enumerate_worlds,
    evidence_conditional,
    sample_world,
    success_gradient,
    success_probability,
    validate_probabilities,
    world_count,
    world_probabilities,
    world_probability,
)

__all__ = [
    "AnnotatedDisjunction",
    "Atom",
    "Clause",
    "Conj",
    "CyclicProgramError",
    "DEFAULT_WORLD_CAP",
    "Disj",
    "FactProbabilities",
    "GroundClause",
    "GroundProgram",
    "GroundingError",
    "InconsistentEvidenceError",
    "LogicError",
    "Neg",
    "NonGroundFormulaError",
    "ParseError",
    "Program",
    "TASK_PROGRAMS",
    "UnboundVariableError",
    "UnknownPredicateError",
    "Var",
    "World",
    "WorldCapExceededError",
    "WorldDistribution",
    "addition_program",
    "conjunction",
    "entailment_mask",
    "entails",
    "enumerate_worlds",
    "evidence_conditional",
    "ground",
    "make_program",
    "multiplication_program",
    "parse_formula",
    "parse_ground_atom",
    "parse_program",
    "power_program",
    "sample_world",
    "subtraction_program",
    "success_gradient",
    "success_probability",
    "validate_probabilities",
    "world_count",
    "world_probabilities",
    "world_probability",
]
