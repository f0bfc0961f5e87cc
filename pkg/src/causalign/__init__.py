"""causalign: a desk-scale causal event extraction laboratory.

Pipeline: dataset conversion -> human/oracle validity labels -> trained
evaluator (doubles as RL reward model) -> span-pointer extraction policy
aligned with PPO -> weak-to-strong supervision, plus the metric and
agreement machinery to evaluate all of it.
"""

__version__ = "0.1.0"

from .tagged import (
    Extraction,
    Relation,
    TaggedFormatError,
    TaggedParseError,
    ParseErrorKind,
    parse_extraction,
    serialize_extraction,
)
from .records import CausalInstance, EvaluationInput, LabeledEvaluation

__all__ = [
    "Extraction",
    "Relation",
    "TaggedFormatError",
    "TaggedParseError",
    "ParseErrorKind",
    "parse_extraction",
    "serialize_extraction",
    "CausalInstance",
    "EvaluationInput",
    "LabeledEvaluation",
]
