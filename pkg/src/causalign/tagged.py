"""Tagged structured representation of a causal extraction.

The serialized form ``[Cause] <c> [Relation] <r> [Effect] <e>`` is the
interchange surface for every file and wire payload in the pipeline.
Markers are case-sensitive and must appear exactly once, in that order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum

CAUSE_TAG = "[Cause]"
RELATION_TAG = "[Relation]"
EFFECT_TAG = "[Effect]"

_WS = re.compile(r"\s+")


class Relation(str, Enum):
    CAUSE = "cause"
    PREVENT = "prevent"
    ENABLE = "enable"


def collapse_ws(text: str) -> str:
    """Trim and collapse internal whitespace runs to single spaces."""
    return _WS.sub(" ", text).strip()


@dataclass(frozen=True)
class Extraction:
    """A (cause, relation, effect) triple. Cause/effect are clauses of a source text."""

    cause: str
    effect: str
    relation: Relation = Relation.CAUSE

    def normalized(self) -> "Extraction":
        return replace(
            self,
            cause=collapse_ws(self.cause),
            effect=collapse_ws(self.effect),
            relation=Relation(self.relation),
        )

    def to_dict(self) -> dict:
        return {
            "cause": self.cause,
            "effect": self.effect,
            "relation": Relation(self.relation).value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Extraction":
        return cls(cause=d["cause"], effect=d["effect"], relation=Relation(d["relation"]))


class TaggedFormatError(ValueError):
    """Raised when an Extraction cannot be serialized (invalid relation, empty field)."""


class ParseErrorKind(str, Enum):
    MISSING_TAG = "missing_tag"
    TAG_ORDER = "tag_order"
    UNKNOWN_RELATION = "unknown_relation"
    EMPTY_FIELD = "empty_field"


class TaggedParseError(ValueError):
    """Typed parse failure; ``marker`` names the offending tag or field."""

    def __init__(self, kind: ParseErrorKind, marker: str, message: str):
        super().__init__(f"{kind.value} at {marker}: {message}")
        self.kind = kind
        self.marker = marker


def serialize_extraction(e: Extraction) -> str:
    """Render an Extraction in the tagged format, normalizing field whitespace."""
    try:
        relation = Relation(e.relation)
    except ValueError:
        raise TaggedFormatError(f"invalid relation value: {e.relation!r}") from None
    cause = collapse_ws(e.cause)
    effect = collapse_ws(e.effect)
    if not cause:
        raise TaggedFormatError("cause is empty after whitespace normalization")
    if not effect:
        raise TaggedFormatError("effect is empty after whitespace normalization")
    return (
        f"{CAUSE_TAG} {cause} {RELATION_TAG} {relation.value} {EFFECT_TAG} {effect}"
    )


def parse_extraction(s: str) -> Extraction:
    """Parse a tagged string back into an Extraction.

    Inverse of :func:`serialize_extraction` up to whitespace normalization and
    relation casing. Raises :class:`TaggedParseError` on any malformed input;
    never raises anything else, whatever the input string contains.
    """
    if not isinstance(s, str):
        raise TaggedParseError(
            ParseErrorKind.MISSING_TAG, CAUSE_TAG, f"expected text, got {type(s).__name__}"
        )
    positions = {}
    for tag in (CAUSE_TAG, RELATION_TAG, EFFECT_TAG):
        count = s.count(tag)
        if count == 0:
            raise TaggedParseError(ParseErrorKind.MISSING_TAG, tag, "marker absent")
        if count > 1:
            raise TaggedParseError(
                ParseErrorKind.TAG_ORDER, tag, f"marker appears {count} times"
            )
        positions[tag] = s.index(tag)
    if not (positions[CAUSE_TAG] < positions[RELATION_TAG] < positions[EFFECT_TAG]):
        raise TaggedParseError(
            ParseErrorKind.TAG_ORDER, RELATION_TAG, "markers out of order"
        )
    if s[: positions[CAUSE_TAG]].strip():
        raise TaggedParseError(
            ParseErrorKind.TAG_ORDER, CAUSE_TAG, "unexpected text before the first marker"
        )

    cause = collapse_ws(s[positions[CAUSE_TAG] + len(CAUSE_TAG) : positions[RELATION_TAG]])
    relation_text = collapse_ws(
        s[positions[RELATION_TAG] + len(RELATION_TAG) : positions[EFFECT_TAG]]
    )
    effect = collapse_ws(s[positions[EFFECT_TAG] + len(EFFECT_TAG) :])

    try:
        relation = Relation(relation_text.lower())
    except ValueError:
        raise TaggedParseError(
            ParseErrorKind.UNKNOWN_RELATION,
            RELATION_TAG,
            f"unknown relation {relation_text!r}",
        ) from None
    if not cause:
        raise TaggedParseError(ParseErrorKind.EMPTY_FIELD, CAUSE_TAG, "cause is empty")
    if not effect:
        raise TaggedParseError(ParseErrorKind.EMPTY_FIELD, EFFECT_TAG, "effect is empty")
    return Extraction(cause=cause, effect=effect, relation=relation)
