"""Extraction metrics and annotator-agreement statistics.

All functions are pure. Fraction-valued metrics lie in [0, 1]; kappa and
Pearson in [-1, 1]. Token-level scores macro-average the cause and effect
fields so both count equally regardless of length.
"""

from __future__ import annotations

import logging
import math
import unicodedata
from collections import Counter
from typing import Hashable, NamedTuple, Sequence

from .tagged import Extraction, Relation, collapse_ws

log = logging.getLogger(__name__)


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip boundary punctuation per token.

    Internal punctuation survives ("$75.00", "firm's"); currency and other
    symbol characters are not punctuation and are kept even at the edges.
    """
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and unicodedata.category(raw[start]).startswith("P"):
            start += 1
        while end > start and unicodedata.category(raw[end - 1]).startswith("P"):
            end -= 1
        if start < end:
            tokens.append(raw[start:end])
    return tokens


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def field_prf(pred: list[str], gold: list[str]) -> PRF:
    """Multiset-overlap P/R/F1 of one field's token bags."""
    if not pred and not gold:
        return PRF(1.0, 1.0, 1.0)
    if not pred or not gold:
        return PRF(0.0, 0.0, 0.0)
    overlap = sum((Counter(pred) & Counter(gold)).values())
    p = overlap / len(pred)
    r = overlap / len(gold)
    return PRF(p, r, _f1(p, r))


def token_prf(pred: Extraction, gold: Extraction) -> PRF:
    """Bag-of-tokens P/R/F1 per field (multiset overlap), macro-averaged."""
    fields = [
        field_prf(normalize_tokens(pred.cause), normalize_tokens(gold.cause)),
        field_prf(normalize_tokens(pred.effect), normalize_tokens(gold.effect)),
    ]
    n = len(fields)
    return PRF(
        sum(x.precision for x in fields) / n,
        sum(x.recall for x in fields) / n,
        sum(x.f1 for x in fields) / n,
    )


def exact_match(pred: Extraction, gold: Extraction) -> bool:
    """Equality of cause, effect and relation after trim/collapse/lowercase."""
    return (
        collapse_ws(pred.cause).lower() == collapse_ws(gold.cause).lower()
        and collapse_ws(pred.effect).lower() == collapse_ws(gold.effect).lower()
        and Relation(pred.relation) == Relation(gold.relation)
    )


def _lcs_length(a: Sequence, b: Sequence) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(pred_field: str, gold_field: str) -> float:
    """LCS-based F1 over normalized tokens of one field."""
    pred = normalize_tokens(pred_field)
    gold = normalize_tokens(gold_field)
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    lcs = _lcs_length(pred, gold)
    return _f1(lcs / len(pred), lcs / len(gold))


def extraction_rouge_l(pred: Extraction, gold: Extraction) -> float:
    """Macro-average of the per-field ROUGE-L scores."""
    return (rouge_l(pred.cause, gold.cause) + rouge_l(pred.effect, gold.effect)) / 2


def trigram_cosine(a: str, b: str) -> float:
    """Cosine similarity of character-trigram count vectors of normalized text."""
    na = collapse_ws(a).lower()
    nb = collapse_ws(b).lower()
    if not na and not nb:
        return 1.0
    ca = Counter(na[i : i + 3] for i in range(max(1, len(na) - 2)))
    cb = Counter(nb[i : i + 3] for i in range(max(1, len(nb) - 2)))
    dot = sum(ca[g] * cb[g] for g in ca.keys() & cb.keys())
    norm = math.sqrt(sum(v * v for v in ca.values())) * math.sqrt(
        sum(v * v for v in cb.values())
    )
    return dot / norm if norm > 0 else 0.0


def _check_aligned(a: Sequence, b: Sequence) -> None:
    if len(a) != len(b):
        raise ValueError(f"series length mismatch: {len(a)} vs {len(b)}")
    if not a:
        raise ValueError("empty verdict series")


def percent_agreement(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    """Fraction of aligned positions with equal verdicts."""
    _check_aligned(a, b)
    return sum(x == y for x, y in zip(a, b)) / len(a)


class KappaResult(NamedTuple):
    value: float
    degenerate: bool  # both raters constant and identical (expected agreement 1)


def cohens_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> KappaResult:
    """Cohen's kappa with chance agreement from the marginal frequencies."""
    _check_aligned(a, b)
    n = len(a)
    p_o = sum(x == y for x, y in zip(a, b)) / n
    ca, cb = Counter(a), Counter(b)
    p_e = sum(ca[k] * cb.get(k, 0) for k in ca) / (n * n)
    if math.isclose(p_e, 1.0):
        return KappaResult(1.0, True)
    return KappaResult((p_o - p_e) / (1 - p_e), False)


def pearson(scores: Sequence[float], labels: Sequence[float]) -> float:
    """Product-moment correlation; NaN when either series is constant."""
    _check_aligned(scores, labels)
    n = len(scores)
    mx = sum(scores) / n
    my = sum(labels) / n
    sxx = sum((x - mx) ** 2 for x in scores)
    syy = sum((y - my) ** 2 for y in labels)
    if sxx == 0 or syy == 0:
        return math.nan
    sxy = sum((x - mx) * (y - my) for x, y in zip(scores, labels))
    return sxy / math.sqrt(sxx * syy)


def without_em_rate(records: Sequence[tuple[bool, bool]]) -> float:
    """Fraction of records judged valid but not exact-matched ("w/o EM").

    ``records`` holds (verdict_is_valid, is_exact_match) pairs. Empty input
    yields 0.0 (logged).
    """
    if not records:
        log.warning("without_em_rate: empty input, reporting 0.0")
        return 0.0
    return sum(1 for valid, em in records if valid and not em) / len(records)
