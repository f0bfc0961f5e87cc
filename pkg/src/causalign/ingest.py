"""Converters from the three source dataset layouts to the interchange format.

Source layouts:
  fcr       — JSON (array or one object per line); each record carries the
              passage text plus [start, end) character offsets for the cause
              and effect spans and a relation label.
  fincausal — semicolon-separated CSV with quoted fields and columns
              Index; Text; Cause; Effect. Relation is hard-coded to `cause`.
  scite     — XML: <scite><item id=..><sentence>mixed text with
              <cause rel="N">..</cause> and <effect rel="N">..</effect>
              elements</sentence></item></scite>. Items may carry several
              relation groups; only the first (lowest N with both spans) is
              kept. Relation is hard-coded to `cause`.

Cause/effect of every emitted instance must occur in the context after
whitespace normalization: violations are errors for FCR (spans come from
offsets, so a violation means corrupt input) and warnings for FinCausal and
SCITE unless ``strict`` is set.
"""

from __future__ import annotations

import csv
import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .metrics import normalize_tokens
from .records import CausalInstance
from .tagged import Extraction, Relation, collapse_ws

log = logging.getLogger(__name__)


class IngestError(ValueError):
    """Conversion failure, carrying the offending record id."""

    def __init__(self, record_id: str, message: str):
        super().__init__(f"record {record_id!r}: {message}")
        self.record_id = record_id


def spans_in_context(context: str, cause: str, effect: str) -> bool:
    ctx = collapse_ws(context)
    return collapse_ws(cause) in ctx and collapse_ws(effect) in ctx


def _check_substring(
    inst: CausalInstance, dataset: str, strict: bool, hard_error: bool
) -> None:
    if spans_in_context(inst.context, inst.gold.cause, inst.gold.effect):
        return
    msg = f"{dataset} record {inst.id!r}: cause/effect not substrings of context"
    if hard_error or strict:
        raise IngestError(inst.id, "cause/effect not substrings of context")
    log.warning("%s (kept)", msg)


def _load_fcr_records(path: str | Path) -> list[dict]:
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if not stripped:
        return []
    if stripped.startswith("["):
        data = json.loads(text)
        if not isinstance(data, list):
            raise IngestError("<file>", "top-level JSON must be an array of records")
        return data
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise IngestError(f"line {lineno}", f"bad JSON: {exc}") from None
    return records


def _slice_span(text: str, span, record_id: str, name: str, byte_offsets: bool) -> str:
    if (
        not isinstance(span, (list, tuple))
        or len(span) != 2
        or not all(isinstance(v, int) for v in span)
    ):
        raise IngestError(record_id, f"{name} span must be a [start, end) index pair")
    start, end = span
    if byte_offsets:
        raw = text.encode("utf-8")
        limit = len(raw)
    else:
        raw = text
        limit = len(text)
    if start < 0 or end > limit or start >= end:
        raise IngestError(
            record_id, f"{name} span [{start}, {end}) out of range for length {limit}"
        )
    piece = raw[start:end]
    if byte_offsets:
        piece = piece.decode("utf-8", errors="strict")
    if not piece.strip():
        raise IngestError(record_id, f"{name} span slice is empty")
    return piece


def convert_fcr(
    path: str | Path, split: str = "train", byte_offsets: bool = False
) -> list[CausalInstance]:
    """Materialize FCR spans by slicing the context at the recorded offsets.

    Offsets are Unicode scalar-value positions by default; ``byte_offsets``
    switches to UTF-8 byte positions for debugging offset mismatches.
    """
    instances = []
    for idx, rec in enumerate(_load_fcr_records(path)):
        record_id = str(rec.get("id", f"fcr-{idx}"))
        if not isinstance(rec, dict) or "text" not in rec:
            raise IngestError(record_id, "malformed record: missing 'text'")
        text = rec["text"]
        for key in ("cause", "effect"):
            if key not in rec:
                raise IngestError(record_id, f"malformed record: missing {key!r} span")
        cause = _slice_span(text, rec["cause"], record_id, "cause", byte_offsets)
        effect = _slice_span(text, rec["effect"], record_id, "effect", byte_offsets)
        try:
            relation = Relation(str(rec.get("relation", "cause")).lower())
        except ValueError:
            raise IngestError(
                record_id, f"unknown relation {rec.get('relation')!r}"
            ) from None
        inst = CausalInstance(
            id=record_id,
            context=text,
            gold=Extraction(cause=cause, effect=effect, relation=relation),
            split=split,
        )
        _check_substring(inst, "fcr", strict=False, hard_error=True)
        instances.append(inst)
    return instances


def convert_fincausal(
    path: str | Path, split: str = "train", strict: bool = False
) -> list[CausalInstance]:
    """Read the semicolon-delimited layout; cause/effect are taken verbatim."""
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter=";", quotechar='"')
        try:
            header = next(reader)
        except StopIteration:
            return []
        columns = {name.strip().lower(): i for i, name in enumerate(header)}
        for required in ("text", "cause", "effect"):
            if required not in columns:
                raise IngestError(
                    "<header>", f"missing column {required!r} (got {header!r})"
                )
        instances = []
        for row_num, row in enumerate(reader, start=2):
            if not any(cell.strip() for cell in row):
                continue
            if len(row) < len(columns):
                raise IngestError(f"row {row_num}", f"expected {len(columns)} fields, got {len(row)}")
            record_id = (
                row[columns["index"]].strip()
                if "index" in columns
                else f"fincausal-{row_num - 2}"
            )
            text = row[columns["text"]]
            cause = row[columns["cause"]]
            effect = row[columns["effect"]]
            if not collapse_ws(cause):
                raise IngestError(record_id, "empty cause field")
            if not collapse_ws(effect):
                raise IngestError(record_id, "empty effect field")
            inst = CausalInstance(
                id=record_id,
                context=text,
                gold=Extraction(cause=cause, effect=effect, relation=Relation.CAUSE),
                split=split,
            )
            _check_substring(inst, "fincausal", strict=strict, hard_error=False)
            instances.append(inst)
    return instances


def _flatten_sentence(sentence: ET.Element, record_id: str):
    """Walk mixed content; return (plain text, {rel: {tag: span text}})."""
    parts = [sentence.text or ""]
    groups: dict[int, dict[str, str]] = {}
    for child in sentence:
        if child.tag not in ("cause", "effect"):
            raise IngestError(record_id, f"unexpected element <{child.tag}> in sentence")
        if len(child) > 0:
            raise IngestError(record_id, f"nested markup inside <{child.tag}>")
        span_text = child.text or ""
        try:
            rel = int(child.get("rel", "1"))
        except ValueError:
            raise IngestError(record_id, f"bad rel attribute {child.get('rel')!r}") from None
        slot = groups.setdefault(rel, {})
        if child.tag in slot:
            raise IngestError(record_id, f"duplicate <{child.tag}> for relation {rel}")
        slot[child.tag] = span_text
        parts.append(span_text)
        parts.append(child.tail or "")
    return "".join(parts), groups


def convert_scite(path: str | Path, split: str = "train") -> list[CausalInstance]:
    """Parse the markup layout, keeping only the first causal relation per item."""
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise IngestError("<file>", f"malformed markup: {exc}") from None
    instances = []
    for idx, item in enumerate(root.iter("item")):
        record_id = str(item.get("id", f"scite-{idx}"))
        sentence = item.find("sentence")
        if sentence is None:
            raise IngestError(record_id, "item has no <sentence>")
        context, groups = _flatten_sentence(sentence, record_id)
        complete = sorted(
            rel for rel, slot in groups.items() if "cause" in slot and "effect" in slot
        )
        if not complete:
            log.warning("scite record %r has no complete causal relation; skipped", record_id)
            continue
        if len(complete) > 1:
            log.info(
                "scite record %r has %d relations; keeping the first",
                record_id,
                len(complete),
            )
        slot = groups[complete[0]]
        if not collapse_ws(slot["cause"]) or not collapse_ws(slot["effect"]):
            log.warning("scite record %r has an empty span; skipped", record_id)
            continue
        inst = CausalInstance(
            id=record_id,
            context=context,
            gold=Extraction(
                cause=slot["cause"], effect=slot["effect"], relation=Relation.CAUSE
            ),
            split=split,
        )
        _check_substring(inst, "scite", strict=False, hard_error=False)
        instances.append(inst)
    return instances


CONVERTERS = {
    "fcr": convert_fcr,
    "fincausal": convert_fincausal,
    "scite": convert_scite,
}


@dataclass
class StatsReport:
    counts: dict[str, int] = field(default_factory=dict)  # split -> instance count
    mean_context_words: float = 0.0
    mean_cause_words: float = 0.0
    mean_effect_words: float = 0.0
    empty: bool = False

    def to_dict(self) -> dict:
        return {
            "counts": dict(sorted(self.counts.items())),
            "total": sum(self.counts.values()),
            "mean_context_words": self.mean_context_words,
            "mean_cause_words": self.mean_cause_words,
            "mean_effect_words": self.mean_effect_words,
            "empty": self.empty,
        }


def dataset_stats(instances: Iterable[CausalInstance]) -> StatsReport:
    """Per-split counts plus mean word counts (tokenized like the metrics)."""
    report = StatsReport()
    total = 0
    sum_ctx = sum_cause = sum_effect = 0
    for inst in instances:
        report.counts[inst.split] = report.counts.get(inst.split, 0) + 1
        total += 1
        sum_ctx += len(normalize_tokens(inst.context))
        sum_cause += len(normalize_tokens(inst.gold.cause))
        sum_effect += len(normalize_tokens(inst.gold.effect))
    if total == 0:
        report.empty = True
        return report
    report.mean_context_words = sum_ctx / total
    report.mean_cause_words = sum_cause / total
    report.mean_effect_words = sum_effect / total
    return report
