"""Shared record types and line-delimited file I/O.

Interchange formats:
  instances  — one JSON object per line: {id, context, cause, effect, relation, split}
  labeled    — one JSON object per line: {id, source, reference, output, verdict[, annotator]}
  verdicts   — one JSON object per line: {id, verdict}
All files are UTF-8. Writers are atomic (write temp, then rename).
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .tagged import Extraction, Relation

VALID = "valid"
INVALID = "invalid"
SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class CausalInstance:
    """A source passage with its gold extraction."""

    id: str
    context: str
    gold: Extraction
    split: str = "train"

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "context": self.context,
            "cause": self.gold.cause,
            "effect": self.gold.effect,
            "relation": Relation(self.gold.relation).value,
            "split": self.split,
        }

    @classmethod
    def from_record(cls, d: dict) -> "CausalInstance":
        split = d.get("split", "train")
        if split not in SPLITS:
            raise ValueError(f"instance {d.get('id')!r}: bad split {split!r}")
        return cls(
            id=str(d["id"]),
            context=d["context"],
            gold=Extraction(
                cause=d["cause"], effect=d["effect"], relation=Relation(d["relation"])
            ),
            split=split,
        )


@dataclass(frozen=True)
class EvaluationInput:
    """What the evaluator sees: source passage, gold reference, model output."""

    source: str
    reference: Extraction
    output: Extraction


@dataclass(frozen=True)
class LabeledEvaluation:
    """An EvaluationInput with a human (or oracle) validity verdict."""

    input: EvaluationInput
    verdict: bool  # True == valid
    id: str = ""
    annotator: str = ""

    def to_record(self) -> dict:
        rec = {
            "id": self.id,
            "source": self.input.source,
            "reference": self.input.reference.to_dict(),
            "output": self.input.output.to_dict(),
            "verdict": VALID if self.verdict else INVALID,
        }
        if self.annotator:
            rec["annotator"] = self.annotator
        return rec

    @classmethod
    def from_record(cls, d: dict) -> "LabeledEvaluation":
        verdict = d["verdict"]
        if verdict not in (VALID, INVALID):
            raise ValueError(f"record {d.get('id')!r}: bad verdict {verdict!r}")
        return cls(
            input=EvaluationInput(
                source=d["source"],
                reference=Extraction.from_dict(d["reference"]),
                output=Extraction.from_dict(d["output"]),
            ),
            verdict=verdict == VALID,
            id=str(d.get("id", "")),
            annotator=str(d.get("annotator", "")),
        )


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    atomic_write_text(path, "".join(dump_json_line(r) + "\n" for r in records))


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: bad JSON line: {exc}") from None


def write_instances(path: str | Path, instances: Iterable[CausalInstance]) -> None:
    write_jsonl(path, (x.to_record() for x in instances))


def read_instances(path: str | Path) -> list[CausalInstance]:
    return [CausalInstance.from_record(d) for d in read_jsonl(path)]


def write_labeled(path: str | Path, labeled: Iterable[LabeledEvaluation]) -> None:
    write_jsonl(path, (x.to_record() for x in labeled))


def read_labeled(path: str | Path) -> list[LabeledEvaluation]:
    """Read labeled evaluations; lines holding only a summary block are skipped."""
    out = []
    for d in read_jsonl(path):
        if "summary" in d and "verdict" not in d:
            continue
        out.append(LabeledEvaluation.from_record(d))
    return out


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Manifest:
    """Reproducibility record written next to every command's outputs."""

    command: str
    seed: int | None = None
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)  # path -> sha256
    outputs: list = field(default_factory=list)
    code_version: str = ""

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def write(self, path: str | Path) -> None:
        from . import __version__

        self.code_version = self.code_version or __version__
        atomic_write_text(
            path,
            json.dumps(
                {
                    "command": self.command,
                    "seed": self.seed,
                    "config": self.config,
                    "inputs": self.inputs,
                    "outputs": self.outputs,
                    "code_version": self.code_version,
                },
                indent=2,
                sort_keys=True,
                ensure_ascii=False,
            )
            + "\n",
        )
