"""Persistent, resumable annotation service.

Annotators render binary validity verdicts on (source, reference, output)
triples over HTTP. Every session lives in its own directory: a session.json
header (written atomically) plus an append-only events.log. A verdict is
acknowledged only after the event line is flushed and fsynced, and state is
rebuilt by replaying the log, so an acknowledged verdict survives kill -9.

Verdicts are immutable: a correction appends a superseding record and the
latest one wins on export, with the full history retained in the log.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from . import metrics
from .records import INVALID, VALID, atomic_write_text, dump_json_line
from .tagged import Extraction, Relation

log = logging.getLogger(__name__)


class ServiceError(ValueError):
    pass


@dataclass
class SessionState:
    session_id: str
    items: list[dict]  # ordered; each {item_id, source, reference, output}
    options: dict
    # (item_id, annotator) -> list of verdict records, append order
    verdicts: dict[tuple[str, str], list[dict]] = field(default_factory=dict)

    @property
    def item_ids(self) -> list[str]:
        return [item["item_id"] for item in self.items]

    def latest(self, item_id: str, annotator: str) -> str | None:
        history = self.verdicts.get((item_id, annotator))
        return history[-1]["verdict"] if history else None

    def annotators(self) -> list[str]:
        return sorted({annotator for _, annotator in self.verdicts})


def _parse_extraction_dict(d: dict, what: str) -> Extraction:
    try:
        return Extraction(
            cause=d["cause"], effect=d["effect"], relation=Relation(d["relation"])
        )
    except (KeyError, ValueError) as exc:
        raise ServiceError(f"bad {what}: {exc}") from None


class AnnotationStore:
    """Filesystem-backed session store; one writer lock per session."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, SessionState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    # -- paths ---------------------------------------------------------------

    def _session_dir(self, session_id: str) -> Path:
        return self.data_dir / session_id

    def _events_path(self, session_id: str) -> Path:
        return self._session_dir(session_id) / "events.log"

    # -- persistence ---------------------------------------------------------

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def _load(self, session_id: str) -> SessionState:
        if session_id in self._sessions:
            return self._sessions[session_id]
        header_path = self._session_dir(session_id) / "session.json"
        if not header_path.exists():
            raise KeyError(session_id)
        with open(header_path, encoding="utf-8") as f:
            header = json.load(f)
        state = SessionState(
            session_id=session_id, items=header["items"], options=header.get("options", {})
        )
        events_path = self._events_path(session_id)
        if events_path.exists():
            with open(events_path, encoding="utf-8") as f:
                for lineno, line in enumerate(f, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        event = json.loads(line)
                    except json.JSONDecodeError:
                        # torn tail from a crash mid-append; everything acked
                        # was fsynced as a complete line before this one
                        log.warning(
                            "%s:%d: skipping unparseable event line", events_path, lineno
                        )
                        continue
                    key = (event["item_id"], event["annotator"])
                    state.verdicts.setdefault(key, []).append(event)
        self._sessions[session_id] = state
        return state

    # -- operations ----------------------------------------------------------

    def create_session(self, items: list[dict], options: dict | None = None) -> str:
        options = {"filter_exact_match": True, **(options or {})}
        if not items:
            raise ServiceError("empty item list")
        seen = set()
        validated = []
        for item in items:
            item_id = str(item.get("item_id", ""))
            if not item_id:
                raise ServiceError("item without item_id")
            if item_id in seen:
                raise ServiceError(f"duplicate item id {item_id!r}")
            seen.add(item_id)
            reference = _parse_extraction_dict(item["reference"], f"reference of {item_id}")
            output = _parse_extraction_dict(item["output"], f"output of {item_id}")
            if options["filter_exact_match"] and metrics.exact_match(output, reference):
                continue
            validated.append(
                {
                    "item_id": item_id,
                    "source": str(item["source"]),
                    "reference": reference.to_dict(),
                    "output": output.to_dict(),
                }
            )
        if not validated:
            raise ServiceError("all items were exact matches; session would be empty")
        session_id = uuid.uuid4().hex[:12]
        header = {"session_id": session_id, "items": validated, "options": options}
        atomic_write_text(
            self._session_dir(session_id) / "session.json",
            json.dumps(header, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        )
        self._sessions[session_id] = SessionState(
            session_id=session_id, items=validated, options=options
        )
        return session_id

    def next_item(self, session_id: str, annotator: str) -> dict | None:
        state = self._load(session_id)
        for item in state.items:
            if state.latest(item["item_id"], annotator) is None:
                return item
        return None

    def submit_verdict(
        self, session_id: str, item_id: str, annotator: str, verdict: str
    ) -> None:
        if verdict not in (VALID, INVALID):
            raise ServiceError(f"verdict must be '{VALID}' or '{INVALID}', got {verdict!r}")
        if not annotator:
            raise ServiceError("annotator must be non-empty")
        with self._lock_for(session_id):
            state = self._load(session_id)
            if item_id not in state.item_ids:
                raise KeyError(item_id)
            if state.latest(item_id, annotator) == verdict:
                return  # idempotent on exact duplicates
            event = {
                "item_id": item_id,
                "annotator": annotator,
                "verdict": verdict,
                "ts": time.time(),
            }
            with open(self._events_path(session_id), "a", encoding="utf-8") as f:
                f.write(dump_json_line(event) + "\n")
                f.flush()
                os.fsync(f.fileno())
            state.verdicts.setdefault((item_id, annotator), []).append(event)

    def progress(self, session_id: str, annotator: str) -> tuple[int, int]:
        state = self._load(session_id)
        answered = sum(
            1 for item in state.items if state.latest(item["item_id"], annotator) is not None
        )
        return answered, len(state.items)

    def export(self, session_id: str) -> tuple[list[dict], dict]:
        """Labeled records (latest verdict per item/annotator) plus a summary."""
        state = self._load(session_id)
        records = []
        for item in state.items:
            for annotator in state.annotators():
                verdict = state.latest(item["item_id"], annotator)
                if verdict is None:
                    continue
                records.append(
                    {
                        "id": item["item_id"],
                        "source": item["source"],
                        "reference": item["reference"],
                        "output": item["output"],
                        "verdict": verdict,
                        "annotator": annotator,
                    }
                )
        summary: dict = {
            "session_id": session_id,
            "items": len(state.items),
            "annotators": state.annotators(),
            "records": len(records),
            "pairwise": [],
        }
        annotators = state.annotators()
        for i in range(len(annotators)):
            for j in range(i + 1, len(annotators)):
                a, b = annotators[i], annotators[j]
                series_a, series_b = [], []
                for item in state.items:
                    va = state.latest(item["item_id"], a)
                    vb = state.latest(item["item_id"], b)
                    if va is not None and vb is not None:
                        series_a.append(va)
                        series_b.append(vb)
                if not series_a:
                    continue
                kappa = metrics.cohens_kappa(series_a, series_b)
                summary["pairwise"].append(
                    {
                        "a": a,
                        "b": b,
                        "overlap": len(series_a),
                        "agreement": metrics.percent_agreement(series_a, series_b),
                        "kappa": kappa.value,
                        "kappa_degenerate": kappa.degenerate,
                    }
                )
        return records, summary

    def export_text(self, session_id: str) -> str:
        records, summary = self.export(session_id)
        lines = [dump_json_line(r) for r in records]
        lines.append(dump_json_line({"summary": summary}))
        return "\n".join(lines) + "\n"


# -- HTTP layer ----------------------------------------------------------------


class ExtractionBody(BaseModel):
    cause: str
    effect: str
    relation: str = "cause"


class ItemBody(BaseModel):
    item_id: str
    source: str
    reference: ExtractionBody
    output: ExtractionBody


class CreateSessionBody(BaseModel):
    items: list[ItemBody]
    options: dict = {}


class VerdictBody(BaseModel):
    item_id: str
    annotator: str
    verdict: str


def create_app(data_dir: str | Path) -> FastAPI:
    store = AnnotationStore(data_dir)
    app = FastAPI(title="causalign annotation service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.store = store

    @app.get("/health")
    def health():
        return {"ok": True}

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        try:
            session_id = store.create_session(
                [item.model_dump() for item in body.items], body.options
            )
        except ServiceError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"session_id": session_id}

    @app.get("/sessions/{session_id}/next")
    def next_item(session_id: str, annotator: str):
        try:
            item = store.next_item(session_id, annotator)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        if item is None:
            return {"done": True}
        return {"item": item}

    @app.post("/sessions/{session_id}/verdicts")
    def submit_verdict(session_id: str, body: VerdictBody):
        try:
            store.submit_verdict(session_id, body.item_id, body.annotator, body.verdict)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=f"unknown id {exc}")
        except ServiceError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"ok": True}

    @app.get("/sessions/{session_id}/progress")
    def progress(session_id: str, annotator: str):
        try:
            answered, total = store.progress(session_id, annotator)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return {"answered": answered, "total": total}

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str):
        try:
            text = store.export_text(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return PlainTextResponse(text, media_type="application/x-ndjson")

    return app


def serve(data_dir: str | Path, port: int, host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(create_app(data_dir), host=host, port=port, log_level="warning")
