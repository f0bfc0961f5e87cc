import json
import os
import signal
import subprocess
import sys
import time

import httpx
import pytest
from fastapi.testclient import TestClient

from causalign.records import read_labeled
from causalign.service import AnnotationStore, ServiceError, create_app


def make_item(i, out_cause="a b", exact=False):
    reference = {"cause": "a b", "effect": "c d", "relation": "cause"}
    output = (
        dict(reference)
        if exact
        else {"cause": out_cause, "effect": "c d", "relation": "cause"}
    )
    return {
        "item_id": f"item-{i}",
        "source": "a b x c d",
        "reference": reference,
        "output": output,
    }


def fixture_items(n=6, exact_from=None):
    items = []
    for i in range(n):
        exact = exact_from is not None and i >= exact_from
        items.append(make_item(i, out_cause=f"a b{i}", exact=exact))
    return items


class TestStore:
    def test_create_and_next(self, tmp_path):
        store = AnnotationStore(tmp_path)
        sid = store.create_session(fixture_items(3), {"filter_exact_match": False})
        first = store.next_item(sid, "alice")
        assert first["item_id"] == "item-0"

    def test_exact_match_filtering(self, tmp_path):
        store = AnnotationStore(tmp_path)
        sid = store.create_session(fixture_items(10, exact_from=6))
        _, total = store.progress(sid, "a")
        assert total == 6

    def test_filter_disabled_keeps_all(self, tmp_path):
        store = AnnotationStore(tmp_path)
        sid = store.create_session(
            fixture_items(10, exact_from=6), {"filter_exact_match": False}
        )
        _, total = store.progress(sid, "a")
        assert total == 10

    def test_all_filtered_is_error(self, tmp_path):
        store = AnnotationStore(tmp_path)
        with pytest.raises(ServiceError, match="exact matches"):
            store.create_session(fixture_items(3, exact_from=0))

    def test_duplicate_ids_rejected(self, tmp_path):
        store = AnnotationStore(tmp_path)
        items = [make_item(1), make_item(1)]
        with pytest.raises(ServiceError, match="duplicate"):
            store.create_session(items)

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ServiceError, match="empty"):
            AnnotationStore(tmp_path).create_session([])

    def test_next_walks_in_order_and_finishes(self, tmp_path):
        store = AnnotationStore(tmp_path)
        sid = store.create_session(fixture_items(3), {"filter_exact_match": False})
        seen = []
        while (item := store.next_item(sid, "bob")) is not None:
            seen.append(item["item_id"])
            store.submit_verdict(sid, item["item_id"], "bob", "valid")
        assert seen == ["item-0", "item-1", "item-2"]
        assert store.next_item(sid, "bob") is None

    def test_two_annotators_have_independent_cursors(self, tmp_path):
        store = AnnotationStore(tmp_path)
        sid = store.create_session(fixture_items(3), {"filter_exact_match": False})
        store.submit_verdict(sid, "item-0", "alice", "valid")
        store.submit_verdict(sid, "item-0", "bob", "valid")
        store.submit_verdict(sid, "item-1", "alice", "invalid")
        assert store.next_item(sid, "alice")["item_id"] == "item-2"
        assert store.next_item(sid, "bob")["item_id"] == "item-1"

    def test_bad_verdict_rejected(self, tmp_path):
        store = AnnotationStore(tmp_path)
        sid = store.create_session(fixture_items(2), {"filter_exact_match": False})
        with pytest.raises(ServiceError, match="verdict"):
            store.submit_verdict(sid, "item-0", "a", "maybe")

    def test_unknown_item_rejected(self, tmp_path):
        store = AnnotationStore(tmp_path)
        sid = store.create_session(fixture_items(2), {"filter_exact_match": False})
        with pytest.raises(KeyError):
            store.submit_verdict(sid, "nope", "a", "valid")

    def test_duplicate_submission_single_effective_record(self, tmp_path):
        store = AnnotationStore(tmp_path)
        sid = store.create_session(fixture_items(2), {"filter_exact_match": False})
        store.submit_verdict(sid, "item-0", "a", "valid")
        store.submit_verdict(sid, "item-0", "a", "valid")
        records, _ = store.export(sid)
        assert len([r for r in records if r["id"] == "item-0"]) == 1
        # and only one event was written
        events = (tmp_path / sid / "events.log").read_text().strip().splitlines()
        assert len(events) == 1

    def test_correction_latest_wins_history_retained(self, tmp_path):
        store = AnnotationStore(tmp_path)
        sid = store.create_session(fixture_items(2), {"filter_exact_match": False})
        store.submit_verdict(sid, "item-0", "a", "valid")
        store.submit_verdict(sid, "item-0", "a", "invalid")
        records, _ = store.export(sid)
        (rec,) = [r for r in records if r["id"] == "item-0"]
        assert rec["verdict"] == "invalid"
        events = (tmp_path / sid / "events.log").read_text().strip().splitlines()
        assert len(events) == 2

    def test_state_rebuilt_from_disk(self, tmp_path):
        store = AnnotationStore(tmp_path)
        sid = store.create_session(fixture_items(3), {"filter_exact_match": False})
        store.submit_verdict(sid, "item-0", "a", "valid")
        store.submit_verdict(sid, "item-1", "a", "invalid")
        fresh = AnnotationStore(tmp_path)
        assert fresh.next_item(sid, "a")["item_id"] == "item-2"
        records, _ = fresh.export(sid)
        assert len(records) == 2

    def test_torn_tail_line_skipped_on_replay(self, tmp_path):
        store = AnnotationStore(tmp_path)
        sid = store.create_session(fixture_items(2), {"filter_exact_match": False})
        store.submit_verdict(sid, "item-0", "a", "valid")
        with open(tmp_path / sid / "events.log", "a") as f:
            f.write('{"item_id": "item-1", "annot')  # crash mid-write
        fresh = AnnotationStore(tmp_path)
        records, _ = fresh.export(sid)
        assert len(records) == 1

    def test_export_two_annotator_kappa(self, tmp_path):
        # contingency [[2,1],[1,2]] over six items -> kappa = 1/3
        store = AnnotationStore(tmp_path)
        sid = store.create_session(fixture_items(6), {"filter_exact_match": False})
        a_verdicts = ["valid", "valid", "valid", "invalid", "invalid", "invalid"]
        b_verdicts = ["valid", "valid", "invalid", "valid", "invalid", "invalid"]
        for i, (va, vb) in enumerate(zip(a_verdicts, b_verdicts)):
            store.submit_verdict(sid, f"item-{i}", "ann-a", va)
            store.submit_verdict(sid, f"item-{i}", "ann-b", vb)
        records, summary = store.export(sid)
        assert len(records) == 12
        (pair,) = summary["pairwise"]
        assert pair["overlap"] == 6
        assert pair["agreement"] == pytest.approx(4 / 6)
        assert pair["kappa"] == pytest.approx(1 / 3, abs=1e-9)

    def test_single_annotator_no_pairwise(self, tmp_path):
        store = AnnotationStore(tmp_path)
        sid = store.create_session(fixture_items(3), {"filter_exact_match": False})
        for i in range(3):
            store.submit_verdict(sid, f"item-{i}", "solo", "valid")
        records, summary = store.export(sid)
        assert len(records) == 3
        assert summary["pairwise"] == []

    def test_export_parses_as_labeled_evaluations(self, tmp_path):
        store = AnnotationStore(tmp_path)
        sid = store.create_session(fixture_items(3), {"filter_exact_match": False})
        for i in range(3):
            store.submit_verdict(sid, f"item-{i}", "solo", "valid" if i % 2 else "invalid")
        out = tmp_path / "export.jsonl"
        out.write_text(store.export_text(sid))
        labeled = read_labeled(out)
        assert len(labeled) == 3
        assert labeled[0].input.source == "a b x c d"


class TestHTTP:
    @pytest.fixture()
    def client(self, tmp_path):
        return TestClient(create_app(tmp_path))

    def test_full_flow(self, client):
        resp = client.post(
            "/sessions",
            json={"items": fixture_items(3), "options": {"filter_exact_match": False}},
        )
        assert resp.status_code == 200
        sid = resp.json()["session_id"]

        resp = client.get(f"/sessions/{sid}/next", params={"annotator": "u1"})
        item = resp.json()["item"]
        assert item["item_id"] == "item-0"

        resp = client.post(
            f"/sessions/{sid}/verdicts",
            json={"item_id": "item-0", "annotator": "u1", "verdict": "valid"},
        )
        assert resp.json() == {"ok": True}

        resp = client.get(f"/sessions/{sid}/progress", params={"annotator": "u1"})
        assert resp.json() == {"answered": 1, "total": 3}

        for item_id in ("item-1", "item-2"):
            client.post(
                f"/sessions/{sid}/verdicts",
                json={"item_id": item_id, "annotator": "u1", "verdict": "invalid"},
            )
        resp = client.get(f"/sessions/{sid}/next", params={"annotator": "u1"})
        assert resp.json() == {"done": True}

        resp = client.get(f"/sessions/{sid}/export")
        lines = resp.text.strip().splitlines()
        assert len(lines) == 4  # 3 records + summary
        assert json.loads(lines[-1])["summary"]["records"] == 3

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/zzz/next", params={"annotator": "a"}).status_code == 404
        assert client.get("/sessions/zzz/progress", params={"annotator": "a"}).status_code == 404
        assert client.get("/sessions/zzz/export").status_code == 404

    def test_bad_verdict_400(self, client):
        sid = client.post(
            "/sessions",
            json={"items": fixture_items(2), "options": {"filter_exact_match": False}},
        ).json()["session_id"]
        resp = client.post(
            f"/sessions/{sid}/verdicts",
            json={"item_id": "item-0", "annotator": "a", "verdict": "maybe"},
        )
        assert resp.status_code == 400

    def test_empty_session_400(self, client):
        resp = client.post(
            "/sessions",
            json={"items": [make_item(0, exact=True)], "options": {}},
        )
        assert resp.status_code == 400

    def test_health(self, client):
        assert client.get("/health").json() == {"ok": True}


SERVER_CODE = "from causalign.service import serve; import sys; serve(sys.argv[1], int(sys.argv[2]))"


def _start_server(data_dir, port):
    proc = subprocess.Popen(
        [sys.executable, "-c", SERVER_CODE, str(data_dir), str(port)],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    base = f"http://127.0.0.1:{port}"
    deadline = time.time() + 30
    while time.time() < deadline:
        try:
            if httpx.get(f"{base}/health", timeout=1.0).status_code == 200:
                return proc, base
        except httpx.HTTPError:
            pass
        if proc.poll() is not None:
            raise RuntimeError("server exited early")
        time.sleep(0.1)
    proc.kill()
    raise RuntimeError("server did not come up")


@pytest.mark.slow
def test_kill_and_restart_preserves_acknowledged_verdict(tmp_path):
    port = 8731
    proc, base = _start_server(tmp_path, port)
    try:
        sid = httpx.post(
            f"{base}/sessions",
            json={"items": fixture_items(4), "options": {"filter_exact_match": False}},
            timeout=5.0,
        ).json()["session_id"]
        resp = httpx.post(
            f"{base}/sessions/{sid}/verdicts",
            json={"item_id": "item-0", "annotator": "alice", "verdict": "valid"},
            timeout=5.0,
        )
        assert resp.json() == {"ok": True}
    finally:
        os.kill(proc.pid, signal.SIGKILL)
        proc.wait()

    proc, base = _start_server(tmp_path, port + 1)
    try:
        text = httpx.get(f"{base}/sessions/{sid}/export", timeout=5.0).text
        lines = [json.loads(line) for line in text.strip().splitlines()]
        records = [r for r in lines if "verdict" in r]
        assert records == [
            {
                "annotator": "alice",
                "id": "item-0",
                "output": {"cause": "a b0", "effect": "c d", "relation": "cause"},
                "reference": {"cause": "a b", "effect": "c d", "relation": "cause"},
                "source": "a b x c d",
                "verdict": "valid",
            }
        ]
        resp = httpx.get(
            f"{base}/sessions/{sid}/next", params={"annotator": "alice"}, timeout=5.0
        )
        assert resp.json()["item"]["item_id"] == "item-1"
    finally:
        os.kill(proc.pid, signal.SIGKILL)
        proc.wait()
