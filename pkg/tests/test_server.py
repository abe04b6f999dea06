import json
import threading
import urllib.request

import numpy as np
import pytest

from labelqc.data import make_blobs, save_dataset_csv
from labelqc.detectors import DetectorConfig
from labelqc.errors import SessionError
from labelqc.models import ClassifierSpec
from labelqc.noise import NoiseSpec, corrupt_dataset
from labelqc.server import ReviewSession, make_server, start_session


@pytest.fixture(scope="module")
def noisy_csv(tmp_path_factory):
    ds = make_blobs(300, 2, 3, 8.0, 42)
    noisy, record = corrupt_dataset(ds, NoiseSpec(kind="uniform", rate=0.1, seed=7))
    path = tmp_path_factory.mktemp("serve") / "noisy.csv"
    save_dataset_csv(noisy, path)
    truth = {int(i): int(t) for i, t in zip(noisy.ids, noisy.true_labels)}
    return path, noisy, record, truth


def fresh_session(noisy_csv, **overrides):
    path = noisy_csv[0]
    config = {"dataset": {"path": str(path)}, "seed": 42}
    config.update(overrides)
    return start_session(config)


class TestSessionLifecycle:
    def test_queue_sorted_by_margin(self, noisy_csv):
        sess = fresh_session(noisy_csv)
        items = sess.queue_page(1000)["items"]
        margins = [it["margin"] for it in items]
        assert margins == sorted(margins)
        assert len(items) > 0

    def test_same_config_same_queue(self, noisy_csv):
        a = fresh_session(noisy_csv).queue_page(50)["items"]
        b = fresh_session(noisy_csv).queue_page(50)["items"]
        assert [it["id"] for it in a] == [it["id"] for it in b]

    def test_clean_separable_data_empty_queue(self):
        ds = make_blobs(200, 2, 2, 12.0, 3)
        sess = ReviewSession(
            dataset=ds,
            classifier=ClassifierSpec(),
            detector=DetectorConfig(method="cincer"),
        )
        assert sess.queue_page(10)["total_remaining"] == 0

    def test_queue_items_violate_inspector(self, noisy_csv):
        sess = fresh_session(noisy_csv)
        for it in sess.queue_page(1000)["items"]:
            assert it["margin"] < sess.detector.threshold or it["predicted_label"] != it["observed_label"]


class TestQueuePaging:
    def test_page_limit(self, noisy_csv):
        sess = fresh_session(noisy_csv)
        total = sess.queue_page(10_000)["total_remaining"]
        page = sess.queue_page(5)
        assert len(page["items"]) == min(5, total)

    def test_zero_limit(self, noisy_csv):
        assert fresh_session(noisy_csv).queue_page(0)["items"] == []

    def test_head_absent_after_decision(self, noisy_csv):
        sess = fresh_session(noisy_csv)
        head = sess.queue_page(1)["items"][0]
        sess.submit({"id": head["id"], "action": "keep"})
        remaining_ids = [it["id"] for it in sess.queue_page(1000)["items"]]
        assert head["id"] not in remaining_ids


class TestDecisions:
    def test_keep_updates_counts(self, noisy_csv):
        sess = fresh_session(noisy_csv)
        head = sess.queue_page(1)["items"][0]
        stats = sess.submit({"id": head["id"], "action": "keep"})
        assert stats["reviewed"] == 1 and stats["keeps"] == 1 and stats["relabels"] == 0
        assert stats["precision"] == 0.0

    def test_relabel_updates_precision(self, noisy_csv):
        sess = fresh_session(noisy_csv)
        head = sess.queue_page(1)["items"][0]
        new_label = (head["observed_label"] + 1) % 3
        stats = sess.submit({"id": head["id"], "action": "relabel", "new_label": new_label})
        assert stats["relabels"] == 1
        assert stats["precision"] == 1.0

    def test_duplicate_submission_idempotent(self, noisy_csv):
        sess = fresh_session(noisy_csv)
        head = sess.queue_page(1)["items"][0]
        first = sess.submit({"id": head["id"], "action": "keep"})
        second = sess.submit({"id": head["id"], "action": "keep"})
        assert second["duplicate"] is True
        assert second["reviewed"] == first["reviewed"] == 1

    def test_unknown_id_rejected(self, noisy_csv):
        sess = fresh_session(noisy_csv)
        with pytest.raises(SessionError, match="not in the queue"):
            sess.submit({"id": 10_000, "action": "keep"})

    def test_invalid_new_label_rejected(self, noisy_csv):
        sess = fresh_session(noisy_csv)
        head = sess.queue_page(1)["items"][0]
        with pytest.raises(SessionError):
            sess.submit({"id": head["id"], "action": "relabel", "new_label": head["observed_label"]})
        with pytest.raises(SessionError):
            sess.submit({"id": head["id"], "action": "relabel", "new_label": 99})

    def test_reviewed_equals_keeps_plus_relabels(self, noisy_csv):
        sess = fresh_session(noisy_csv)
        for it in sess.queue_page(6)["items"]:
            if it["id"] % 2:
                sess.submit({"id": it["id"], "action": "keep"})
            else:
                new_label = (it["observed_label"] + 1) % 3
                sess.submit({"id": it["id"], "action": "relabel", "new_label": new_label})
        stats = sess.metrics()
        assert stats["reviewed"] == stats["keeps"] + stats["relabels"]

    def test_decisions_logged_jsonl(self, noisy_csv, tmp_path):
        log = tmp_path / "decisions.jsonl"
        sess = fresh_session(noisy_csv, decisions_log=str(log))
        head = sess.queue_page(1)["items"][0]
        sess.submit({"id": head["id"], "action": "keep"})
        entries = [json.loads(line) for line in log.read_text().splitlines()]
        assert entries[0]["id"] == head["id"] and entries[0]["action"] == "keep"


class TestMetricsAndRetrain:
    def test_precision_absent_before_decisions(self, noisy_csv):
        assert fresh_session(noisy_csv).metrics()["precision"] is None

    def test_revision_strictly_increases(self, noisy_csv):
        sess = fresh_session(noisy_csv)
        r0 = sess.metrics()["revision"]
        head = sess.queue_page(1)["items"][0]
        r1 = sess.submit({"id": head["id"], "action": "keep"})["revision"]
        r2 = sess.retrain()["revision"]
        assert r0 < r1 < r2

    def test_busy_error_while_retraining(self, noisy_csv):
        sess = fresh_session(noisy_csv)
        assert sess._retrain_lock.acquire(blocking=False)
        try:
            with pytest.raises(SessionError, match="in progress"):
                sess.retrain()
        finally:
            sess._retrain_lock.release()

    def test_full_review_then_retrain_clears_corrupted(self, noisy_csv):
        _, noisy, record, truth = noisy_csv
        sess = fresh_session(noisy_csv)
        while True:
            items = sess.queue_page(50)["items"]
            if not items:
                break
            for it in items:
                want = truth[it["id"]]
                if want != it["observed_label"]:
                    sess.submit({"id": it["id"], "action": "relabel", "new_label": want})
                else:
                    sess.submit({"id": it["id"], "action": "keep"})
        sess.retrain()
        final = sess.queue_page(10_000)["items"]
        assert sum(1 for it in final if truth[it["id"]] != it["observed_label"]) == 0


class TestConcurrency:
    def test_interleaved_submissions_linearizable(self, noisy_csv):
        sess = fresh_session(noisy_csv)
        items = sess.queue_page(8)["items"]
        errors = []

        def worker(item):
            try:
                sess.submit({"id": item["id"], "action": "keep"})
            except SessionError as exc:
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(it,)) for it in items]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        stats = sess.metrics()
        assert stats["reviewed"] == len(items)
        assert stats["reviewed"] == stats["keeps"] + stats["relabels"]


def http_json(url, payload=None):
    if payload is None:
        with urllib.request.urlopen(url) as resp:
            return resp.status, json.loads(resp.read())
    req = urllib.request.Request(
        url,
        data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


class TestHttpApi:
    @pytest.fixture()
    def server(self, noisy_csv):
        session = fresh_session(noisy_csv)
        httpd = make_server(session, port=0)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        base = f"http://127.0.0.1:{httpd.server_address[1]}"
        yield base, session
        httpd.shutdown()

    def test_endpoints(self, server):
        base, _ = server
        status, info = http_json(f"{base}/api/session")
        assert status == 200 and info["dataset"]["num_classes"] == 3
        status, page = http_json(f"{base}/api/queue?limit=3")
        assert status == 200 and len(page["items"]) <= 3
        head = page["items"][0]
        status, stats = http_json(f"{base}/api/decision", {"id": head["id"], "action": "keep"})
        assert status == 200 and stats["reviewed"] == 1
        status, body = http_json(f"{base}/api/decision", {"id": 123456, "action": "keep"})
        assert status == 404
        status, metrics = http_json(f"{base}/api/metrics")
        assert status == 200 and metrics["reviewed"] == 1
        status, out = http_json(f"{base}/api/retrain", {})
        assert status == 200 and out["revision"] > stats["revision"]

    def test_scripted_expert_over_http(self, server, noisy_csv):
        base, _ = server
        truth = noisy_csv[3]
        while True:
            _, page = http_json(f"{base}/api/queue?limit=50")
            if not page["items"]:
                break
            for it in page["items"]:
                want = truth[it["id"]]
                if want != it["observed_label"]:
                    http_json(
                        f"{base}/api/decision",
                        {"id": it["id"], "action": "relabel", "new_label": want},
                    )
                else:
                    http_json(f"{base}/api/decision", {"id": it["id"], "action": "keep"})
        http_json(f"{base}/api/retrain", {})
        _, final = http_json(f"{base}/api/queue?limit=10000")
        assert all(truth[it["id"]] == it["observed_label"] for it in final["items"])
