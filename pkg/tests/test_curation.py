import json
import os
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest

from ultima.curation import (
    CurationError,
    DuplicateVerdictError,
    ReviewSession,
    ReviewStats,
    ReviewTask,
    TaskFullError,
    UnknownTaskError,
    build_server,
    compute_stats,
    replay_stats,
    tasks_from_manifest,
)
from ultima.dataset import Manifest, SampleRecord


def make_tasks(n):
    return [
        ReviewTask(f"rt-s{i:03d}", f"s{i:03d}", f"priors/s{i:03d}_rgb.png", f"images/s{i:03d}.png")
        for i in range(n)
    ]


class FakeClock:
    def __init__(self, t=1000.0):
        self.t = t

    def __call__(self):
        return self.t

    def advance(self, dt):
        self.t += dt


# ---------------------------------------------------------------------------
# stats math

def test_stats_worked_example():
    votes = {}
    for i in range(90):
        votes[f"u{i}"] = {"a": True, "b": True, "c": True}
    for i in range(5):
        votes[f"m{i}"] = {"a": True, "b": True, "c": False}
    for i in range(5):
        votes[f"f{i}"] = {"a": False, "b": False, "c": False}
    stats = compute_stats(votes, total_tasks=100)
    assert stats.completed_tasks == 100
    assert stats.success_rate == pytest.approx(0.95)
    assert stats.agreement_rate == pytest.approx(0.95)


def test_stats_all_unanimous_true():
    votes = {f"t{i}": {"a": True, "b": True, "c": True} for i in range(225)}
    stats = compute_stats(votes)
    assert stats.completed_tasks == 225
    assert stats.success_rate == 1.0
    assert stats.agreement_rate == 1.0


def test_stats_empty_is_undefined():
    stats = compute_stats({})
    assert stats == ReviewStats(0, None, None, 0, 0)


def test_stats_ignores_incomplete():
    votes = {
        "done": {"a": True, "b": False, "c": False},
        "half": {"a": True, "b": True},
    }
    stats = compute_stats(votes)
    assert stats.completed_tasks == 1
    assert stats.success_rate == 0.0
    assert stats.agreement_rate == 0.0
    assert stats.total_verdicts == 5


# ---------------------------------------------------------------------------
# assignment

def test_fresh_reviewer_gets_a_task():
    session = ReviewSession(make_tasks(5), clock=FakeClock())
    task = session.next_task("a")
    assert task is not None and task.task_id in {f"rt-s{i:03d}" for i in range(5)}


def test_empty_reviewer_rejected():
    session = ReviewSession(make_tasks(1))
    with pytest.raises(ValueError):
        session.next_task("")
    with pytest.raises(ValueError):
        session.submit_verdict("rt-s000", "", True)


def test_reviewer_never_sees_judged_task_again():
    session = ReviewSession(make_tasks(3), clock=FakeClock())
    seen = []
    for _ in range(3):
        task = session.next_task("a")
        seen.append(task.task_id)
        session.submit_verdict(task.task_id, "a", True)
    assert sorted(seen) == ["rt-s000", "rt-s001", "rt-s002"]
    assert session.next_task("a") is None


def test_repeat_request_reclaims_same_lease():
    session = ReviewSession(make_tasks(4), clock=FakeClock())
    first = session.next_task("a")
    again = session.next_task("a")
    assert first.task_id == again.task_id


def test_exclude_skips_past_a_task_without_judging():
    session = ReviewSession(make_tasks(3), clock=FakeClock())
    first = session.next_task("a")
    second = session.next_task("a", exclude=[first.task_id])
    assert second.task_id != first.task_id
    # skips are per-request only: without the list the task comes back
    assert session.next_task("a").task_id == first.task_id


def test_exclude_surrenders_the_lease():
    session = ReviewSession(make_tasks(1), clock=FakeClock())
    for r in ("a", "b", "c"):
        assert session.next_task(r) is not None
    assert session.next_task("d") is None  # three live leases
    assert session.next_task("c", exclude=["rt-s000"]) is None
    assert session.next_task("d") is not None  # c's slot freed by the skip


def test_reviewers_get_shuffled_orders():
    session = ReviewSession(make_tasks(10), seed=1)
    orders = {r: session._order_for(r) for r in ("a", "b", "c")}
    assert sorted(orders["a"]) == sorted(orders["b"])
    assert orders["a"] != orders["b"] or orders["b"] != orders["c"]
    # deterministic across sessions with the same seed
    session2 = ReviewSession(make_tasks(10), seed=1)
    assert session2._order_for("a") == orders["a"]


def test_three_reviewer_cap_counts_leases():
    clock = FakeClock()
    session = ReviewSession(make_tasks(1), clock=clock, lease_timeout=600)
    for r in ("a", "b", "c"):
        assert session.next_task(r) is not None
    assert session.next_task("d") is None
    # leases expire, the slot opens up
    clock.advance(601)
    assert session.next_task("d") is not None


def test_cap_counts_verdicts_and_leases_mixed():
    clock = FakeClock()
    session = ReviewSession(make_tasks(1), clock=clock)
    session.submit_verdict("rt-s000", "a", True)
    session.submit_verdict("rt-s000", "b", True)
    assert session.next_task("c") is not None  # third slot via lease
    assert session.next_task("d") is None


def test_submit_without_lease_on_open_task():
    session = ReviewSession(make_tasks(1), clock=FakeClock())
    v = session.submit_verdict("rt-s000", "walkin", False)
    assert v.success is False and v.reviewer_id == "walkin"


def test_duplicate_verdict_conflict():
    session = ReviewSession(make_tasks(1), clock=FakeClock())
    session.submit_verdict("rt-s000", "a", True)
    with pytest.raises(DuplicateVerdictError):
        session.submit_verdict("rt-s000", "a", False)


def test_unknown_task_error():
    session = ReviewSession(make_tasks(1))
    with pytest.raises(UnknownTaskError):
        session.submit_verdict("rt-zzz", "a", True)


def test_fourth_verdict_rejected():
    session = ReviewSession(make_tasks(1), clock=FakeClock())
    for r in ("a", "b", "c"):
        session.submit_verdict("rt-s000", r, True)
    with pytest.raises(TaskFullError):
        session.submit_verdict("rt-s000", "d", True)


def test_full_assignment_blocks_walkin_until_lease_expires():
    clock = FakeClock()
    session = ReviewSession(make_tasks(1), clock=clock, lease_timeout=600)
    session.submit_verdict("rt-s000", "a", True)
    session.submit_verdict("rt-s000", "b", True)
    assert session.next_task("c") is not None
    with pytest.raises(TaskFullError):
        session.submit_verdict("rt-s000", "d", True)
    clock.advance(601)
    session.submit_verdict("rt-s000", "d", True)
    assert session.task_review("rt-s000") == "accepted"


# ---------------------------------------------------------------------------
# durability and manifest coupling

def build_manifest(path, n=4):
    man = Manifest.create(path)
    for i in range(n):
        man.append(SampleRecord(
            sample_id=f"s{i:03d}",
            category="person.n.01",
            image_path=f"images/s{i:03d}.png",
            split="benchmark",
            prior_paths={"rgb": f"priors/s{i:03d}_rgb.png", "depth": f"priors/s{i:03d}_depth.png"},
        ))
    man.close()
    return Manifest.load(path, writable=True)


def write_image_files(root, tasks):
    for t in tasks:
        for rel in (t.left_image, t.right_image):
            full = os.path.join(root, rel)
            os.makedirs(os.path.dirname(full), exist_ok=True)
            with open(full, "wb") as fh:
                fh.write(b"\x89PNG fake " + rel.encode())


def test_tasks_from_manifest(tmp_path):
    man = build_manifest(str(tmp_path / "m.jsonl"))
    tasks = tasks_from_manifest(man, image_root=str(tmp_path), require_files=False)
    assert len(tasks) == 4
    assert tasks[0].task_id == "rt-s000"
    assert tasks[0].left_image == "priors/s000_rgb.png"
    assert tasks[0].right_image == "images/s000.png"
    with pytest.raises(CurationError):
        tasks_from_manifest(man, image_root=str(tmp_path))  # files missing
    write_image_files(str(tmp_path), tasks)
    assert len(tasks_from_manifest(man, image_root=str(tmp_path))) == 4


def test_tasks_skip_settled_and_priorless(tmp_path):
    man = build_manifest(str(tmp_path / "m.jsonl"))
    man.append(SampleRecord(sample_id="real_1", category="person.n.01",
                            image_path="real/1.png", split="train"))
    man.append_review("s000", "accepted")
    tasks = tasks_from_manifest(man, require_files=False)
    assert [t.sample_id for t in tasks] == ["s001", "s002", "s003"]


def test_third_verdict_amends_manifest(tmp_path):
    man = build_manifest(str(tmp_path / "m.jsonl"))
    session = ReviewSession(tasks_from_manifest(man, require_files=False),
                            manifest=man, clock=FakeClock())
    session.submit_verdict("rt-s000", "a", True)
    session.submit_verdict("rt-s000", "b", False)
    assert man.get("s000").review == "pending"
    session.submit_verdict("rt-s000", "c", True)
    assert man.get("s000").review == "accepted"
    for r in ("a", "b", "c"):
        session.submit_verdict("rt-s001", r, False)
    assert man.get("s001").review == "rejected"
    # survives reload from disk
    man.close()
    back = Manifest.load(str(tmp_path / "m.jsonl"))
    assert back.get("s000").review == "accepted"
    assert back.get("s001").review == "rejected"


def test_log_replay_reproduces_stats(tmp_path):
    log = str(tmp_path / "verdicts.jsonl")
    tasks = make_tasks(6)
    session = ReviewSession(tasks, log_path=log, clock=FakeClock())
    rng = np.random.default_rng(2)
    for t in tasks[:5]:
        for r in ("a", "b", "c"):
            session.submit_verdict(t.task_id, r, bool(rng.integers(2)))
    session.submit_verdict(tasks[5].task_id, "a", True)  # leave one incomplete
    want = session.stats()

    resumed = ReviewSession(tasks, log_path=log, clock=FakeClock())
    assert resumed.stats() == want
    assert replay_stats(log, total_tasks=6) == want
    # the resumed session still refuses duplicates recorded pre-restart
    with pytest.raises(DuplicateVerdictError):
        resumed.submit_verdict(tasks[0].task_id, "a", True)


def test_replay_does_not_double_amend(tmp_path):
    log = str(tmp_path / "verdicts.jsonl")
    man = build_manifest(str(tmp_path / "m.jsonl"))
    tasks = tasks_from_manifest(man, require_files=False)
    session = ReviewSession(tasks, manifest=man, log_path=log, clock=FakeClock())
    for r in ("a", "b", "c"):
        session.submit_verdict("rt-s000", r, True)
    man.close()

    with open(str(tmp_path / "m.jsonl"), "r", encoding="utf-8") as fh:
        lines_before = fh.read().count("\n")
    man2 = Manifest.load(str(tmp_path / "m.jsonl"), writable=True)
    ReviewSession(tasks, manifest=man2, log_path=log, clock=FakeClock())
    man2.close()
    with open(str(tmp_path / "m.jsonl"), "r", encoding="utf-8") as fh:
        assert fh.read().count("\n") == lines_before


def test_concurrent_submitters_never_exceed_cap():
    tasks = make_tasks(8)
    session = ReviewSession(tasks, clock=FakeClock())
    rejected = []

    def reviewer(rid):
        rng = np.random.default_rng(abs(hash(rid)) % 2**32)
        for t in tasks:
            try:
                session.submit_verdict(t.task_id, rid, bool(rng.integers(2)))
            except (TaskFullError, DuplicateVerdictError) as exc:
                rejected.append(exc)

    threads = [threading.Thread(target=reviewer, args=(f"r{i}",)) for i in range(8)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()

    for votes in session._verdicts.values():
        assert len(votes) == 3
    stats = session.stats()
    assert stats.completed_tasks == 8
    assert stats.total_verdicts == 24
    # 8 reviewers x 8 tasks attempted, 24 landed
    assert len(rejected) == 8 * 8 - 24


# ---------------------------------------------------------------------------
# HTTP API

@pytest.fixture()
def server(tmp_path):
    man = build_manifest(str(tmp_path / "m.jsonl"))
    tasks = tasks_from_manifest(man, require_files=False)
    write_image_files(str(tmp_path), tasks)
    static = tmp_path / "static"
    static.mkdir()
    (static / "index.html").write_text("<!doctype html><title>review</title>")
    (static / "app.js").write_text("console.log('ok')")
    session = ReviewSession(tasks, manifest=man,
                            log_path=str(tmp_path / "verdicts.jsonl"))
    srv = build_server(session, port=0, image_root=str(tmp_path),
                       static_dir=str(static))
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    base = "http://127.0.0.1:%d" % srv.server_address[1]
    yield base, session
    srv.shutdown()
    srv.server_close()


def http(method, url, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(url, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, json.loads(resp.read() or b"{}"), dict(resp.headers)
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read() or b"{}"), dict(err.headers)


def test_http_next_and_verdict_roundtrip(server):
    base, _ = server
    status, doc, _ = http("GET", base + "/api/review/next?reviewer=alice")
    assert status == 200
    task = doc["task"]
    assert set(task) == {"task_id", "sample_id", "left_image", "right_image"}
    assert doc["done"] == 0 and doc["remaining"] == 4

    status, doc, _ = http("POST", base + "/api/review/verdict",
                          {"task_id": task["task_id"], "reviewer": "alice", "success": True})
    assert status == 200
    assert doc == {"recorded": True, "completed": False, "review": None}

    status, doc, _ = http("GET", base + "/api/review/next?reviewer=alice")
    assert doc["done"] == 1 and doc["remaining"] == 3
    assert doc["task"]["task_id"] != task["task_id"]


def test_http_next_exclude_param(server):
    base, _ = server
    _, doc, _ = http("GET", base + "/api/review/next?reviewer=bob")
    first = doc["task"]["task_id"]
    _, doc, _ = http("GET", base + f"/api/review/next?reviewer=bob&exclude={first}")
    second = doc["task"]["task_id"]
    assert second != first
    _, doc, _ = http("GET", base + f"/api/review/next?reviewer=bob&exclude={first},{second}")
    third = doc["task"]["task_id"]
    assert third not in (first, second)
    # skipping everything leaves nothing to serve
    _, doc, _ = http("GET", base + "/api/review/next?reviewer=bob&exclude=" +
                     ",".join(f"rt-s{i:03d}" for i in range(4)))
    assert doc["task"] is None


def test_http_error_codes(server):
    base, _ = server
    assert http("GET", base + "/api/review/next")[0] == 400
    assert http("POST", base + "/api/review/verdict",
                {"task_id": "rt-zzz", "reviewer": "a", "success": True})[0] == 404
    assert http("POST", base + "/api/review/verdict",
                {"task_id": "rt-s000", "reviewer": "a", "success": "yes"})[0] == 400
    assert http("POST", base + "/api/review/verdict", {"reviewer": "a"})[0] == 400
    http("POST", base + "/api/review/verdict",
         {"task_id": "rt-s000", "reviewer": "a", "success": True})
    assert http("POST", base + "/api/review/verdict",
                {"task_id": "rt-s000", "reviewer": "a", "success": False})[0] == 409
    assert http("GET", base + "/api/nope")[0] == 404


def test_http_stats_match_session(server):
    base, session = server
    for r in ("a", "b", "c"):
        session.submit_verdict("rt-s000", r, True)
        session.submit_verdict("rt-s001", r, r != "a")
    status, doc, _ = http("GET", base + "/api/review/stats")
    assert status == 200
    assert doc == session.stats().to_json()
    assert doc["completed_tasks"] == 2
    assert doc["success_rate"] == 1.0
    assert doc["agreement_rate"] == 0.5


def test_http_image_serving(server, tmp_path):
    base, _ = server
    url = base + "/api/images/priors/s000_rgb.png"
    with urllib.request.urlopen(url, timeout=10) as resp:
        assert resp.status == 200
        assert resp.headers["Content-Type"] == "image/png"
        assert resp.read().startswith(b"\x89PNG fake")
    assert http("GET", base + "/api/images/missing.png")[0] == 404
    assert http("GET", base + "/api/images/../m.jsonl")[0] == 404


def test_http_static_ui(server):
    base, _ = server
    with urllib.request.urlopen(base + "/", timeout=10) as resp:
        assert resp.status == 200
        assert b"review" in resp.read()
    with urllib.request.urlopen(base + "/app.js", timeout=10) as resp:
        assert "javascript" in resp.headers["Content-Type"]


def test_http_options_cors(server):
    base, _ = server
    req = urllib.request.Request(base + "/api/review/verdict", method="OPTIONS")
    with urllib.request.urlopen(req, timeout=10) as resp:
        assert resp.status == 204
        assert resp.headers["Access-Control-Allow-Origin"] == "*"


def test_http_three_reviewers_full_study(server):
    """Scripted mini study: 3 reviewers drain 4 tasks, 4th reviewer shut out."""
    base, session = server
    script = {"alice": True, "bob": True, "carol": False}
    for reviewer, vote in script.items():
        while True:
            _, doc, _ = http("GET", base + f"/api/review/next?reviewer={reviewer}")
            if doc["task"] is None:
                break
            http("POST", base + "/api/review/verdict",
                 {"task_id": doc["task"]["task_id"], "reviewer": reviewer, "success": vote})
    _, doc, _ = http("GET", base + "/api/review/next?reviewer=dave")
    assert doc["task"] is None
    _, stats, _ = http("GET", base + "/api/review/stats")
    assert stats["completed_tasks"] == 4
    assert stats["success_rate"] == 1.0   # (T,T,F) majority everywhere
    assert stats["agreement_rate"] == 0.0
    assert stats["total_verdicts"] == 12
