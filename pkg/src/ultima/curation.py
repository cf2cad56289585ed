"""Human review service: pair assignment, verdicts, agreement stats.

Each review task shows the rendered prior next to the synthetic image
and asks for a binary success verdict.  Every task is judged by at most
3 distinct reviewers; the majority settles the sample's review status
in the manifest.  Verdicts go to an append-only JSONL log, and the
statistics are a pure function of that log.

The HTTP layer is a thin JSON wrapper (stdlib http.server) around
ReviewSession, plus static file serving for the browser UI and the
image pairs.
"""

from __future__ import annotations

import hashlib
import json
import os
import posixpath
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlparse

import numpy as np

from .dataset import Manifest


class CurationError(Exception):
    pass


class UnknownTaskError(CurationError):
    pass


class DuplicateVerdictError(CurationError):
    pass


class TaskFullError(CurationError):
    """The task already has 3 distinct reviewers (verdicts or live leases)."""


@dataclass(frozen=True)
class ReviewTask:
    task_id: str
    sample_id: str
    left_image: str   # prior RGB, relative to the image root
    right_image: str  # synthetic image, relative to the image root

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "sample_id": self.sample_id,
            "left_image": self.left_image,
            "right_image": self.right_image,
        }


@dataclass(frozen=True)
class Verdict:
    task_id: str
    reviewer_id: str
    success: bool
    timestamp: float

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "reviewer": self.reviewer_id,
            "success": self.success,
            "timestamp": self.timestamp,
        }


@dataclass(frozen=True)
class ReviewStats:
    completed_tasks: int
    success_rate: float | None
    agreement_rate: float | None
    total_tasks: int = 0
    total_verdicts: int = 0

    def to_json(self) -> dict:
        return {
            "completed_tasks": self.completed_tasks,
            "success_rate": self.success_rate,
            "agreement_rate": self.agreement_rate,
            "total_tasks": self.total_tasks,
            "total_verdicts": self.total_verdicts,
        }


def compute_stats(verdicts_by_task: dict, total_tasks: int = 0) -> ReviewStats:
    """Aggregate {task_id: {reviewer: success}} into rates.

    A task is completed once it holds 3 verdicts.  success_rate is the
    majority-success fraction of completed tasks, agreement_rate the
    unanimous fraction.  With zero completed tasks both rates are None.
    """
    completed = 0
    majority = 0
    unanimous = 0
    n_verdicts = 0
    for votes in verdicts_by_task.values():
        n_verdicts += len(votes)
        if len(votes) < 3:
            continue
        completed += 1
        yes = sum(1 for s in votes.values() if s)
        if yes >= 2:
            majority += 1
        if yes in (0, len(votes)):
            unanimous += 1
    if completed == 0:
        return ReviewStats(0, None, None, total_tasks, n_verdicts)
    return ReviewStats(
        completed_tasks=completed,
        success_rate=majority / completed,
        agreement_rate=unanimous / completed,
        total_tasks=total_tasks,
        total_verdicts=n_verdicts,
    )


def replay_stats(log_path: str, total_tasks: int = 0) -> ReviewStats:
    """Stats recomputed from the verdict log alone."""
    grouped: dict = {}
    with open(log_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            grouped.setdefault(doc["task_id"], {})[doc["reviewer"]] = bool(doc["success"])
    return compute_stats(grouped, total_tasks)


def tasks_from_manifest(manifest: Manifest, image_root: str = ".",
                        statuses=("pending",), splits=None,
                        require_files: bool = True) -> list:
    """One ReviewTask per manifest sample awaiting review.

    Samples without a rendered prior RGB (real ingested photos) have
    nothing to compare against and are skipped.
    """
    tasks = []
    for rec in manifest.records:
        if rec.review not in statuses:
            continue
        if splits is not None and rec.split not in splits:
            continue
        left = rec.prior_paths.get("rgb", "")
        if not left:
            continue
        if require_files:
            for rel in (left, rec.image_path):
                full = os.path.join(image_root, rel)
                if not os.path.isfile(full):
                    raise CurationError(f"missing image for {rec.sample_id}: {full}")
        tasks.append(ReviewTask(
            task_id="rt-" + rec.sample_id,
            sample_id=rec.sample_id,
            left_image=left,
            right_image=rec.image_path,
        ))
    return tasks


MAX_REVIEWERS = 3


class ReviewSession:
    """Serialized task assignment and verdict bookkeeping.

    Writes funnel through one lock; ``stats`` reads a snapshot.  The
    clock is injectable so lease expiry is testable.
    """

    def __init__(self, tasks, manifest: Manifest = None, log_path: str = None,
                 lease_timeout: float = 600.0, seed: int = 0, clock=time.time):
        self.tasks = {}
        for t in tasks:
            if t.task_id in self.tasks:
                raise CurationError(f"duplicate task id {t.task_id!r}")
            self.tasks[t.task_id] = t
        self.manifest = manifest
        self.log_path = log_path
        self.lease_timeout = float(lease_timeout)
        self.seed = int(seed)
        self.clock = clock
        self._lock = threading.Lock()
        self._verdicts: dict = {t: {} for t in self.tasks}
        # task_id -> {reviewer: lease expiry time}
        self._leases: dict = {t: {} for t in self.tasks}
        self._orders: dict = {}
        if log_path and os.path.exists(log_path):
            self._replay_log(log_path)

    # -- internals

    def _replay_log(self, path: str):
        with open(path, "r", encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                tid = doc["task_id"]
                if tid not in self.tasks:
                    raise CurationError(f"{path}:{i}: verdict for unknown task {tid!r}")
                votes = self._verdicts[tid]
                if doc["reviewer"] in votes:
                    raise CurationError(f"{path}:{i}: duplicate verdict in log")
                if len(votes) >= MAX_REVIEWERS:
                    raise CurationError(f"{path}:{i}: more than {MAX_REVIEWERS} verdicts")
                votes[doc["reviewer"]] = bool(doc["success"])
                if len(votes) == MAX_REVIEWERS:
                    self._finalize(tid, votes)

    def _order_for(self, reviewer: str) -> list:
        """Deterministic per-reviewer shuffle of the task ids."""
        if reviewer not in self._orders:
            key = f"{self.seed}|{reviewer}".encode("utf-8")
            digest = hashlib.blake2b(key, digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            ids = sorted(self.tasks)
            self._orders[reviewer] = [ids[i] for i in rng.permutation(len(ids))]
        return self._orders[reviewer]

    def _expire_leases(self, now: float):
        for leases in self._leases.values():
            stale = [r for r, exp in leases.items() if exp <= now]
            for r in stale:
                del leases[r]

    def _participants(self, task_id: str) -> set:
        return set(self._verdicts[task_id]) | set(self._leases[task_id])

    def _append_log(self, verdict: Verdict):
        if not self.log_path:
            return
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(verdict.to_json(), sort_keys=True))
            fh.write("\n")

    def _finalize(self, task_id: str, votes: dict):
        """Third verdict landed: push the majority into the manifest."""
        if self.manifest is None:
            return
        sample_id = self.tasks[task_id].sample_id
        record = self.manifest.get(sample_id)
        if record.review != "pending":
            return  # already settled (log replay after a completed run)
        yes = sum(1 for s in votes.values() if s)
        self.manifest.append_review(sample_id, "accepted" if yes >= 2 else "rejected")

    # -- operations

    def next_task(self, reviewer_id: str, exclude=()):
        """First task (in this reviewer's order) they may still judge.

        Counting rule: verdicts plus unexpired leases together must not
        exceed 3 distinct reviewers, so a task leased out to 3 people is
        withheld from a 4th even before any verdict lands.

        ``exclude`` lists task ids to pass over without judging (the UI's
        broken-image skip). Skipping surrenders this reviewer's lease on
        the task; the server itself keeps no skip state, so the client
        must resend the list on every call.
        """
        if not reviewer_id:
            raise ValueError("reviewer_id must be non-empty")
        excluded = set(exclude)
        with self._lock:
            now = self.clock()
            self._expire_leases(now)
            for tid in self._order_for(reviewer_id):
                if tid in excluded:
                    self._leases[tid].pop(reviewer_id, None)
                    continue
                votes = self._verdicts[tid]
                if reviewer_id in votes or len(votes) >= MAX_REVIEWERS:
                    continue
                participants = self._participants(tid)
                if reviewer_id not in participants and len(participants) >= MAX_REVIEWERS:
                    continue
                self._leases[tid][reviewer_id] = now + self.lease_timeout
                return self.tasks[tid]
            return None

    def submit_verdict(self, task_id: str, reviewer_id: str, success: bool) -> Verdict:
        if not reviewer_id:
            raise ValueError("reviewer_id must be non-empty")
        with self._lock:
            if task_id not in self.tasks:
                raise UnknownTaskError(f"unknown task {task_id!r}")
            now = self.clock()
            self._expire_leases(now)
            votes = self._verdicts[task_id]
            if reviewer_id in votes:
                raise DuplicateVerdictError(
                    f"reviewer {reviewer_id!r} already judged {task_id!r}")
            if len(votes) >= MAX_REVIEWERS:
                raise TaskFullError(f"task {task_id!r} already has {MAX_REVIEWERS} verdicts")
            participants = self._participants(task_id)
            if reviewer_id not in participants and len(participants) >= MAX_REVIEWERS:
                raise TaskFullError(f"task {task_id!r} is fully assigned")
            verdict = Verdict(task_id, reviewer_id, bool(success), now)
            self._append_log(verdict)
            votes[reviewer_id] = verdict.success
            self._leases[task_id].pop(reviewer_id, None)
            if len(votes) == MAX_REVIEWERS:
                self._finalize(task_id, votes)
            return verdict

    def task_review(self, task_id: str):
        """Manifest-facing status of a task, or None while open."""
        votes = self._verdicts.get(task_id)
        if votes is None or len(votes) < MAX_REVIEWERS:
            return None
        yes = sum(1 for s in votes.values() if s)
        return "accepted" if yes >= 2 else "rejected"

    def reviewer_counts(self, reviewer_id: str):
        """(done, remaining) for one reviewer at this instant."""
        with self._lock:
            now = self.clock()
            self._expire_leases(now)
            done = 0
            remaining = 0
            for tid, votes in self._verdicts.items():
                if reviewer_id in votes:
                    done += 1
                    continue
                if len(votes) >= MAX_REVIEWERS:
                    continue
                participants = self._participants(tid)
                if reviewer_id in participants or len(participants) < MAX_REVIEWERS:
                    remaining += 1
            return done, remaining

    def stats(self) -> ReviewStats:
        with self._lock:
            snapshot = {t: dict(v) for t, v in self._verdicts.items()}
        return compute_stats(snapshot, total_tasks=len(self.tasks))


# ---------------------------------------------------------------------------
# HTTP layer

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".ico": "image/x-icon",
}


def _safe_join(root: str, rel: str):
    """Resolve rel under root; None when it escapes."""
    rel = posixpath.normpath(unquote(rel)).lstrip("/")
    if rel.startswith(".."):
        return None
    full = os.path.realpath(os.path.join(root, rel))
    root_real = os.path.realpath(root)
    if full != root_real and not full.startswith(root_real + os.sep):
        return None
    return full


class ReviewRequestHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "ultima-review/0.1"

    # the ThreadingHTTPServer subclass carries session/image_root/static_dir

    def log_message(self, fmt, *args):  # default is one stderr line per request
        if self.server.verbose:
            BaseHTTPRequestHandler.log_message(self, fmt, *args)

    def _send_json(self, status: int, doc: dict):
        body = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_file(self, full: str):
        try:
            with open(full, "rb") as fh:
                body = fh.read()
        except OSError:
            self._send_json(404, {"error": "not found"})
            return
        ext = os.path.splitext(full)[1].lower()
        self.send_response(200)
        self.send_header("Content-Type", _CONTENT_TYPES.get(ext, "application/octet-stream"))
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        url = urlparse(self.path)
        path = url.path
        session = self.server.session

        if path == "/api/review/next":
            query = parse_qs(url.query)
            reviewer = query.get("reviewer", [""])[0]
            if not reviewer:
                self._send_json(400, {"error": "reviewer query parameter required"})
                return
            exclude = [t for t in query.get("exclude", [""])[0].split(",") if t]
            task = session.next_task(reviewer, exclude=exclude)
            done, remaining = session.reviewer_counts(reviewer)
            self._send_json(200, {
                "task": task.to_json() if task else None,
                "done": done,
                "remaining": remaining,
            })
            return

        if path == "/api/review/stats":
            self._send_json(200, session.stats().to_json())
            return

        if path.startswith("/api/images/"):
            rel = path[len("/api/images/"):]
            full = _safe_join(self.server.image_root, rel)
            if full is None or not os.path.isfile(full):
                self._send_json(404, {"error": "not found"})
                return
            self._send_file(full)
            return

        if self.server.static_dir:
            rel = "index.html" if path == "/" else path
            full = _safe_join(self.server.static_dir, rel)
            if full is not None and os.path.isfile(full):
                self._send_file(full)
                return

        self._send_json(404, {"error": "not found"})

    def do_POST(self):
        url = urlparse(self.path)
        if url.path != "/api/review/verdict":
            self._send_json(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            doc = json.loads(self.rfile.read(length).decode("utf-8"))
            task_id = doc["task_id"]
            reviewer = doc["reviewer"]
            success = doc["success"]
            if not isinstance(success, bool):
                raise ValueError("success must be a boolean")
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            self._send_json(400, {"error": f"bad verdict payload: {exc}"})
            return

        session = self.server.session
        try:
            session.submit_verdict(task_id, reviewer, success)
        except UnknownTaskError as exc:
            self._send_json(404, {"error": str(exc)})
            return
        except (DuplicateVerdictError, TaskFullError) as exc:
            self._send_json(409, {"error": str(exc)})
            return
        except ValueError as exc:
            self._send_json(400, {"error": str(exc)})
            return
        review = session.task_review(task_id)
        self._send_json(200, {
            "recorded": True,
            "completed": review is not None,
            "review": review,
        })


class ReviewServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, session: ReviewSession, image_root: str = ".",
                 static_dir: str = None, verbose: bool = False):
        super().__init__(address, ReviewRequestHandler)
        self.session = session
        self.image_root = image_root
        self.static_dir = static_dir
        self.verbose = verbose


def build_server(session: ReviewSession, host: str = "127.0.0.1", port: int = 0,
                 image_root: str = ".", static_dir: str = None,
                 verbose: bool = False) -> ReviewServer:
    """Bind (port 0 picks a free one); caller runs serve_forever()."""
    return ReviewServer((host, port), session, image_root=image_root,
                        static_dir=static_dir, verbose=verbose)
