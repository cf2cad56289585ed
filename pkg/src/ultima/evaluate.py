"""Benchmark runner and answer grading.

Runs a vision model over the benchmark split of a manifest, grades the
raw replies either with a deterministic string matcher or with an LLM
judge, and aggregates per-task accuracy plus confusion matrices.

Grading conventions
-------------------
A reply is matched to an option in two stages.  First we look for index
tokens such as ``(2)``, ``2.``, ``2)`` or ``b)``; if exactly one valid
index is referenced, that option is the prediction.  Otherwise we look
for option texts appearing as whole words in the reply, longest option
first so that "front left" is not double counted as "front".  A unique
survivor is the prediction; zero or two-plus survivors grade as
incorrect with no matched option.

Items whose transport failed, or whose LLM judging never produced a
yes/no, stay ungraded.  Accuracy is reported both ways: ``accuracy``
excludes ungraded items from the denominator, ``accuracy_strict``
counts them as wrong.  Confusion matrices are built from matcher
verdicts only, since the LLM judge does not name the predicted class.
"""

from __future__ import annotations

import base64
import json
import os
import re
import string
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import Manifest, SampleRecord
from .llm import BadReplyError, ChatClient, ChatConfig, TransportError
from .vqa import TASKS, VqaItem

GRADING_SYSTEM_PROMPT = "You are a helpful and precise assistant for checking the quality of the answer. You should review all listed choices and compared to the Answer content, and judge whether the Answer is correct (yes), or not (no). You should only focus on the major content of the answer, not the detailed number or symbol. Please answer in only yes or no"

UNPARSED = "unparsed"


@dataclass
class ModelResponse:
    """One raw model reply to one benchmark question.

    ``error`` is set (and ``raw_text`` empty) when the endpoint call
    failed for this item; such responses are never graded.
    """

    sample_id: str
    qa_index: int
    raw_text: str
    latency: float = 0.0
    error: str = ""

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "qa_index": self.qa_index,
            "raw_text": self.raw_text,
            "latency": self.latency,
            "error": self.error,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelResponse":
        return cls(
            sample_id=obj["sample_id"],
            qa_index=int(obj["qa_index"]),
            raw_text=obj.get("raw_text", ""),
            latency=float(obj.get("latency", 0.0)),
            error=obj.get("error", ""),
        )


@dataclass
class GradeVerdict:
    """Outcome of grading one response.

    ``correct`` is None for ungraded items.  ``matched_option`` is the
    option index the matcher settled on, or None when nothing (or more
    than one thing) matched; the LLM grader never sets it.
    """

    correct: bool | None
    grader: str
    matched_option: int | None = None

    def __post_init__(self):
        if self.grader not in ("matcher", "llm"):
            raise ValueError("grader must be 'matcher' or 'llm'")
        if self.grader == "llm" and self.matched_option is not None:
            raise ValueError("llm verdicts carry no matched option")
        if self.grader == "matcher" and self.correct and self.matched_option is None:
            raise ValueError("a correct matcher verdict must name the option")


@dataclass
class GradedItem:
    response: ModelResponse
    item: VqaItem
    verdict: GradeVerdict


# ---------------------------------------------------------------------------
# matcher grading

_PAREN_NUM = re.compile(r"\((\d+)\)")
_TRAIL_NUM = re.compile(r"\b(\d+)[.)]")
_PAREN_LETTER = re.compile(r"\(([a-z])\)", re.IGNORECASE)
_TRAIL_LETTER = re.compile(r"\b([a-z])\)", re.IGNORECASE)
_BARE = re.compile(r"\(?([0-9]+|[a-z])\)?\.?", re.IGNORECASE)

_PUNCT_TABLE = {ord(c): " " for c in string.punctuation if c != "-"}


def _normalize(text: str) -> str:
    """Lowercase, fold punctuation except hyphens to spaces, collapse runs."""
    folded = text.lower().translate(_PUNCT_TABLE)
    return " ".join(folded.split())


def _index_candidates(text: str, n_options: int) -> set:
    found = set()
    for m in _PAREN_NUM.finditer(text):
        found.add(int(m.group(1)) - 1)
    for m in _TRAIL_NUM.finditer(text):
        found.add(int(m.group(1)) - 1)
    for m in _PAREN_LETTER.finditer(text):
        found.add(ord(m.group(1).lower()) - ord("a"))
    for m in _TRAIL_LETTER.finditer(text):
        found.add(ord(m.group(1).lower()) - ord("a"))
    return {i for i in found if 0 <= i < n_options}


def _text_candidates(text: str, options) -> set:
    """Options whose text appears as whole words, longest first.

    A matched span is blanked before shorter options are tried, so a
    reply saying only "front left" does not also count as "front".
    """
    norm = _normalize(text)
    order = sorted(range(len(options)), key=lambda i: -len(options[i]))
    found = set()
    for i in order:
        pat = re.compile(r"\b%s\b" % re.escape(_normalize(options[i])))
        if pat.search(norm):
            found.add(i)
            norm = pat.sub(lambda m: " " * len(m.group(0)), norm)
    return found


def grade_with_matcher(response_text: str, item: VqaItem) -> GradeVerdict:
    """Deterministic grading of a multiple-choice reply."""
    if not item.options:
        raise ValueError("matcher grading needs a multiple-choice item")
    text = response_text.strip()

    candidates = set()
    whole = _BARE.fullmatch(text)
    if whole:
        tok = whole.group(1).lower()
        idx = int(tok) - 1 if tok.isdigit() else ord(tok) - ord("a")
        if 0 <= idx < len(item.options):
            candidates = {idx}
    if not candidates:
        candidates = _index_candidates(text, len(item.options))
    if not candidates:
        candidates = _text_candidates(text, item.options)

    if len(candidates) != 1:
        return GradeVerdict(correct=False, grader="matcher", matched_option=None)
    matched = candidates.pop()
    return GradeVerdict(
        correct=(matched == item.answer_index),
        grader="matcher",
        matched_option=matched,
    )


# ---------------------------------------------------------------------------
# LLM grading

GRADING_USER_TEMPLATE = (
    "Question: {question}\n"
    "Choices: {choices}\n"
    "Correct Answer: {truth}\n"
    "Answer: {response}"
)


def grade_with_llm(client, item: VqaItem, response_text: str, parse_retries: int = 2) -> GradeVerdict:
    """Ask an LLM judge for a yes/no on the reply.

    Replies that never start with yes or no after ``parse_retries``
    extra attempts, and transport failures, leave the item ungraded.
    """
    choices = " ".join(
        "(%d) %s" % (i + 1, opt) for i, opt in enumerate(item.options)
    )
    user = GRADING_USER_TEMPLATE.format(
        question=item.question,
        choices=choices if item.options else "(open answer)",
        truth=item.answer_text,
        response=response_text,
    )
    for _ in range(parse_retries + 1):
        try:
            reply = client.complete(GRADING_SYSTEM_PROMPT, user)
        except (TransportError, BadReplyError):
            return GradeVerdict(correct=None, grader="llm")
        word = reply.strip().lower()
        if word.startswith("yes"):
            return GradeVerdict(correct=True, grader="llm")
        if word.startswith("no"):
            return GradeVerdict(correct=False, grader="llm")
    return GradeVerdict(correct=None, grader="llm")


# ---------------------------------------------------------------------------
# benchmark run

class VisionChatClient:
    """Adapter that sends one image plus a question to a chat endpoint.

    The image travels inline as a base64 PNG data URI in the standard
    multimodal message shape.
    """

    def __init__(self, config: ChatConfig = None, client: ChatClient = None):
        if client is None:
            client = ChatClient(config or ChatConfig())
        self.client = client

    def answer(self, image_path: str, question: str, item: VqaItem = None) -> str:
        with open(image_path, "rb") as fh:
            b64 = base64.b64encode(fh.read()).decode("ascii")
        messages = [
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": question},
                    {
                        "type": "image_url",
                        "image_url": {"url": "data:image/png;base64," + b64},
                    },
                ],
            }
        ]
        return self.client.complete_messages(messages)


class PerfectResponder:
    """Answers every question with its ground-truth option."""

    def answer(self, image_path: str, question: str, item: VqaItem = None) -> str:
        if item.options:
            return "(%d) %s" % (item.answer_index + 1, item.answer_text)
        return item.answer_text


class RandomResponder:
    """Picks an option uniformly at random; open questions get noise."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def answer(self, image_path: str, question: str, item: VqaItem = None) -> str:
        if not item.options:
            return "no idea"
        j = int(self.rng.integers(len(item.options)))
        return "(%d) %s" % (j + 1, item.options[j])


class ConstantResponder:
    """Always replies with the same fixed text."""

    def __init__(self, text: str):
        self.text = text

    def answer(self, image_path: str, question: str, item: VqaItem = None) -> str:
        return self.text


def _benchmark_items(manifest: Manifest, statuses=("accepted",), limit: int | None = None):
    """Yield (record, qa_index, item) for gradeable benchmark QAs."""
    out = []
    for rec in manifest.records:
        if rec.split != "benchmark" or rec.review not in statuses:
            continue
        for qi, item in enumerate(rec.qas):
            out.append((rec, qi, item))
            if limit is not None and len(out) >= limit:
                return out
    return out


def run_benchmark(
    model,
    manifest: Manifest,
    image_root: str = ".",
    statuses=("accepted",),
    limit: int | None = None,
    out_path: str = None,
    max_workers: int = 1,
) -> list:
    """Collect raw model replies over the benchmark split.

    ``model`` needs an ``answer(image_path, question, item)`` method.
    Endpoint failures are recorded per item (``error`` set) and do not
    abort the run.  When ``out_path`` is given, each response is
    appended to it as a JSON line as soon as it lands, and an existing
    file resumes the run: items already present are not re-asked.
    """
    work = _benchmark_items(manifest, statuses=statuses, limit=limit)

    done = {}
    if out_path and os.path.exists(out_path):
        with open(out_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                resp = ModelResponse.from_json(json.loads(line))
                done[(resp.sample_id, resp.qa_index)] = resp

    def ask(job):
        rec, qi, item = job
        path = os.path.join(image_root, rec.image_path)
        t0 = time.monotonic()
        try:
            text = model.answer(path, item.question, item)
            return ModelResponse(rec.sample_id, qi, text, time.monotonic() - t0)
        except Exception as exc:  # noqa: BLE001 - one bad item must not kill the run
            return ModelResponse(rec.sample_id, qi, "", time.monotonic() - t0, error=str(exc))

    pending = [job for job in work if (job[0].sample_id, job[1]) not in done]
    fresh = []
    if pending:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            fresh = list(pool.map(ask, pending))

    if out_path and fresh:
        with open(out_path, "a", encoding="utf-8") as fh:
            for resp in fresh:
                fh.write(json.dumps(resp.to_json(), sort_keys=True, ensure_ascii=False))
                fh.write("\n")

    by_key = dict(done)
    for resp in fresh:
        by_key[(resp.sample_id, resp.qa_index)] = resp
    return [by_key[(rec.sample_id, qi)] for rec, qi, _ in work if (rec.sample_id, qi) in by_key]


def load_responses(path: str) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(ModelResponse.from_json(json.loads(line)))
    return out


# ---------------------------------------------------------------------------
# aggregation

def grade_responses(
    manifest: Manifest,
    responses,
    grader: str = "matcher",
    judge=None,
    statuses=("accepted", "pending"),
) -> list:
    """Grade every response against its manifest QA.

    Responses whose (sample_id, qa_index) is unknown raise; responses
    with a transport error stay ungraded.
    """
    by_id = {
        rec.sample_id: rec
        for rec in manifest.records
        if rec.review in statuses
    }
    out = []
    for resp in responses:
        rec = by_id.get(resp.sample_id)
        if rec is None:
            raise KeyError("response for unknown sample %r" % resp.sample_id)
        if not (0 <= resp.qa_index < len(rec.qas)):
            raise IndexError(
                "sample %r has no question %d" % (resp.sample_id, resp.qa_index)
            )
        item = rec.qas[resp.qa_index]
        if resp.error:
            verdict = GradeVerdict(correct=None, grader=grader)
        elif grader == "matcher":
            verdict = grade_with_matcher(resp.raw_text, item)
        elif grader == "llm":
            if judge is None:
                raise ValueError("llm grading needs a judge client")
            verdict = grade_with_llm(judge, item, resp.raw_text)
        else:
            raise ValueError("unknown grader %r" % grader)
        out.append(GradedItem(response=resp, item=item, verdict=verdict))
    return out


@dataclass
class TaskReport:
    graded: int = 0
    ungraded: int = 0
    correct: int = 0
    confusion: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> float | None:
        if self.graded == 0:
            return None
        return self.correct / self.graded

    @property
    def accuracy_strict(self) -> float | None:
        total = self.graded + self.ungraded
        if total == 0:
            return None
        return self.correct / total


@dataclass
class EvalReport:
    tasks: dict = field(default_factory=dict)

    @property
    def graded(self) -> int:
        return sum(t.graded for t in self.tasks.values())

    @property
    def ungraded(self) -> int:
        return sum(t.ungraded for t in self.tasks.values())

    @property
    def correct(self) -> int:
        return sum(t.correct for t in self.tasks.values())

    @property
    def accuracy(self) -> float | None:
        if self.graded == 0:
            return None
        return self.correct / self.graded

    def to_json(self) -> dict:
        tasks = {}
        for name, tr in sorted(self.tasks.items()):
            tasks[name] = {
                "graded": tr.graded,
                "ungraded": tr.ungraded,
                "correct": tr.correct,
                "accuracy": tr.accuracy,
                "accuracy_strict": tr.accuracy_strict,
                "confusion": {
                    truth: dict(sorted(row.items()))
                    for truth, row in sorted(tr.confusion.items())
                },
            }
        return {
            "tasks": tasks,
            "overall": {
                "graded": self.graded,
                "ungraded": self.ungraded,
                "correct": self.correct,
                "accuracy": self.accuracy,
            },
        }


def compute_report(graded) -> EvalReport:
    """Aggregate graded items into per-task accuracy and confusion.

    Ungraded items never enter a denominator of ``accuracy`` but are
    counted, and they also count as wrong in ``accuracy_strict``.  The
    confusion matrix uses matcher verdicts only; its row for a truth
    class sums to the number of graded items of that class.
    """
    report = EvalReport()
    for g in graded:
        task = g.item.task
        tr = report.tasks.setdefault(task, TaskReport())
        if g.verdict.correct is None:
            tr.ungraded += 1
            continue
        tr.graded += 1
        if g.verdict.correct:
            tr.correct += 1
        if g.verdict.grader != "matcher":
            continue
        truth = g.item.answer_text
        if g.verdict.matched_option is None:
            pred = UNPARSED
        else:
            pred = g.item.options[g.verdict.matched_option]
        row = tr.confusion.setdefault(truth, {})
        row[pred] = row.get(pred, 0) + 1
    return report


def render_report(report: EvalReport) -> str:
    """Plain-text table plus one confusion matrix per task."""
    lines = []
    header = "%-14s %8s %9s %9s %12s" % ("task", "graded", "ungraded", "acc", "acc(strict)")
    lines.append(header)
    lines.append("-" * len(header))

    def fmt(x):
        return "-" if x is None else "%.4f" % x

    for task in TASKS:
        tr = report.tasks.get(task)
        if tr is None:
            continue
        lines.append(
            "%-14s %8d %9d %9s %12s"
            % (task, tr.graded, tr.ungraded, fmt(tr.accuracy), fmt(tr.accuracy_strict))
        )
    for task in report.tasks:
        if task not in TASKS:
            tr = report.tasks[task]
            lines.append(
                "%-14s %8d %9d %9s %12s"
                % (task, tr.graded, tr.ungraded, fmt(tr.accuracy), fmt(tr.accuracy_strict))
            )
    lines.append(
        "%-14s %8d %9d %9s" % ("overall", report.graded, report.ungraded, fmt(report.accuracy))
    )

    for task, tr in sorted(report.tasks.items()):
        if not tr.confusion:
            continue
        cols = sorted({p for row in tr.confusion.values() for p in row})
        lines.append("")
        lines.append("confusion: %s (rows = truth)" % task)
        width = max([len(c) for c in cols] + [len(t) for t in tr.confusion] + [6])
        lines.append(" " * (width + 2) + " ".join("%*s" % (width, c) for c in cols))
        for truth in sorted(tr.confusion):
            row = tr.confusion[truth]
            cells = " ".join("%*d" % (width, row.get(c, 0)) for c in cols)
            lines.append("%-*s  %s" % (width, truth, cells))
    return "\n".join(lines) + "\n"
