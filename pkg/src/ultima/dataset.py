"""Sample manifests: JSONL persistence, balance checks, splits, ingestion,
and instruction-tuning export.

A manifest is an append-only JSON Lines file. The first line is a meta
record; every later line is either a sample or a review amendment that
updates one sample's review status. Lines never change once written, so
reruns of a deterministic pipeline produce byte-identical files. Image and
prior paths are stored relative to the manifest's directory.

Writers take an exclusive flock on the file; readers need no lock.
"""

from __future__ import annotations

import csv
import fcntl
import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import CameraObjectRelation, OrientationClass, ShotClass, ViewpointClass
from .prompts import PromptBundle
from .vqa import DEFAULT_TEMPLATES, QaTemplateSet, VqaItem, make_class_vqas

SCHEMA_VERSION = 1

SPLITS = ("train", "benchmark")
REVIEW_STATES = ("pending", "accepted", "rejected")

AXES = ("orientation", "viewpoint", "shot")
_AXIS_CLASSES = {
    "orientation": [c.display for c in OrientationClass],
    "viewpoint": [c.display for c in ViewpointClass],
    "shot": [c.display for c in ShotClass],
}


class ManifestError(RuntimeError):
    pass


class ManifestLocked(ManifestError):
    pass


@dataclass
class SampleRecord:
    sample_id: str
    category: str
    image_path: str
    split: str
    asset_id: str = ""
    beta: Optional[CameraObjectRelation] = None
    classes: dict = field(default_factory=dict)
    prompt: Optional[PromptBundle] = None
    prior_paths: dict = field(default_factory=dict)
    qas: list = field(default_factory=list)
    review: str = "pending"
    seed: Optional[int] = None
    attempt: int = 0

    def __post_init__(self):
        if not self.sample_id:
            raise ValueError("sample_id must be non-empty")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.review not in REVIEW_STATES:
            raise ValueError(f"review must be one of {REVIEW_STATES}, got {self.review!r}")
        if self.beta is not None:
            derived = {
                "orientation": self.beta.orientation.display,
                "viewpoint": self.beta.viewpoint.display,
                "shot": self.beta.shot.display,
            }
            if not self.classes:
                self.classes = derived
            elif any(self.classes.get(k) not in (None, v) for k, v in derived.items()):
                raise ValueError(f"{self.sample_id}: classes {self.classes} disagree with beta {derived}")
        for axis, value in self.classes.items():
            if axis not in AXES:
                raise ValueError(f"unknown class axis {axis!r}")
            if value is not None and value not in _AXIS_CLASSES[axis]:
                raise ValueError(f"unknown {axis} class {value!r}")


def _record_to_doc(record: SampleRecord) -> dict:
    doc = {
        "kind": "sample",
        "sample_id": record.sample_id,
        "asset_id": record.asset_id,
        "category": record.category,
        "image_path": record.image_path,
        "split": record.split,
        "review": record.review,
        "classes": {axis: record.classes.get(axis) for axis in AXES},
        "qas": [
            {
                "task": qa.task,
                "question": qa.question,
                "options": list(qa.options),
                "answer_index": qa.answer_index,
                "free_answer": qa.free_answer,
            }
            for qa in record.qas
        ],
        "attempt": record.attempt,
    }
    doc["beta"] = None if record.beta is None else {
        "phi": record.beta.phi, "theta": record.beta.theta, "dist_rel": record.beta.dist_rel}
    doc["prompt"] = None if record.prompt is None else {
        "positive": record.prompt.positive, "negative": record.prompt.negative,
        "relation_clause": record.prompt.relation_clause}
    doc["prior_paths"] = dict(record.prior_paths) if record.prior_paths else {}
    doc["seed"] = record.seed
    return doc


def _record_from_doc(doc: dict) -> SampleRecord:
    beta = doc.get("beta")
    prompt = doc.get("prompt")
    qas = [
        VqaItem(task=q["task"], question=q["question"], options=tuple(q["options"]),
                answer_index=q["answer_index"], image_ref=doc["sample_id"],
                free_answer=q.get("free_answer", ""))
        for q in doc.get("qas", [])
    ]
    return SampleRecord(
        sample_id=doc["sample_id"],
        asset_id=doc.get("asset_id", ""),
        category=doc.get("category", ""),
        image_path=doc["image_path"],
        split=doc["split"],
        review=doc.get("review", "pending"),
        beta=None if beta is None else CameraObjectRelation(**beta),
        classes={k: v for k, v in doc.get("classes", {}).items()},
        prompt=None if prompt is None else PromptBundle(**prompt),
        prior_paths=doc.get("prior_paths", {}) or {},
        qas=qas,
        seed=doc.get("seed"),
        attempt=doc.get("attempt", 0),
    )


def _dump_line(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class Manifest:
    """Append-only JSONL store bound to one file."""

    def __init__(self, path, meta: dict):
        self.path = str(path)
        self.meta = meta
        self.records: list[SampleRecord] = []
        self._index: dict[str, SampleRecord] = {}
        self._split_assets = {"train": set(), "benchmark": set()}
        self._writer = None

    # -- construction

    @classmethod
    def create(cls, path, config_digest: str = "") -> "Manifest":
        if os.path.exists(path):
            raise ManifestError(f"manifest already exists: {path}")
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        meta = {"kind": "meta", "schema_version": SCHEMA_VERSION,
                "config_digest": config_digest}
        manifest = cls(path, meta)
        manifest._ensure_writer()
        manifest._writer.write(_dump_line(meta) + "\n")
        manifest._writer.flush()
        os.fsync(manifest._writer.fileno())
        return manifest

    @classmethod
    def load(cls, path, writable: bool = False) -> "Manifest":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().split("\n") if ln]
        if not lines:
            raise ManifestError(f"empty manifest: {path}")
        meta = json.loads(lines[0])
        if meta.get("kind") != "meta":
            raise ManifestError(f"{path}: first line is not a meta record")
        if meta.get("schema_version") != SCHEMA_VERSION:
            raise ManifestError(f"{path}: unsupported schema_version {meta.get('schema_version')}")
        manifest = cls(path, meta)
        for i, line in enumerate(lines[1:], start=2):
            doc = json.loads(line)
            kind = doc.get("kind")
            if kind == "sample":
                manifest._admit(_record_from_doc(doc))
            elif kind == "review":
                sid = doc.get("sample_id")
                record = manifest._index.get(sid)
                if record is None:
                    raise ManifestError(f"{path}:{i}: review amendment for unknown sample {sid!r}")
                if doc.get("review") not in REVIEW_STATES:
                    raise ManifestError(f"{path}:{i}: bad review state {doc.get('review')!r}")
                record.review = doc["review"]
            else:
                raise ManifestError(f"{path}:{i}: unknown record kind {kind!r}")
        if writable:
            manifest._ensure_writer()
        return manifest

    @classmethod
    def open_or_create(cls, path, config_digest: str = "") -> "Manifest":
        if os.path.exists(path):
            return cls.load(path, writable=True)
        return cls.create(path, config_digest)

    # -- internals

    def _ensure_writer(self):
        if self._writer is None:
            fh = open(self.path, "a", encoding="utf-8")
            try:
                fcntl.flock(fh.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
            except OSError:
                fh.close()
                raise ManifestLocked(f"another writer holds {self.path}")
            self._writer = fh

    def close(self):
        if self._writer is not None:
            fcntl.flock(self._writer.fileno(), fcntl.LOCK_UN)
            self._writer.close()
            self._writer = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _admit(self, record: SampleRecord):
        if record.sample_id in self._index:
            raise ManifestError(f"duplicate sample_id {record.sample_id!r}")
        if record.asset_id:
            other = "benchmark" if record.split == "train" else "train"
            if record.asset_id in self._split_assets[other]:
                raise ManifestError(
                    f"{record.sample_id}: asset {record.asset_id!r} already used in the "
                    f"{other} split; splits must not share assets")
            self._split_assets[record.split].add(record.asset_id)
        self.records.append(record)
        self._index[record.sample_id] = record

    def _append_line(self, doc: dict):
        self._ensure_writer()
        self._writer.write(_dump_line(doc) + "\n")
        self._writer.flush()
        os.fsync(self._writer.fileno())

    # -- public api

    def append(self, record: SampleRecord):
        self._admit(record)
        try:
            self._append_line(_record_to_doc(record))
        except Exception:
            # roll back the in-memory admit so memory mirrors the file
            self.records.pop()
            del self._index[record.sample_id]
            if record.asset_id:
                self._split_assets[record.split].discard(record.asset_id)
            raise

    def append_review(self, sample_id: str, review: str, **extra):
        if review not in REVIEW_STATES:
            raise ValueError(f"review must be one of {REVIEW_STATES}, got {review!r}")
        record = self._index.get(sample_id)
        if record is None:
            raise ManifestError(f"no such sample {sample_id!r}")
        doc = {"kind": "review", "sample_id": sample_id, "review": review}
        doc.update(extra)
        self._append_line(doc)
        record.review = review

    def get(self, sample_id: str) -> SampleRecord:
        return self._index[sample_id]

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._index

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.blake2b(blob, digest_size=16).hexdigest()


# ---------------------------------------------------------------------------
# balance


@dataclass
class BalanceReport:
    counts: dict             # axis -> {class display name: count}
    axis_uniform: dict       # axis -> bool
    uniform: bool
    tolerance: float

    def summary_lines(self) -> list[str]:
        lines = []
        for axis in AXES:
            counts = self.counts[axis]
            verdict = "uniform" if self.axis_uniform[axis] else "NOT uniform"
            body = ", ".join(f"{name}: {counts[name]}" for name in _AXIS_CLASSES[axis])
            lines.append(f"{axis} ({verdict}): {body}")
        return lines


def check_balance(manifest: Manifest, split: Optional[str] = None,
                  tolerance: float = 1.0) -> BalanceReport:
    """Per-axis class histograms with a max/min <= tolerance verdict.

    Axes with no labeled records at all count as vacuously uniform.
    """
    if tolerance < 1.0:
        raise ValueError("tolerance is a max/min ratio, must be >= 1.0")
    counts = {axis: {name: 0 for name in _AXIS_CLASSES[axis]} for axis in AXES}
    for record in manifest:
        if split is not None and record.split != split:
            continue
        for axis in AXES:
            value = record.classes.get(axis)
            if value is not None:
                counts[axis][value] += 1
    axis_uniform = {}
    for axis in AXES:
        values = list(counts[axis].values())
        if sum(values) == 0:
            axis_uniform[axis] = True
        elif min(values) == 0:
            axis_uniform[axis] = False
        else:
            axis_uniform[axis] = (max(values) / min(values)) <= tolerance
    return BalanceReport(counts=counts, axis_uniform=axis_uniform,
                         uniform=all(axis_uniform.values()), tolerance=tolerance)


# ---------------------------------------------------------------------------
# export


def default_export_statuses(split: str) -> tuple:
    # benchmark exports are review-gated; train keeps unreviewed samples
    return ("accepted",) if split == "benchmark" else ("accepted", "pending")


def export_instruction_json(manifest: Manifest, split: str, out_path,
                            statuses: Optional[Sequence[str]] = None) -> int:
    """Write LLaVA-style conversations, one object per QA, in append order.

    Object shape: {"id", "image", "conversations": [human turn with
    "<image>\\n" + question, model turn with the answer text]}.
    """
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    statuses = tuple(statuses) if statuses is not None else default_export_statuses(split)
    objects = []
    for record in manifest:
        if record.split != split or record.review not in statuses:
            continue
        for i, qa in enumerate(record.qas):
            objects.append({
                "id": f"{record.sample_id}#{i}",
                "image": record.image_path,
                "conversations": [
                    {"from": "human", "value": f"<image>\n{qa.question}"},
                    {"from": "gpt", "value": qa.answer_text},
                ],
            })
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(objects, fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    return len(objects)


# ---------------------------------------------------------------------------
# ingestion of externally labeled real images


def ingest_labeled_images(manifest: Manifest, image_dir, labels_csv,
                          split: str = "train", category: str = "person.n.01",
                          resample: bool = False,
                          rng: Optional[np.random.Generator] = None,
                          templates: QaTemplateSet = DEFAULT_TEMPLATES,
                          qa_seed: int = 0) -> int:
    """Append real-image records from a labels CSV with columns
    ``image,orientation,viewpoint,shot`` (empty cells = unlabeled axis).

    With ``resample``, bins (keyed by the labeled class combination) are
    downsampled to the smallest bin count; without an rng the first rows in
    file order are kept.
    """
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    image_dir = os.path.abspath(image_dir)
    manifest_dir = os.path.dirname(os.path.abspath(manifest.path))

    rows = []
    with open(labels_csv, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"image", "orientation", "viewpoint", "shot"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"labels file missing columns: {sorted(missing)}")
        for row in reader:
            classes = {}
            for axis in AXES:
                value = (row.get(axis) or "").strip()
                if not value:
                    classes[axis] = None
                elif value not in _AXIS_CLASSES[axis]:
                    raise ValueError(f"unknown {axis} class {value!r} for {row['image']}")
                else:
                    classes[axis] = value
            path = os.path.join(image_dir, row["image"])
            if not os.path.exists(path):
                raise FileNotFoundError(f"labeled image not found: {path}")
            rows.append((row["image"], classes, path))

    if resample and rows:
        bins: dict[tuple, list] = {}
        for entry in rows:
            key = tuple(sorted((a, v) for a, v in entry[1].items() if v is not None))
            bins.setdefault(key, []).append(entry)
        floor = min(len(v) for v in bins.values())
        kept = []
        for key in sorted(bins):
            members = bins[key]
            if rng is not None:
                picks = rng.choice(len(members), size=floor, replace=False)
                members = [members[i] for i in sorted(picks)]
            else:
                members = members[:floor]
            kept.extend(members)
        rows = kept

    appended = 0
    for name, classes, path in rows:
        truth = {
            "Orientation": classes["orientation"],
            "Viewpoint": classes["viewpoint"],
            "Shot": classes["shot"],
        }
        sample_id = "real_" + os.path.splitext(name)[0]
        qa_rng = np.random.default_rng(
            int.from_bytes(hashlib.blake2b(f"{qa_seed}|{sample_id}".encode(),
                                           digest_size=8).digest(), "little"))
        qas = make_class_vqas(truth, category, qa_rng, templates, image_ref=sample_id)
        record = SampleRecord(
            sample_id=sample_id,
            category=category,
            image_path=os.path.relpath(path, manifest_dir),
            split=split,
            classes=classes,
            qas=qas,
        )
        manifest.append(record)
        appended += 1
    return appended
