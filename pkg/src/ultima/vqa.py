"""Ground-truth-bound VQA items from camera-object relations.

Two sources: deterministic multiple-choice templates (the offline path used
for dataset builds) and an LLM prompted with a pinned system prompt plus a
per-image description block, whose delimited reply is parsed and run through
a consistency gate against the known relation classes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import CameraObjectRelation, OrientationClass, ShotClass, ViewpointClass
from .prompts import category_noun

logger = logging.getLogger(__name__)

TASKS = ("Orientation", "Viewpoint", "Shot")

VQA_SYSTEM_PROMPT = """You are an AI visual assistant, and you are seeing a single image. What you see are provided with several sentences, describing the same image you are looking at. Answer all questions as you are seeing the image.

Design a conversation between you and a person asking about this photo. The answers should be in a tone that a visual AI assistant is seeing the image and answering the question.
Ask diverse questions and give corresponding answers.

Include questions asking about the visual content of the image, including the object orientation and its corresponding azimuth degree, the camera viewpoint of the image and corresponding camera elevation angle, the camera shot type of the image and the distance from camera to the target object. Only include questions that have definite answers:
(1) one can see the content and its orientation degree in the image that the question asks about and can answer confidently;
(2) one can recognize camera viewpoint and camera shot of the image that the question asks about and can answer confidently;
The question can be multiple choice questions given the choice, or open-ended questions. For multiple choice, the option expression can be diverse but with the same meaning. For example, "front" also means "directly towards the camera"; 'back' also means 'away from the camera', etc. Use the common sense to make options diverse if possible.
Provide at most 5 pairs of question and answer pairs. Prior the confident questions. Do not ask any question that cannot be answered confidently.

You should ask questions from multiple QA templates as the below examples show.

Example Input Description:
The image shows a front view of police van. A blue and white police van with the word "POLICE" emblazoned on the side is parked on a city street. Nearby, a couple of officers are discussing a recent incident while pedestrians walk by, some glancing curiously at the vehicle.
The police van is with an azimuth of 181.518 degree, facing Front direction.
The elevation angle of the camera to the police van is 81.41 degree, the camera viewpoint is Horizontal view.
The relative distance from the camera to the police van is 1.132 meters, the camera shot type is Close-up.

Example Output Question and Answer Pairs:
Question:
From the camera's perspective, is the police van in the picture facing straight or oriented at an angle? Options: (a) Directly towards the camera (b) At an angle
===
Answer:
(a) Directly towards the camera
===
Question:
Is the police van in the picture facing the camera or away from the camera? Options: (a) Away from the camera (b) Facing the camera
===
Answer:
(b) Facing the camera
===
Question:
Which direction is the police van facing in the image? Options: (1) Back (2) Front
===
Answer:
(2) Front
===
Question:
Is the police van facing back or front from the camera's perspective? Options: (a) Back (b) Front
===
Answer:
(b) Front
===
Question:
Is the photo taken directly above the police van or from the side? Options: (a) Taken directly (b) From the side
===
Answer:
(b) From the side
===
Question:
Is the photo taken far away the police van or taken closely?
===
Answer:
The relative distance from the camera to the police van is 1.132 meters, thus it is with a close-up shot. This indicates the photo is taken closely.
===
Question:
What is the elevation viewpoint of the image? Options: (1) Top (2) Horizontal (3) Bottom
===
Answer:
(2) Horizontal
===
Question:
Which camera shots is the image? Options: (1) Close-up (2) Medium-shot (3) Long-shot
===
Answer:
(1) Close-up"""

_TASK_CLASSES = {
    "Orientation": [cls.display for cls in OrientationClass],
    "Viewpoint": [cls.display for cls in ViewpointClass],
    "Shot": [cls.display for cls in ShotClass],
}


class QaParseError(ValueError):
    def __init__(self, message: str, segment_index: int):
        super().__init__(f"segment {segment_index}: {message}")
        self.segment_index = segment_index


@dataclass(frozen=True)
class VqaItem:
    task: str
    question: str
    options: tuple
    answer_index: int
    image_ref: str = ""
    free_answer: str = ""  # open-ended items only (options empty)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.options:
            if len(set(self.options)) != len(self.options):
                raise ValueError("options must be pairwise distinct")
            if not 0 <= self.answer_index < len(self.options):
                raise ValueError("answer_index out of range")
            expected = 8 if self.task == "Orientation" else 3
            if len(self.options) != expected:
                raise ValueError(f"{self.task} items need {expected} options, got {len(self.options)}")
        elif not self.free_answer:
            raise ValueError("open-ended items need a free_answer")

    @property
    def answer_text(self) -> str:
        return self.options[self.answer_index] if self.options else self.free_answer


@dataclass(frozen=True)
class QaTemplateSet:
    orientation: tuple = (
        "Which direction is the {category} facing in the image?",
        "What is the orientation of the {category} from the camera's perspective?",
        "Toward which direction is the {category} oriented in this photo?",
        "From the camera's viewpoint, which way does the {category} face?",
    )
    viewpoint: tuple = (
        "What is the elevation viewpoint of the image?",
        "From which camera elevation was this photo of the {category} taken?",
        "Is the photo of the {category} taken from a top, horizontal, or bottom view?",
        "What camera viewpoint best describes this image of the {category}?",
    )
    shot: tuple = (
        "Which camera shot type is the image of the {category}?",
        "Is the {category} captured in a close-up, medium-shot, or long-shot?",
        "What is the camera shot type of this image?",
        "How close is the camera shot of the {category}?",
    )

    def __post_init__(self):
        for name in ("orientation", "viewpoint", "shot"):
            if not getattr(self, name):
                raise ValueError(f"need at least one {name} template")

    def for_task(self, task: str) -> tuple:
        return {"Orientation": self.orientation, "Viewpoint": self.viewpoint,
                "Shot": self.shot}[task]


DEFAULT_TEMPLATES = QaTemplateSet()


def _format_options(options: Sequence[str]) -> str:
    return " ".join(f"({i + 1}) {opt}" for i, opt in enumerate(options))


def make_class_vqas(truth: dict, category: str, rng: np.random.Generator,
                    templates: QaTemplateSet = DEFAULT_TEMPLATES,
                    image_ref: str = "") -> list[VqaItem]:
    """One multiple-choice item per task present in ``truth`` (a mapping of
    task name to ground-truth class display name); options shuffled by rng."""
    noun = category_noun(category)
    items = []
    for task in TASKS:
        if task not in truth or truth[task] is None:
            continue
        if truth[task] not in _TASK_CLASSES[task]:
            raise ValueError(f"unknown {task} class {truth[task]!r}")
        pool = templates.for_task(task)
        template = pool[int(rng.integers(len(pool)))]
        classes = _TASK_CLASSES[task]
        order = rng.permutation(len(classes))
        options = tuple(classes[i] for i in order)
        answer_index = options.index(truth[task])
        question = template.format(category=noun) + " Options: " + _format_options(options)
        items.append(VqaItem(task=task, question=question, options=options,
                             answer_index=answer_index, image_ref=image_ref))
    return items


def make_template_vqas(beta: CameraObjectRelation, category: str,
                       rng: np.random.Generator,
                       templates: QaTemplateSet = DEFAULT_TEMPLATES,
                       image_ref: str = "") -> list[VqaItem]:
    """Three multiple-choice items (one per task), options shuffled by rng."""
    truth = {
        "Orientation": beta.orientation.display,
        "Viewpoint": beta.viewpoint.display,
        "Shot": beta.shot.display,
    }
    return make_class_vqas(truth, category, rng, templates, image_ref)


# ---------------------------------------------------------------------------
# LLM-sourced QAs


def parse_llm_qa_block(text: str) -> list[tuple[str, str]]:
    """Parse the delimited reply format: segments separated by lines that are
    exactly \"===\", alternating Question:/Answer: marked blocks."""
    if not text.strip():
        return []
    segments = []
    current: list[str] = []
    for line in text.split("\n"):
        if line.strip() == "===":
            segments.append("\n".join(current))
            current = []
        else:
            current.append(line)
    segments.append("\n".join(current))
    # tolerate blank leading/trailing chunks from stray separators
    while segments and not segments[0].strip():
        segments.pop(0)
    while segments and not segments[-1].strip():
        segments.pop()

    def strip_marker(seg: str, marker: str, index: int) -> str:
        body = seg.strip()
        if not body.startswith(marker):
            raise QaParseError(f"expected {marker!r}", index)
        return body[len(marker):].strip()

    if len(segments) % 2:
        raise QaParseError("question without a matching answer", len(segments) - 1)
    pairs = []
    for i in range(0, len(segments), 2):
        question = strip_marker(segments[i], "Question:", i)
        answer = strip_marker(segments[i + 1], "Answer:", i + 1)
        pairs.append((question, answer))
    return pairs


def _mentioned_classes(text: str, classes: Sequence[str]) -> set[str]:
    """Class names appearing in text, longest names claimed first so 'Front
    Left' does not also count as 'Front' and 'Left'."""
    found = set()
    remaining = text.lower()
    for name in sorted(classes, key=len, reverse=True):
        if name.lower() in remaining:
            found.add(name)
            remaining = remaining.replace(name.lower(), " ")
    return found


def answer_consistent_with(beta: CameraObjectRelation, answer: str) -> bool:
    """False when the answer names a class that contradicts the relation."""
    truth = {
        "Orientation": beta.orientation.display,
        "Viewpoint": beta.viewpoint.display,
        "Shot": beta.shot.display,
    }
    for task, classes in _TASK_CLASSES.items():
        mentioned = _mentioned_classes(answer, classes)
        if mentioned and truth[task] not in mentioned:
            return False
    return True


def relation_description_block(category: str, beta: CameraObjectRelation,
                               numeric: dict, description: str = "") -> str:
    """User message shaped like the system prompt's example input."""
    noun = category_noun(category)
    first = f"The image shows a {beta.orientation.display.lower()} view of {noun}."
    if description:
        first += f" {description}"
    return "\n".join([
        first,
        f"The {noun} is with an azimuth of {numeric['phi_deg']:g} degree, "
        f"facing {beta.orientation.display} direction.",
        f"The elevation angle of the camera to the {noun} is {numeric['theta_deg']:g} degree, "
        f"the camera viewpoint is {beta.viewpoint.display} view.",
        f"The relative distance from the camera to the {noun} is {numeric['dist']:g} meters, "
        f"the camera shot type is {beta.shot.display}.",
    ])


def request_llm_vqas(llm, category: str, beta: CameraObjectRelation,
                     numeric: dict, description: str = "") -> list[tuple[str, str]]:
    """Ask the LLM for QA pairs; drop pairs contradicting the known classes."""
    block = relation_description_block(category, beta, numeric, description)
    reply = llm.complete(VQA_SYSTEM_PROMPT, block)
    pairs = parse_llm_qa_block(reply)
    kept = []
    for question, answer in pairs:
        if answer_consistent_with(beta, answer):
            kept.append((question, answer))
        else:
            logger.warning("dropping inconsistent QA: %r -> %r", question[:60], answer[:60])
    return kept
