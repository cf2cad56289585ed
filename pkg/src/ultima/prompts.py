"""Image-description requests and generation-prompt composition.

The system prompt sent for description generation is pinned byte-for-byte;
tests hold it against a golden copy. The final positive prompt is assembled
as: relation clause, object sentence, scene sentence, fixed quality clause.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .geometry import CameraObjectRelation

IMAGE_DESCRIPTION_SYSTEM_PROMPT = (
    "You are an expert in generating concise and diverse descriptions of an object"
    " to guide image generation model like DAll-E3. You should use your common"
    " sense to generate 1 sentence description of the given object. Additionally,"
    " you should also generate 1 sentence of a common real-world scene given the"
    " object. Both sentences of descriptions should not include more than one of"
    " the given object to avoid ambiguity.\n"
    "\n"
    "Example Input: Please generate the visual prompt of chicken.\n"
    "Example Output: A white and brown chicken standing in a cage made of metal"
    " bars. The chicken has a long, curved beak and its feathers are fluffy and"
    " white.\n"
)

DESCRIPTION_USER_TEMPLATE = "Please generate the visual prompt of {category}."

QUALITY_CLAUSE = "detailed, 4K, 35mm photograph, professional"

DEFAULT_NEGATIVE_PROMPT = "deformed, duplicate, lowres, bad anatomy, watermark, text"

RELATION_CLAUSE_TEMPLATE = "the image shows a {orientation}, {viewpoint}, {shot} view of a {noun}"

_ABBREVIATIONS = {"mr.", "mrs.", "ms.", "dr.", "st.", "no.", "vs.", "etc.", "e.g.", "i.e."}


def category_noun(category: str) -> str:
    """Plain noun from a synset-style label: 'police_van.n.01' -> 'police van'."""
    noun = category.split(".")[0]
    return noun.replace("_", " ").strip()


def split_sentences(text: str) -> list[str]:
    """Split on '. ' boundaries, keeping the periods, with a small
    abbreviation guard."""
    text = " ".join(text.split())
    out = []
    start = 0
    for m in re.finditer(r"\.\s+", text):
        word = text[start:m.start() + 1].rsplit(" ", 1)[-1].lower()
        if word in _ABBREVIATIONS:
            continue
        out.append(text[start:m.start() + 1].strip())
        start = m.end()
    tail = text[start:].strip()
    if tail:
        out.append(tail)
    return out


@dataclass(frozen=True)
class ImageDescription:
    object_sentence: str
    scene_sentence: str
    category: str

    def __post_init__(self):
        if not self.object_sentence or not self.scene_sentence:
            raise ValueError("both description sentences must be non-empty")
        if not self.category:
            raise ValueError("category must be non-empty")

    def ambiguity_flags(self) -> list[str]:
        """Sentences naming the category noun more than once, per contract."""
        noun = category_noun(self.category).lower()
        flags = []
        for name, sentence in (("object_sentence", self.object_sentence),
                               ("scene_sentence", self.scene_sentence)):
            if noun and sentence.lower().count(noun) > 1:
                flags.append(name)
        return flags


@dataclass(frozen=True)
class PromptBundle:
    positive: str
    negative: str
    relation_clause: str

    def __post_init__(self):
        if self.positive.count(self.relation_clause) != 1:
            raise ValueError("positive prompt must contain the relation clause exactly once")
        if self.positive.count(QUALITY_CLAUSE) != 1:
            raise ValueError("positive prompt must contain the quality clause exactly once")


def request_description(llm, category: str, parse_retries: int = 2) -> ImageDescription:
    """Ask the LLM for a two-sentence description of ``category``.

    Malformed replies (fewer than two sentences) are retried up to
    ``parse_retries`` extra times before failing with the raw reply attached.
    Replies with surplus sentences fold the extras into the scene sentence.
    """
    from .llm import BadReplyError

    if not category:
        raise ValueError("category must be non-empty")
    user = DESCRIPTION_USER_TEMPLATE.format(category=category_noun(category))
    raw = ""
    for _ in range(parse_retries + 1):
        raw = llm.complete(IMAGE_DESCRIPTION_SYSTEM_PROMPT, user)
        sentences = split_sentences(raw)
        if len(sentences) >= 2:
            return ImageDescription(object_sentence=sentences[0],
                                    scene_sentence=" ".join(sentences[1:]),
                                    category=category)
    raise BadReplyError(f"could not split a two-sentence description for {category!r}", raw=raw)


def relation_clause(beta: CameraObjectRelation, category: str) -> str:
    return RELATION_CLAUSE_TEMPLATE.format(
        orientation=beta.orientation.display.lower(),
        viewpoint=beta.viewpoint.display.lower(),
        shot=beta.shot.display.lower(),
        noun=category_noun(category))


def compose_prompt(desc: ImageDescription, beta: CameraObjectRelation,
                   negative: str = DEFAULT_NEGATIVE_PROMPT) -> PromptBundle:
    """Deterministic positive/negative prompt pair for one (description, beta)."""
    clause = relation_clause(beta, desc.category)
    positive = f"{clause}. {desc.object_sentence} {desc.scene_sentence} {QUALITY_CLAUSE}"
    return PromptBundle(positive=positive, negative=negative, relation_clause=clause)
