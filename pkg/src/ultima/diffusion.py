"""Generation-request contract for the image backend, plus a mock backend.

A request is one JSON document: prompt, negative_prompt, steps, seed,
width/height, and a list of control units (kind, weight, base64 PNG). The
real backend is any HTTP service speaking this format; the mock backend
renders a deterministic composite locally so the whole pipeline runs and is
testable offline.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import requests
from PIL import Image

from .geometry import CameraObjectRelation
from .prompts import PromptBundle
from .render import PriorSet

DEFAULT_STEPS = 30
DEFAULT_DEPTH_WEIGHT = 0.5
DEFAULT_CANNY_WEIGHT = 0.8
DEFAULT_SIZE = 1024

CONTROL_KINDS = ("depth", "canny")


class ProtocolError(RuntimeError):
    pass


def png_to_b64(gray_or_rgb: np.ndarray) -> str:
    mode = "L" if gray_or_rgb.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(gray_or_rgb, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def b64_to_array(b64: str) -> np.ndarray:
    img = Image.open(io.BytesIO(base64.b64decode(b64)))
    return np.asarray(img)


@dataclass(frozen=True)
class ControlInput:
    kind: str
    image: np.ndarray
    weight: float

    def __post_init__(self):
        if self.kind not in CONTROL_KINDS:
            raise ValueError(f"control kind must be one of {CONTROL_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.weight <= 2.0:
            raise ValueError(f"control weight must lie in [0, 2], got {self.weight}")
        if self.image.ndim != 2 or self.image.dtype != np.uint8:
            raise ValueError("control image must be 8-bit grayscale")


@dataclass(frozen=True)
class GenerationRequest:
    positive: str
    negative: str
    controls: tuple
    steps: int
    seed: int
    width: int
    height: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.positive:
            raise ValueError("positive prompt required")
        for c in self.controls:
            if c.image.shape != (self.height, self.width):
                raise ValueError(
                    f"{c.kind} control is {c.image.shape}, request is "
                    f"{(self.height, self.width)}")


@dataclass
class GenerationResult:
    image: np.ndarray
    backend_id: str
    elapsed: float  # milliseconds


@dataclass
class GenerationConfig:
    steps: int = DEFAULT_STEPS
    depth_weight: float = DEFAULT_DEPTH_WEIGHT
    canny_weight: float = DEFAULT_CANNY_WEIGHT
    width: int = DEFAULT_SIZE
    height: int = DEFAULT_SIZE
    use_depth: bool = True
    use_canny: bool = True
    seed: Optional[int] = None  # None derives per asset/relation


def derive_seed(asset_id: str, beta: CameraObjectRelation, attempt: int = 0) -> int:
    """Stable 64-bit seed from the asset and the class triple (not raw angles,
    so regenerating a bin representative reuses the seed)."""
    key = "|".join([asset_id, beta.orientation.name, beta.viewpoint.name,
                    beta.shot.name, str(attempt)])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def build_request(prior: PriorSet, prompt: PromptBundle, config: GenerationConfig,
                  asset_id: str = "", beta: Optional[CameraObjectRelation] = None,
                  attempt: int = 0) -> GenerationRequest:
    """Assemble a request from rendered priors and a composed prompt."""
    controls = []
    if config.use_depth:
        if prior.depth_control is None:
            raise ValueError("prior is missing depth_control; run encode_depth_control")
        controls.append(ControlInput(kind="depth", image=prior.depth_control,
                                     weight=config.depth_weight))
    if config.use_canny:
        if prior.canny is None:
            raise ValueError("prior is missing canny; run the canny pass")
        controls.append(ControlInput(kind="canny",
                                     image=prior.canny.astype(np.uint8) * 255,
                                     weight=config.canny_weight))
    if config.seed is not None:
        seed = config.seed
    elif beta is not None:
        seed = derive_seed(asset_id, beta, attempt)
    else:
        raise ValueError("need either config.seed or beta for seed derivation")
    return GenerationRequest(positive=prompt.positive, negative=prompt.negative,
                             controls=tuple(controls), steps=config.steps, seed=seed,
                             width=prior.width, height=prior.height)


def serialize_request(request: GenerationRequest) -> str:
    doc = {
        "prompt": request.positive,
        "negative_prompt": request.negative,
        "steps": request.steps,
        "seed": request.seed,
        "width": request.width,
        "height": request.height,
        "control_units": [
            {"kind": c.kind, "weight": c.weight, "image_b64_png": png_to_b64(c.image)}
            for c in request.controls
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def parse_request(text: str) -> GenerationRequest:
    doc = json.loads(text)
    controls = tuple(
        ControlInput(kind=u["kind"], image=b64_to_array(u["image_b64_png"]),
                     weight=u["weight"])
        for u in doc.get("control_units", []))
    return GenerationRequest(positive=doc["prompt"], negative=doc["negative_prompt"],
                             controls=controls, steps=doc["steps"], seed=doc["seed"],
                             width=doc["width"], height=doc["height"])


# ---------------------------------------------------------------------------
# mock backend


def mock_generate(request: GenerationRequest) -> GenerationResult:
    """Deterministic offline backend.

    Background: seeded uniform noise blended toward a tint derived from the
    positive prompt. Overlay: canny edges painted white, then the depth
    control pasted into the green channel wherever it is nonzero, so the
    depth bytes survive verbatim for downstream checks.
    """
    start = time.monotonic()
    rng = np.random.default_rng(request.seed % (1 << 64))
    noise = rng.integers(0, 256, size=(request.height, request.width, 3))
    tint_bytes = hashlib.blake2b(request.positive.encode("utf-8"), digest_size=3).digest()
    tint = np.array(list(tint_bytes), dtype=np.float64)
    img = (0.5 * noise + 0.5 * tint).astype(np.uint8)

    for control in request.controls:
        if control.kind == "canny":
            img[control.image > 127] = 255
    for control in request.controls:
        if control.kind == "depth":
            masked = control.image > 0
            img[..., 1] = np.where(masked, control.image, img[..., 1])

    return GenerationResult(image=img, backend_id="mock",
                            elapsed=(time.monotonic() - start) * 1000.0)


# ---------------------------------------------------------------------------
# HTTP backend


def generate(request: GenerationRequest, endpoint: Optional[str] = None,
             session=None, max_retries: int = 3, timeout: float = 300.0,
             retry_wait: float = 1.0) -> GenerationResult:
    """Submit a request. ``endpoint`` None or \"mock\" runs the local mock."""
    if endpoint in (None, "", "mock"):
        return mock_generate(request)

    session = session or requests.Session()
    body = serialize_request(request)
    start = time.monotonic()
    last_error = None
    for attempt in range(max_retries):
        try:
            resp = session.post(endpoint, data=body,
                                headers={"Content-Type": "application/json"},
                                timeout=timeout)
        except requests.RequestException as exc:
            last_error = exc
            time.sleep(retry_wait * (attempt + 1))
            continue
        if resp.status_code >= 500:
            last_error = RuntimeError(f"backend error {resp.status_code}: {resp.text[:500]}")
            time.sleep(retry_wait * (attempt + 1))
            continue
        if resp.status_code != 200:
            raise ProtocolError(f"backend returned {resp.status_code}: {resp.text[:500]}")
        doc = resp.json()
        image = b64_to_array(doc["image_b64_png"])
        if image.shape[:2] != (request.height, request.width):
            raise ProtocolError(
                f"backend returned {image.shape[:2]}, requested {(request.height, request.width)}")
        return GenerationResult(image=image, backend_id=str(doc.get("backend_id", endpoint)),
                                elapsed=(time.monotonic() - start) * 1000.0)
    raise ProtocolError(f"backend failed after {max_retries} attempts: {last_error}")
