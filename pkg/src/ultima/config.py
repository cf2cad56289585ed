"""Pipeline configuration: one JSON file, every knob with a default.

The defaults are the reference operating point (1024 px, 30 steps,
depth weight 0.5, canny weight 0.8); desk runs usually override the
resolution downward and leave the endpoints on their mock settings.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields

from .dataset import SPLITS
from .geometry import OrientationClass, ShotClass, ViewpointClass
from .prompts import DEFAULT_NEGATIVE_PROMPT


class ConfigError(ValueError):
    pass


def _canon(name: str) -> str:
    """Class-name key tolerant of spacing/hyphens: 'Close-up' == 'CloseUp'."""
    return "".join(c for c in name.lower() if c.isalnum())


_CLASS_LOOKUP = {
    "orientation": {_canon(c.display): c for c in OrientationClass},
    "viewpoint": {_canon(c.display): c for c in ViewpointClass},
    "shot": {_canon(c.display): c for c in ShotClass},
}
# enum-style spellings (CLOSE_UP, FrontLeft, ...) map to the same classes
for _axis, _table in _CLASS_LOOKUP.items():
    for _cls in list(_table.values()):
        _table.setdefault(_canon(_cls.name), _cls)


def resolve_class(axis: str, name: str):
    table = _CLASS_LOOKUP[axis]
    key = _canon(name)
    if key not in table:
        raise ConfigError(
            f"unknown {axis} class {name!r}; known: "
            + ", ".join(sorted({c.display for c in table.values()})))
    return table[key]


@dataclass
class PipelineConfig:
    # paths
    catalog: str = ""           # asset catalog file; empty uses the built-in demo shapes
    out_root: str = "out"
    # endpoints ("mock"/"" keep everything local and deterministic)
    diffusion_endpoint: str = "mock"
    llm_endpoint: str = ""
    llm_model: str = "gpt-4o"
    # generation settings
    resolution: int = 1024
    steps: int = 30
    depth_weight: float = 0.5
    canny_weight: float = 0.8
    use_depth: bool = True
    use_canny: bool = True
    negative_prompt: str = DEFAULT_NEGATIVE_PROMPT
    seed: int | None = None     # fixed diffusion seed; None derives one per sample
    attempt: int = 0
    qa_seed: int = 0
    # grid restriction by class name; empty tuple means the full axis
    orientations: tuple = ()
    viewpoints: tuple = ()
    shots: tuple = ()
    # dataset
    split: str = "train"
    # concurrency
    max_workers: int = 1

    def __post_init__(self):
        self.orientations = tuple(self.orientations)
        self.viewpoints = tuple(self.viewpoints)
        self.shots = tuple(self.shots)

    def validate(self) -> "PipelineConfig":
        if self.catalog and not os.path.exists(self.catalog):
            raise ConfigError(f"catalog file does not exist: {self.catalog}")
        if self.resolution < 16:
            raise ConfigError(f"resolution must be >= 16, got {self.resolution}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        for name, w in (("depth_weight", self.depth_weight), ("canny_weight", self.canny_weight)):
            if not 0.0 <= w <= 2.0:
                raise ConfigError(f"{name} must lie in [0, 2], got {w}")
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.max_workers < 1:
            raise ConfigError(f"max_workers must be >= 1, got {self.max_workers}")
        if self.attempt < 0:
            raise ConfigError(f"attempt must be >= 0, got {self.attempt}")
        for axis, names in (("orientation", self.orientations),
                            ("viewpoint", self.viewpoints),
                            ("shot", self.shots)):
            for n in names:
                resolve_class(axis, n)
        return self

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["orientations"] = list(self.orientations)
        doc["viewpoints"] = list(self.viewpoints)
        doc["shots"] = list(self.shots)
        return doc

    def digest_dict(self) -> dict:
        """Content-affecting keys only: where the run lands on disk and how
        many workers it uses must not change the manifest digest."""
        doc = self.to_dict()
        for key in ("catalog", "out_root", "max_workers"):
            doc.pop(key)
        return doc

    @property
    def manifest_path(self) -> str:
        return os.path.join(self.out_root, "manifest.jsonl")

    @property
    def progress_path(self) -> str:
        return os.path.join(self.out_root, "progress.jsonl")


_FIELD_NAMES = {f.name for f in fields(PipelineConfig)}


def config_from_dict(doc: dict) -> PipelineConfig:
    unknown = set(doc) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(**doc)


def load_config(path: str) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(doc)


def save_config(config: PipelineConfig, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
