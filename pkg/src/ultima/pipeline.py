"""End-to-end generation: priors -> prompt -> image -> QAs -> manifest.

One sample per (asset, grid cell).  Sample ids are content addresses
(hash of asset id, class triple, attempt), so reruns skip finished work
and two runs of the same config write byte-identical manifests.  Worker
threads do the rendering and generation; manifest appends stay on the
caller's thread in job order, which keeps the output independent of
worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .assets import Asset, AssetCatalog, load_catalog, make_demo_catalog
from .config import PipelineConfig, resolve_class
from .dataset import Manifest, SampleRecord, config_digest
from .diffusion import GenerationConfig, build_request, generate
from .geometry import (
    CameraObjectRelation,
    DEFAULT_INTRINSICS,
    compute_camera_pose,
    enumerate_relation_grid,
)
from .llm import ChatClient, ChatConfig
from .prompts import ImageDescription, category_noun, compose_prompt, request_description
from .render import RenderConfig, prior_basename, render_priors, save_prior_pngs
from .vqa import make_template_vqas

logger = logging.getLogger("ultima.pipeline")


def sample_id_for(asset_id: str, beta: CameraObjectRelation, attempt: int = 0) -> str:
    """Content-addressed id from the class triple, not the raw angles."""
    key = "|".join([
        asset_id,
        beta.orientation.name,
        beta.viewpoint.name,
        beta.shot.name,
        str(attempt),
    ]).encode("utf-8")
    return hashlib.blake2b(key, digest_size=8).hexdigest()


def plan_cells(config: PipelineConfig) -> list:
    """The full 72-cell grid, filtered by any configured class restriction."""
    keep_o = {resolve_class("orientation", n) for n in config.orientations} or None
    keep_v = {resolve_class("viewpoint", n) for n in config.viewpoints} or None
    keep_s = {resolve_class("shot", n) for n in config.shots} or None
    cells = []
    for beta in enumerate_relation_grid():
        if keep_o is not None and beta.orientation not in keep_o:
            continue
        if keep_v is not None and beta.viewpoint not in keep_v:
            continue
        if keep_s is not None and beta.shot not in keep_s:
            continue
        cells.append(beta)
    return cells


def mock_description(category: str) -> ImageDescription:
    """Deterministic stand-in for the LLM description call."""
    noun = category_noun(category)
    return ImageDescription(
        object_sentence=f"A {noun} stands alone at the center of the frame.",
        scene_sentence="The background is a plain, evenly lit studio wall.",
        category=category,
    )


def load_pipeline_catalog(config: PipelineConfig) -> AssetCatalog:
    if config.catalog:
        return load_catalog(config.catalog)
    return make_demo_catalog()


@dataclass
class SampleOutcome:
    sample_id: str
    asset_id: str
    cell: tuple
    status: str          # written | skipped | failed
    error: str = ""
    elapsed_ms: float = 0.0

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "asset_id": self.asset_id,
            "cell": list(self.cell),
            "status": self.status,
            "error": self.error,
            "elapsed_ms": round(self.elapsed_ms, 3),
        }


def _qa_rng(qa_seed: int, sample_id: str) -> np.random.Generator:
    key = f"{qa_seed}|{sample_id}".encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def _build_sample(asset: Asset, beta: CameraObjectRelation, desc: ImageDescription,
                  config: PipelineConfig, gen_config: GenerationConfig) -> SampleRecord:
    """Render, generate and assemble one record. Raises on any failure."""
    sid = sample_id_for(asset.id, beta, config.attempt)
    pose = compute_camera_pose(beta, asset.extent, asset.facing)
    render_cfg = RenderConfig(resolution=config.resolution)
    prior = render_priors(asset.mesh, pose, DEFAULT_INTRINSICS, render_cfg)
    if prior.behind_camera or not prior.mask.any():
        raise RuntimeError(f"{sid}: nothing rendered for {asset.id} at {beta}")

    prior_rel = save_prior_pngs(prior, os.path.join(config.out_root, "priors"),
                                asset.id, beta.phi, beta.theta, beta.dist_rel)
    prior_paths = {layer: "priors/" + rel for layer, rel in prior_rel.items()}

    prompt = compose_prompt(desc, beta, negative=config.negative_prompt)
    request = build_request(prior, prompt, gen_config, asset_id=asset.id,
                            beta=beta, attempt=config.attempt)
    result = generate(request, endpoint=config.diffusion_endpoint)

    stem = prior_basename(beta.phi, beta.theta, beta.dist_rel)
    image_rel = os.path.join("images", asset.id, stem + ".png")
    image_full = os.path.join(config.out_root, image_rel)
    os.makedirs(os.path.dirname(image_full), exist_ok=True)
    Image.fromarray(result.image, mode="RGB").save(image_full)

    qas = make_template_vqas(beta, asset.category, _qa_rng(config.qa_seed, sid),
                             image_ref=image_rel)
    return SampleRecord(
        sample_id=sid,
        category=asset.category,
        image_path=image_rel,
        split=config.split,
        asset_id=asset.id,
        beta=beta,
        prompt=prompt,
        prior_paths=prior_paths,
        qas=qas,
        seed=request.seed,
        attempt=config.attempt,
    )


def run_generate(config: PipelineConfig, descriptions: dict = None) -> dict:
    """Walk asset x grid, appending finished samples to the manifest.

    Individual sample failures are logged to the progress file and do
    not stop the run.  ``descriptions`` can inject precomputed
    ImageDescriptions per asset id (tests, offline runs).
    """
    config.validate()
    catalog = load_pipeline_catalog(config)
    cells = plan_cells(config)
    os.makedirs(config.out_root, exist_ok=True)

    digest = config_digest(config.digest_dict())
    manifest = Manifest.open_or_create(config.manifest_path, digest)
    if manifest.meta.get("config_digest") not in ("", digest):
        manifest.close()
        raise RuntimeError(
            f"{config.manifest_path} was written with a different config; "
            "aim at a fresh out_root or restore the old config")

    descriptions = dict(descriptions or {})
    llm = None
    if config.llm_endpoint:
        llm = ChatClient(ChatConfig(endpoint=config.llm_endpoint, model=config.llm_model))
    for asset in catalog:
        if asset.id in descriptions:
            continue
        if llm is None:
            descriptions[asset.id] = mock_description(asset.category)
        else:
            descriptions[asset.id] = request_description(llm, asset.category)

    gen_config = GenerationConfig(
        steps=config.steps,
        depth_weight=config.depth_weight,
        canny_weight=config.canny_weight,
        width=config.resolution,
        height=config.resolution,
        use_depth=config.use_depth,
        use_canny=config.use_canny,
        seed=config.seed,
    )

    jobs = []
    skipped = 0
    outcomes = []
    for asset in catalog:
        for beta in cells:
            sid = sample_id_for(asset.id, beta, config.attempt)
            cell = (beta.orientation.display, beta.viewpoint.display, beta.shot.display)
            if sid in manifest:
                skipped += 1
                outcomes.append(SampleOutcome(sid, asset.id, cell, "skipped"))
                continue
            jobs.append((asset, beta, sid, cell))

    def work(job):
        asset, beta, sid, cell = job
        t0 = time.monotonic()
        try:
            record = _build_sample(asset, beta, descriptions[asset.id], config, gen_config)
            return record, SampleOutcome(sid, asset.id, cell, "written",
                                         elapsed_ms=(time.monotonic() - t0) * 1000.0)
        except Exception as exc:  # noqa: BLE001 - individual samples must not kill the run
            logger.warning("sample %s failed: %s", sid, exc)
            return None, SampleOutcome(sid, asset.id, cell, "failed", error=str(exc),
                                       elapsed_ms=(time.monotonic() - t0) * 1000.0)

    written = 0
    failed = 0
    progress = open(config.progress_path, "a", encoding="utf-8")
    try:
        with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
            # pool.map keeps job order, so appends land deterministically
            for record, outcome in pool.map(work, jobs):
                if record is not None:
                    try:
                        manifest.append(record)
                        written += 1
                    except Exception as exc:  # noqa: BLE001
                        logger.warning("append %s failed: %s", outcome.sample_id, exc)
                        outcome = SampleOutcome(outcome.sample_id, outcome.asset_id,
                                                outcome.cell, "failed", error=str(exc),
                                                elapsed_ms=outcome.elapsed_ms)
                if outcome.status == "failed":
                    failed += 1
                outcomes.append(outcome)
                progress.write(json.dumps(outcome.to_json(), sort_keys=True))
                progress.write("\n")
                progress.flush()
                logger.info("%s %s (%s)", outcome.status, outcome.sample_id,
                            "/".join(outcome.cell))
    finally:
        progress.close()
        manifest.close()

    summary = {
        "total": len(cells) * len(catalog),
        "written": written,
        "skipped": skipped,
        "failed": failed,
        "manifest": config.manifest_path,
    }
    logger.info("generate done: %s", summary)
    return summary
