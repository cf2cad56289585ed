"""Command line front end: every pipeline stage as a subcommand."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict

import numpy as np

from .config import ConfigError, PipelineConfig, load_config, resolve_class
from .curation import (
    CurationError,
    ReviewSession,
    build_server,
    replay_stats,
    tasks_from_manifest,
)
from .dataset import (
    Manifest,
    ManifestError,
    check_balance,
    export_instruction_json,
    ingest_labeled_images,
)
from .evaluate import (
    ConstantResponder,
    PerfectResponder,
    RandomResponder,
    VisionChatClient,
    compute_report,
    grade_responses,
    render_report,
    run_benchmark,
)
from .geometry import CameraObjectRelation, GridSpec, compute_camera_pose
from .llm import ChatClient, ChatConfig
from .pipeline import load_pipeline_catalog, run_generate
from .render import RenderConfig, render_priors, save_prior_pngs
from .vqa import make_template_vqas, relation_description_block, request_llm_vqas

logger = logging.getLogger("ultima.cli")


def _relation_from_args(args) -> CameraObjectRelation:
    """Either numeric (--phi-deg/--theta-deg/--dist) or class names."""
    numeric = [args.phi_deg, args.theta_deg, args.dist]
    if any(v is not None for v in numeric):
        if any(v is None for v in numeric):
            raise ConfigError("--phi-deg, --theta-deg and --dist go together")
        return CameraObjectRelation(phi=math.radians(args.phi_deg),
                                    theta=math.radians(args.theta_deg),
                                    dist_rel=args.dist)
    names = [args.orientation, args.viewpoint, args.shot]
    if any(n is None for n in names):
        raise ConfigError("give --phi-deg/--theta-deg/--dist or all of "
                          "--orientation/--viewpoint/--shot")
    spec = GridSpec()
    return CameraObjectRelation(
        phi=spec.orientation_reps[resolve_class("orientation", args.orientation)],
        theta=spec.viewpoint_reps[resolve_class("viewpoint", args.viewpoint)],
        dist_rel=spec.shot_reps[resolve_class("shot", args.shot)],
    )


def _add_relation_args(sub):
    sub.add_argument("--phi-deg", type=float, default=None,
                     help="object orientation azimuth in degrees")
    sub.add_argument("--theta-deg", type=float, default=None,
                     help="camera elevation in degrees")
    sub.add_argument("--dist", type=float, default=None, help="relative distance")
    sub.add_argument("--orientation", default=None, help="orientation class name")
    sub.add_argument("--viewpoint", default=None, help="viewpoint class name")
    sub.add_argument("--shot", default=None, help="shot class name")


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate(args) -> int:
    config = load_config(args.config) if args.config else PipelineConfig()
    if args.out:
        config.out_root = args.out
    if args.catalog:
        config.catalog = args.catalog
    if args.resolution:
        config.resolution = args.resolution
    if args.workers:
        config.max_workers = args.workers
    if args.split:
        config.split = args.split
    if args.mock:
        config.diffusion_endpoint = "mock"
        config.llm_endpoint = ""
    summary = run_generate(config)
    json.dump(summary, sys.stdout)
    sys.stdout.write("\n")
    return 0


def cmd_ingest(args) -> int:
    manifest = Manifest.open_or_create(args.manifest)
    try:
        rng = np.random.default_rng(args.seed) if args.resample else None
        n = ingest_labeled_images(manifest, args.images, args.labels,
                                  split=args.split, category=args.category,
                                  resample=args.resample, rng=rng,
                                  qa_seed=args.qa_seed)
    finally:
        manifest.close()
    json.dump({"ingested": n, "manifest": args.manifest}, sys.stdout)
    sys.stdout.write("\n")
    return 0


def cmd_render_priors(args) -> int:
    catalog = load_pipeline_catalog(
        PipelineConfig(catalog=args.catalog or ""))
    asset = catalog.get(args.asset)
    beta = _relation_from_args(args)
    pose = compute_camera_pose(beta, asset.extent, asset.facing)
    prior = render_priors(asset.mesh, pose,
                          config=RenderConfig(resolution=args.resolution))
    paths = save_prior_pngs(prior, args.out, asset.id,
                            beta.phi, beta.theta, beta.dist_rel)
    json.dump({"out": args.out, "paths": paths,
               "behind_camera": prior.behind_camera}, sys.stdout)
    sys.stdout.write("\n")
    return 0


def cmd_vqa(args) -> int:
    beta = _relation_from_args(args)
    rng = np.random.default_rng(args.seed)
    items = make_template_vqas(beta, args.category, rng, image_ref=args.image)
    doc = {
        "template": [
            {"task": it.task, "question": it.question, "options": list(it.options),
             "answer_index": it.answer_index, "answer": it.answer_text}
            for it in items
        ],
        "llm": [],
    }
    if args.llm_endpoint:
        llm = ChatClient(ChatConfig(endpoint=args.llm_endpoint, model=args.llm_model))
        numeric = {"phi_deg": math.degrees(beta.phi),
                   "theta_deg": math.degrees(beta.theta),
                   "dist": beta.dist_rel}
        pairs = request_llm_vqas(llm, args.category, beta, numeric)
        doc["llm"] = [{"question": q, "answer": a} for q, a in pairs]
    json.dump(doc, sys.stdout, indent=2, ensure_ascii=False)
    sys.stdout.write("\n")
    return 0


def cmd_balance(args) -> int:
    manifest = Manifest.load(args.manifest)
    report = check_balance(manifest, split=args.split, tolerance=args.tolerance)
    json.dump(asdict(report), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0 if report.uniform else 2


def cmd_export(args) -> int:
    manifest = Manifest.load(args.manifest)
    statuses = tuple(args.statuses.split(",")) if args.statuses else None
    n = export_instruction_json(manifest, args.split, args.out, statuses=statuses)
    json.dump({"exported": n, "out": args.out}, sys.stdout)
    sys.stdout.write("\n")
    return 0


def _model_from_spec(spec: str, model_name: str):
    if spec == "mock:perfect":
        return PerfectResponder()
    if spec == "mock:random" or spec.startswith("mock:random:"):
        parts = spec.split(":")
        return RandomResponder(seed=int(parts[2]) if len(parts) > 2 else 0)
    if spec.startswith("mock:constant:"):
        return ConstantResponder(spec[len("mock:constant:"):])
    if spec.startswith("mock"):
        raise ConfigError(f"unknown mock model {spec!r}; use mock:perfect, "
                          "mock:random[:SEED] or mock:constant:TEXT")
    return VisionChatClient(ChatConfig(endpoint=spec, model=model_name))


def cmd_eval(args) -> int:
    manifest = Manifest.load(args.manifest)
    model = _model_from_spec(args.model, args.model_name)
    statuses = tuple(args.statuses.split(",")) if args.statuses else ("accepted",)
    responses = run_benchmark(model, manifest, image_root=args.image_root,
                              statuses=statuses, limit=args.limit,
                              out_path=args.responses, max_workers=args.workers)
    judge = None
    if args.grader == "llm":
        if not args.judge_endpoint:
            raise ConfigError("--grader llm needs --judge-endpoint")
        judge = ChatClient(ChatConfig(endpoint=args.judge_endpoint, model=args.judge_model))
    graded = grade_responses(manifest, responses, grader=args.grader, judge=judge,
                             statuses=statuses)
    report = compute_report(graded)
    sys.stdout.write(render_report(report))
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2)
            fh.write("\n")
    return 0


def cmd_review_serve(args) -> int:
    manifest = Manifest.load(args.manifest, writable=True)
    try:
        splits = tuple(args.splits.split(",")) if args.splits else None
        tasks = tasks_from_manifest(manifest, image_root=args.image_root,
                                    splits=splits,
                                    require_files=not args.no_require_files)
        session = ReviewSession(tasks, manifest=manifest, log_path=args.log,
                                lease_timeout=args.lease_timeout, seed=args.seed)
        server = build_server(session, host=args.host, port=args.port,
                              image_root=args.image_root, static_dir=args.static,
                              verbose=args.verbose)
        host, port = server.server_address[:2]
        logger.info("serving %d review tasks on http://%s:%d/", len(tasks), host, port)
        print(f"http://{host}:{port}/", file=sys.stderr, flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.shutdown()
            server.server_close()
    finally:
        manifest.close()
    return 0


def cmd_stats(args) -> int:
    stats = replay_stats(args.log, total_tasks=args.total)
    json.dump(stats.to_json(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ultima",
        description="Synthetic camera-relation dataset tooling: generation, "
                    "ingestion, balancing, export, evaluation and review.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="run the full pipeline over asset x grid")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out", default=None, help="output root override")
    p.add_argument("--catalog", default=None, help="asset catalog override")
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--split", default=None, choices=("train", "benchmark"))
    p.add_argument("--mock", action="store_true",
                   help="force mock diffusion and canned descriptions")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", help="append labeled real images to a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", required=True, help="directory of image files")
    p.add_argument("--labels", required=True, help="CSV: image,orientation,viewpoint,shot")
    p.add_argument("--split", default="train", choices=("train", "benchmark"))
    p.add_argument("--category", default="person.n.01")
    p.add_argument("--resample", action="store_true",
                   help="downsample every labeled bin to the smallest bin")
    p.add_argument("--seed", type=int, default=0, help="resampling rng seed")
    p.add_argument("--qa-seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("render-priors", help="render depth/rgb/mask/canny for one pose")
    p.add_argument("--catalog", default=None)
    p.add_argument("--asset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int, default=512)
    _add_relation_args(p)
    p.set_defaults(func=cmd_render_priors)

    p = sub.add_parser("vqa", help="emit QA items for one relation")
    p.add_argument("--category", default="person.n.01")
    p.add_argument("--image", default="", help="image_ref recorded on the items")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--llm-endpoint", default=None,
                   help="also request free-form QA pairs from this LLM endpoint")
    p.add_argument("--llm-model", default="gpt-4o")
    _add_relation_args(p)
    p.set_defaults(func=cmd_vqa)

    p = sub.add_parser("balance", help="check class balance of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--tolerance", type=float, default=1.0,
                   help="max/min count ratio still considered uniform")
    p.set_defaults(func=cmd_balance)

    p = sub.add_parser("export", help="write instruction-tuning JSON for a split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True, choices=("train", "benchmark"))
    p.add_argument("--out", required=True)
    p.add_argument("--statuses", default=None,
                   help="comma list overriding the review-status gate")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("eval", help="run a model over the benchmark and grade it")
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-root", default=".")
    p.add_argument("--model", required=True,
                   help="endpoint URL, or mock:perfect / mock:random[:SEED] / "
                        "mock:constant:TEXT")
    p.add_argument("--model-name", default="gpt-4o", help="model field for endpoints")
    p.add_argument("--responses", default=None,
                   help="JSONL file for raw replies (enables resume)")
    p.add_argument("--report", default=None, help="write the JSON report here")
    p.add_argument("--grader", default="matcher", choices=("matcher", "llm"))
    p.add_argument("--judge-endpoint", default=None)
    p.add_argument("--judge-model", default="gpt-4o")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--statuses", default=None, help="comma list, default accepted")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("review-serve", help="serve the human review API and UI")
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-root", default=".")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--static", default=None, help="directory with the built review UI")
    p.add_argument("--log", default=None, help="verdict JSONL log (enables resume)")
    p.add_argument("--lease-timeout", type=float, default=600.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--splits", default=None, help="comma list of splits to review")
    p.add_argument("--no-require-files", action="store_true",
                   help="skip the image existence check at startup")
    p.set_defaults(func=cmd_review_serve)

    p = sub.add_parser("stats", help="recompute review stats from a verdict log")
    p.add_argument("--log", required=True)
    p.add_argument("--total", type=int, default=0, help="total task count to report")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ManifestError, CurationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
