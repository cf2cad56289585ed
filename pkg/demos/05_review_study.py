"""Run a scripted three-reviewer study over freshly generated samples.

Run:  python3 demos/05_review_study.py [outdir]

Each sample becomes a review task pairing its rendered prior with the
synthesized image. Three reviewers vote yes/no; the majority settles the
record's review status in the manifest. The interactive version of this
is the HTTP service plus the browser UI:

    python3 -m ultima.cli review-serve --manifest M --image-root DIR --static frontend/dist
"""

import sys

from ultima.config import PipelineConfig
from ultima.curation import ReviewSession, replay_stats, tasks_from_manifest
from ultima.dataset import Manifest
from ultima.pipeline import run_generate


def main():
    out_root = sys.argv[1] if len(sys.argv) > 1 else "demo_out/review"

    config = PipelineConfig(out_root=out_root, resolution=128,
                            orientations=("Front", "Back"),
                            viewpoints=("Horizontal",))
    run_generate(config)

    manifest = Manifest.load(config.manifest_path, writable=True)
    tasks = tasks_from_manifest(manifest, image_root=out_root)
    log_path = f"{out_root}/verdicts.jsonl"
    session = ReviewSession(tasks, manifest=manifest, log_path=log_path)
    print(f"{len(tasks)} tasks up for review")

    # Scripted panel: alice approves everything, bob rejects every fourth
    # task, carol every second. Majorities settle the records.
    reviewers = {
        "alice": lambda i: True,
        "bob": lambda i: i % 4 != 0,
        "carol": lambda i: i % 2 != 0,
    }
    for name, vote in reviewers.items():
        done = 0
        while True:
            task = session.next_task(name)
            if task is None:
                break
            idx = tasks.index(task)
            session.submit_verdict(task.task_id, name, vote(idx))
            done += 1
        print(f"{name} reviewed {done} tasks")

    stats = session.stats()
    print(f"\ncompleted {stats.completed_tasks}/{stats.total_tasks}, "
          f"success rate {stats.success_rate:.3f}, "
          f"agreement {stats.agreement_rate:.3f}")

    # The verdict log alone reproduces the same numbers (crash recovery).
    assert replay_stats(log_path, stats.total_tasks) == stats

    fresh = Manifest.load(config.manifest_path)
    by_review = {}
    for rec in fresh.records:
        by_review[rec.review] = by_review.get(rec.review, 0) + 1
    print("manifest review states:", dict(sorted(by_review.items())))


if __name__ == "__main__":
    main()
