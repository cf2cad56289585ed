"""Score mock responders on a generated benchmark and print the report.

Run:  python3 demos/04_benchmark_eval.py [outdir]

Generates a small benchmark split first (mock backends), then runs three
built-in responders over it: ground truth, uniform random, and a constant
answer. The same flow is available as

    python3 -m ultima.cli eval --manifest M --model mock:random --statuses pending
"""

import sys

from ultima.config import PipelineConfig
from ultima.dataset import Manifest
from ultima.evaluate import (
    ConstantResponder,
    PerfectResponder,
    RandomResponder,
    compute_report,
    grade_responses,
    render_report,
    run_benchmark,
)
from ultima.pipeline import run_generate


def main():
    out_root = sys.argv[1] if len(sys.argv) > 1 else "demo_out/benchmark"

    config = PipelineConfig(out_root=out_root, resolution=256,
                            split="benchmark", shots=("MediumShot",))
    run_generate(config)
    manifest = Manifest.load(config.manifest_path)
    statuses = ("pending", "accepted")  # nothing is human-reviewed yet

    responders = [
        ("ground truth", PerfectResponder()),
        ("uniform random", RandomResponder(seed=1)),
        ("always 'Front Left'", ConstantResponder("Front Left")),
    ]
    for name, model in responders:
        responses = run_benchmark(model, manifest, image_root=out_root,
                                  statuses=statuses)
        graded = grade_responses(manifest, responses, statuses=statuses)
        report = compute_report(graded)
        print(f"\n=== {name} ===")
        print(render_report(report))


if __name__ == "__main__":
    main()
