"""Render the control priors for one asset at one relation and save PNGs.

Run:  python3 demos/02_prior_rendering.py [outdir]

Writes rgb / depth / mask / canny layers under outdir (default demo_out/priors).
"""

import math
import sys

import numpy as np

from ultima.assets import make_demo_catalog
from ultima.geometry import CameraObjectRelation, compute_camera_pose
from ultima.render import RenderConfig, render_priors, save_prior_pngs


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "demo_out/priors"

    catalog = make_demo_catalog()
    asset = catalog.get("pyramid")
    print(f"asset: {asset.id} ({asset.category}), extent {asset.extent:.3f}")

    beta = CameraObjectRelation(
        phi=math.radians(225.0), theta=math.radians(30.0), dist_rel=1.8)
    pose = compute_camera_pose(beta, asset.extent, asset.facing)
    print("camera position:", np.round(pose.position, 3))

    config = RenderConfig(resolution=512)
    prior = render_priors(asset.mesh, pose, config=config)
    print(f"rendered {prior.width}x{prior.height}:",
          f"{int(prior.mask.sum())} mask px,",
          f"{int(prior.canny.sum())} edge px,",
          f"depth range {np.nanmin(prior.depth):.3f}..{np.nanmax(prior.depth):.3f}")

    paths = save_prior_pngs(prior, out_dir, asset.id,
                            beta.phi, beta.theta, beta.dist_rel)
    for layer, rel in sorted(paths.items()):
        print(f"  {layer:6s} -> {out_dir}/{rel}")


if __name__ == "__main__":
    main()
