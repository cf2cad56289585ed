"""Walk through the camera-object relation: classify, enumerate, round-trip.

Run:  python3 demos/01_camera_relations.py
"""

import math

import numpy as np

from ultima.geometry import (
    CameraObjectRelation,
    compute_camera_pose,
    enumerate_relation_grid,
    recover_relation,
    sample_relation,
)


def main():
    # A relation is (azimuth phi, elevation theta, relative distance).
    # Classification buckets it into 8 orientations x 3 viewpoints x 3 shots.
    def caption(b):
        return " / ".join([b.orientation.display, b.viewpoint.display,
                           b.shot.display])

    beta = CameraObjectRelation(
        phi=math.radians(181.518), theta=math.radians(10.0), dist_rel=1.132)
    print("relation:", beta)
    print("classes: ", caption(beta))
    print()

    # The full class grid: one representative relation per cell.
    grid = enumerate_relation_grid()
    print(f"grid cells: {len(grid)} "
          f"(8 orientations x 3 viewpoints x 3 shots)")
    print("first cell:", caption(grid[0]))
    print("last cell: ", caption(grid[-1]))
    print()

    # Pose computation is invertible: place a camera for a relation, then
    # read the relation back off the pose.
    facing = (1.0, 0.0, 0.0)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        b = sample_relation(rng)
        pose = compute_camera_pose(b, 1.0, facing)
        back = recover_relation(pose, facing, 1.0)
        dphi = abs(back.phi - b.phi)
        dphi = min(dphi, 2 * math.pi - dphi)
        worst = max(worst, dphi,
                    abs(back.theta - b.theta),
                    abs(back.dist_rel - b.dist_rel))
    print(f"pose round-trip over 1000 random relations: worst error {worst:.2e}")

    pose = compute_camera_pose(beta, 1.0, facing)
    print("camera position for the relation above:",
          np.round(pose.position, 4))


if __name__ == "__main__":
    main()
