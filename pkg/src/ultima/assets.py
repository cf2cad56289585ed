"""Mesh loading, normalization, and the asset catalog.

Only the Wavefront OBJ subset we rely on (v / vn / f) is parsed. Faces with
more than three vertices are fan-triangulated. Meshes are normalized into a
unit bounding box centered at the origin and are assumed to be authored
upright; we never re-orient.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_FACING = np.array([0.0, -1.0, 0.0])

DEGENERATE_AREA_EPS = 1e-12


class MeshError(ValueError):
    pass


@dataclass
class Mesh:
    """Triangle mesh. ``vertices`` is (N,3) float64, ``triangles`` (M,3) int."""

    vertices: np.ndarray
    triangles: np.ndarray
    normals: Optional[np.ndarray] = None
    vertex_colors: Optional[np.ndarray] = None
    dropped_degenerate: int = 0

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if self.vertex_colors is not None:
            self.vertex_colors = np.asarray(self.vertex_colors, dtype=np.float64).reshape(-1, 3)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if self.num_vertices == 0:
            raise MeshError("empty mesh has no bounding box")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_center(self) -> np.ndarray:
        lo, hi = self.bbox()
        return (lo + hi) / 2.0

    def max_extent(self) -> float:
        lo, hi = self.bbox()
        return float((hi - lo).max())


def _triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def validate_mesh(mesh: Mesh) -> Mesh:
    """Check indices and normals, dropping zero-area triangles.

    Returns a mesh whose triangles all have positive area; the number of
    dropped triangles is recorded on the result.
    """
    if mesh.num_vertices == 0:
        raise MeshError("mesh has no vertices")
    if mesh.num_triangles and (mesh.triangles.min() < 0
                               or mesh.triangles.max() >= mesh.num_vertices):
        bad = int(mesh.triangles.max())
        raise MeshError(f"triangle index {bad} out of range for {mesh.num_vertices} vertices")
    if mesh.normals is not None and len(mesh.normals):
        lengths = np.linalg.norm(mesh.normals, axis=1)
        if np.any(np.abs(lengths - 1.0) > 1e-6):
            raise MeshError("vertex normals must be unit length")

    dropped = 0
    triangles = mesh.triangles
    if mesh.num_triangles:
        keep = _triangle_areas(mesh.vertices, triangles) > DEGENERATE_AREA_EPS
        dropped = int((~keep).sum())
        if dropped:
            logger.warning("dropped %d degenerate triangles", dropped)
            triangles = triangles[keep]
    return Mesh(vertices=mesh.vertices, triangles=triangles, normals=mesh.normals,
                vertex_colors=mesh.vertex_colors, dropped_degenerate=dropped)


def normalize_mesh(mesh: Mesh) -> Mesh:
    """Center the bounding box on the origin and scale max extent to 1."""
    extent = mesh.max_extent()
    if extent <= 0:
        raise MeshError("mesh has zero extent, cannot normalize")
    center = mesh.bbox_center()
    vertices = (mesh.vertices - center) / extent
    return Mesh(vertices=vertices, triangles=mesh.triangles, normals=mesh.normals,
                vertex_colors=mesh.vertex_colors, dropped_degenerate=mesh.dropped_degenerate)


# ---------------------------------------------------------------------------
# Wavefront OBJ


def _parse_face_index(token: str, count: int, line_no: int) -> int:
    # face entries look like "3", "3/1", "3/1/2" or "3//2"
    head = token.split("/")[0]
    try:
        idx = int(head)
    except ValueError:
        raise MeshError(f"line {line_no}: bad face index {token!r}")
    if idx < 0:
        idx = count + idx  # relative to the vertices seen so far
    else:
        idx = idx - 1
    return idx


def load_obj(path) -> Mesh:
    """Parse an OBJ file into a validated (not yet normalized) mesh."""
    vertices = []
    normals = []
    colors = []
    faces = []
    skipped = set()

    with open(path, "r") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshError(f"line {line_no}: vertex needs 3 coordinates")
                try:
                    coords = [float(p) for p in parts[1:]]
                except ValueError:
                    raise MeshError(f"line {line_no}: bad vertex coordinate")
                vertices.append(coords[:3])
                if len(coords) >= 6:  # optional per-vertex color extension
                    colors.append(coords[3:6])
            elif tag == "vn":
                if len(parts) < 4:
                    raise MeshError(f"line {line_no}: normal needs 3 components")
                try:
                    normals.append([float(p) for p in parts[1:4]])
                except ValueError:
                    raise MeshError(f"line {line_no}: bad normal component")
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshError(f"line {line_no}: face needs at least 3 vertices")
                idx = [_parse_face_index(p, len(vertices), line_no) for p in parts[1:]]
                for i in range(1, len(idx) - 1):  # fan triangulation
                    faces.append((idx[0], idx[i], idx[i + 1]))
            else:
                if tag not in skipped:
                    skipped.add(tag)
                    logger.warning("%s: skipping unsupported OBJ statement %r", path, tag)

    if not vertices:
        raise MeshError(f"{path}: no vertices found")
    mesh = Mesh(
        vertices=np.array(vertices, dtype=np.float64),
        triangles=np.array(faces, dtype=np.int64).reshape(-1, 3),
        normals=np.array(normals, dtype=np.float64) if len(normals) == len(vertices) else None,
        vertex_colors=np.array(colors, dtype=np.float64) if len(colors) == len(vertices) else None,
    )
    return validate_mesh(mesh)


def save_obj(mesh: Mesh, path) -> None:
    """Write the supported OBJ subset back out (v, vn, f)."""
    with open(path, "w") as fh:
        for i, v in enumerate(mesh.vertices):
            if mesh.vertex_colors is not None:
                c = mesh.vertex_colors[i]
                fh.write("v %.17g %.17g %.17g %.17g %.17g %.17g\n" % (*v, *c))
            else:
                fh.write("v %.17g %.17g %.17g\n" % tuple(v))
        if mesh.normals is not None:
            for n in mesh.normals:
                fh.write("vn %.17g %.17g %.17g\n" % tuple(n))
        for tri in mesh.triangles:
            if mesh.normals is not None:
                fh.write("f %d//%d %d//%d %d//%d\n" % (
                    tri[0] + 1, tri[0] + 1, tri[1] + 1, tri[1] + 1, tri[2] + 1, tri[2] + 1))
            else:
                fh.write("f %d %d %d\n" % (tri[0] + 1, tri[1] + 1, tri[2] + 1))


# ---------------------------------------------------------------------------
# catalog


@dataclass
class Asset:
    id: str
    category: str
    mesh: Mesh
    facing: np.ndarray = field(default_factory=lambda: DEFAULT_FACING.copy())

    def __post_init__(self):
        if not self.id:
            raise ValueError("asset id must be non-empty")
        if not self.category:
            raise ValueError(f"asset {self.id}: category must be non-empty")
        facing = np.asarray(self.facing, dtype=np.float64)
        norm = np.linalg.norm(facing)
        if norm < 1e-12:
            raise ValueError(f"asset {self.id}: facing must be nonzero")
        if abs(facing[2]) > 1e-6 * norm:
            raise ValueError(f"asset {self.id}: facing must be horizontal, got {facing.tolist()}")
        self.facing = facing / norm

    @property
    def extent(self) -> float:
        return self.mesh.max_extent()


@dataclass
class AssetCatalog:
    assets: list[Asset] = field(default_factory=list)

    def __post_init__(self):
        ids = [a.id for a in self.assets]
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise ValueError(f"duplicate asset ids: {sorted(dupes)}")

    @property
    def categories(self) -> set[str]:
        return {a.category for a in self.assets}

    def get(self, asset_id: str) -> Asset:
        for a in self.assets:
            if a.id == asset_id:
                return a
        raise KeyError(asset_id)

    def __len__(self) -> int:
        return len(self.assets)

    def __iter__(self):
        return iter(self.assets)


def load_catalog(manifest_path, normalize: bool = True) -> AssetCatalog:
    """Read a catalog manifest: one asset per line,
    ``id <sep> mesh_path <sep> synset <sep> fx <sep> fy <sep> fz``
    with tab or comma separators. Mesh paths are relative to the manifest.
    """
    base = os.path.dirname(os.path.abspath(manifest_path))
    assets = []
    seen = set()
    with open(manifest_path, "r") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t") if "\t" in line else line.split(",")
            fields = [f.strip() for f in fields]
            if len(fields) != 6:
                raise ValueError(f"{manifest_path}:{line_no}: expected 6 fields, got {len(fields)}")
            asset_id, rel_path, synset = fields[0], fields[1], fields[2]
            if asset_id in seen:
                raise ValueError(f"{manifest_path}:{line_no}: duplicate asset id {asset_id!r}")
            seen.add(asset_id)
            try:
                facing = [float(x) for x in fields[3:6]]
            except ValueError:
                raise ValueError(f"{manifest_path}:{line_no}: bad facing vector")
            mesh_path = os.path.join(base, rel_path)
            if not os.path.exists(mesh_path):
                raise FileNotFoundError(f"{manifest_path}:{line_no}: mesh file not found: {mesh_path}")
            mesh = load_obj(mesh_path)
            if normalize:
                mesh = normalize_mesh(mesh)
            assets.append(Asset(id=asset_id, category=synset, mesh=mesh, facing=facing))
    return AssetCatalog(assets=assets)


def save_catalog(catalog: AssetCatalog, manifest_path, mesh_dir: str = "meshes") -> None:
    """Write meshes plus a manifest next to them (tab-separated)."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    os.makedirs(os.path.join(base, mesh_dir), exist_ok=True)
    with open(manifest_path, "w") as fh:
        for asset in catalog:
            rel = os.path.join(mesh_dir, f"{asset.id}.obj")
            save_obj(asset.mesh, os.path.join(base, rel))
            fh.write("%s\t%s\t%s\t%.17g\t%.17g\t%.17g\n"
                     % (asset.id, rel, asset.category, *asset.facing))


# ---------------------------------------------------------------------------
# procedural primitives (test fixtures and demo assets)

_CUBE_FACE_QUADS = [
    # (axis, sign) quads, counterclockwise seen from outside
    ((0, 1), [(1, -1, -1), (1, 1, -1), (1, 1, 1), (1, -1, 1)]),
    ((0, -1), [(-1, 1, -1), (-1, -1, -1), (-1, -1, 1), (-1, 1, 1)]),
    ((1, 1), [(1, 1, -1), (-1, 1, -1), (-1, 1, 1), (1, 1, 1)]),
    ((1, -1), [(-1, -1, -1), (1, -1, -1), (1, -1, 1), (-1, -1, 1)]),
    ((2, 1), [(-1, -1, 1), (1, -1, 1), (1, 1, 1), (-1, 1, 1)]),
    ((2, -1), [(-1, 1, -1), (1, 1, -1), (1, -1, -1), (-1, -1, -1)]),
]


def make_cube(size: float = 1.0) -> Mesh:
    """Axis-aligned cube centered at the origin, 12 triangles, unshared faces."""
    half = size / 2.0
    vertices = []
    faces = []
    for _, quad in _CUBE_FACE_QUADS:
        start = len(vertices)
        vertices.extend([(half * x, half * y, half * z) for x, y, z in quad])
        faces.append((start, start + 1, start + 2))
        faces.append((start, start + 2, start + 3))
    return Mesh(vertices=np.array(vertices, dtype=np.float64),
                triangles=np.array(faces, dtype=np.int64))


def make_box(sx: float, sy: float, sz: float) -> Mesh:
    mesh = make_cube(1.0)
    scaled = mesh.vertices * np.array([sx, sy, sz])
    return Mesh(vertices=scaled, triangles=mesh.triangles)


def make_marker(size: float = 1.0) -> Mesh:
    """A cube with a nose pyramid on its -y face.

    The protrusion marks the facing side, which makes left/right azimuths
    distinguishable in renders.
    """
    cube = make_cube(size * 0.8)
    half = size * 0.4
    apex_idx = len(cube.vertices)
    apex = np.array([[0.0, -size / 2.0, 0.0]])
    base = np.array([
        [half * 0.5, -half, half * 0.5],
        [-half * 0.5, -half, half * 0.5],
        [-half * 0.5, -half, -half * 0.5],
        [half * 0.5, -half, -half * 0.5],
    ])
    base_idx = apex_idx + 1
    tris = [(apex_idx, base_idx + i, base_idx + (i + 1) % 4) for i in range(4)]
    vertices = np.vstack([cube.vertices, apex, base])
    triangles = np.vstack([cube.triangles, np.array(tris, dtype=np.int64)])
    return Mesh(vertices=vertices, triangles=triangles)


def make_pyramid(size: float = 1.0) -> Mesh:
    half = size / 2.0
    vertices = np.array([
        [-half, -half, -half], [half, -half, -half],
        [half, half, -half], [-half, half, -half],
        [0.0, 0.0, half],
    ])
    triangles = np.array([
        [0, 2, 1], [0, 3, 2],          # base
        [0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4],
    ], dtype=np.int64)
    return Mesh(vertices=vertices, triangles=triangles)


_PRIMITIVES = {
    "cube": lambda: make_cube(1.0),
    "box": lambda: make_box(1.0, 0.6, 0.5),
    "marker": lambda: make_marker(1.0),
    "pyramid": lambda: make_pyramid(1.0),
    "slab": lambda: make_box(1.0, 0.8, 0.25),
}


def make_demo_catalog(names: Optional[Sequence[str]] = None) -> AssetCatalog:
    """Small procedural catalog used by tests and the demo scripts."""
    names = list(names) if names is not None else list(_PRIMITIVES)
    assets = []
    for name in names:
        if name not in _PRIMITIVES:
            raise KeyError(f"unknown primitive {name!r}, have {sorted(_PRIMITIVES)}")
        mesh = normalize_mesh(validate_mesh(_PRIMITIVES[name]()))
        assets.append(Asset(id=name, category=f"{name}.n.01", mesh=mesh))
    return AssetCatalog(assets=assets)
