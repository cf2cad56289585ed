import numpy as np
import pytest

from ultima.assets import (
    Asset,
    AssetCatalog,
    Mesh,
    MeshError,
    load_catalog,
    load_obj,
    make_cube,
    make_demo_catalog,
    make_marker,
    normalize_mesh,
    save_catalog,
    save_obj,
    validate_mesh,
)


def write(path, text):
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# OBJ parsing


def test_load_single_triangle(tmp_path):
    p = write(tmp_path / "tri.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    mesh = load_obj(p)
    assert mesh.num_vertices == 3
    assert mesh.num_triangles == 1
    assert np.allclose(mesh.vertices[1], [1, 0, 0])


def test_quad_face_fan_triangulates(tmp_path):
    p = write(tmp_path / "quad.obj",
              "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = load_obj(p)
    assert mesh.num_triangles == 2
    assert mesh.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_ngon_face_yields_n_minus_2_triangles(tmp_path):
    n = 7
    lines = []
    for i in range(n):
        a = 2 * np.pi * i / n
        lines.append(f"v {np.cos(a)} {np.sin(a)} 0")
    lines.append("f " + " ".join(str(i + 1) for i in range(n)))
    mesh = load_obj(write(tmp_path / "ngon.obj", "\n".join(lines) + "\n"))
    assert mesh.num_triangles == n - 2


def test_out_of_range_index_rejected(tmp_path):
    p = write(tmp_path / "bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(MeshError):
        load_obj(p)


def test_malformed_vertex_reports_line(tmp_path):
    p = write(tmp_path / "bad.obj", "v 0 0 0\nv 1 oops 0\n")
    with pytest.raises(MeshError, match="line 2"):
        load_obj(p)


def test_negative_indices_are_relative(tmp_path):
    p = write(tmp_path / "rel.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
    mesh = load_obj(p)
    assert mesh.triangles.tolist() == [[0, 1, 2]]


def test_slash_face_entries(tmp_path):
    p = write(tmp_path / "slash.obj",
              "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n")
    mesh = load_obj(p)
    assert mesh.num_triangles == 1


def test_unsupported_statements_skipped(tmp_path, caplog):
    p = write(tmp_path / "mat.obj",
              "mtllib foo.mtl\nusemtl bar\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    mesh = load_obj(p)
    assert mesh.num_triangles == 1


def test_obj_round_trip(tmp_path):
    mesh = make_marker()
    out = tmp_path / "m.obj"
    save_obj(mesh, out)
    back = load_obj(out)
    assert np.array_equal(mesh.triangles, back.triangles)
    assert np.allclose(mesh.vertices, back.vertices, atol=0)


# ---------------------------------------------------------------------------
# validation and normalization


def test_validate_drops_degenerate_triangles():
    mesh = Mesh(vertices=[[0, 0, 0], [1, 0, 0], [0, 1, 0]],
                triangles=[[0, 1, 2], [0, 1, 1]])
    out = validate_mesh(mesh)
    assert out.num_triangles == 1
    assert out.dropped_degenerate == 1


def test_validate_rejects_bad_normals():
    mesh = Mesh(vertices=[[0, 0, 0], [1, 0, 0], [0, 1, 0]],
                triangles=[[0, 1, 2]], normals=[[0, 0, 2], [0, 0, 1], [0, 0, 1]])
    with pytest.raises(MeshError):
        validate_mesh(mesh)


def test_normalize_centers_and_scales():
    # cube spanning (0..2)^3 shrinks to max extent 1 about the origin
    mesh = make_cube(2.0)
    mesh = Mesh(vertices=mesh.vertices + 1.0, triangles=mesh.triangles)
    out = normalize_mesh(mesh)
    lo, hi = out.bbox()
    assert np.allclose((lo + hi) / 2, 0.0, atol=1e-15)
    assert abs(out.max_extent() - 1.0) < 1e-15


def test_normalize_is_idempotent():
    out = normalize_mesh(make_marker())
    again = normalize_mesh(out)
    assert np.allclose(out.vertices, again.vertices, atol=1e-15)


def test_normalize_invariant_under_scale_and_shift():
    rng = np.random.default_rng(2)
    base = normalize_mesh(make_marker())
    for _ in range(20):
        s = float(rng.uniform(0.1, 10))
        t = rng.uniform(-5, 5, size=3)
        moved = Mesh(vertices=base.vertices * s + t, triangles=base.triangles)
        out = normalize_mesh(moved)
        assert np.allclose(out.vertices, base.vertices, atol=1e-9)


def test_normalize_rejects_zero_extent():
    mesh = Mesh(vertices=[[1, 1, 1]], triangles=np.zeros((0, 3)))
    with pytest.raises(MeshError):
        normalize_mesh(mesh)


# ---------------------------------------------------------------------------
# assets and catalog


def test_asset_normalizes_facing():
    a = Asset(id="a", category="box.n.01", mesh=make_cube(), facing=[2.0, 0.0, 0.0])
    assert np.allclose(a.facing, [1, 0, 0])


def test_asset_rejects_vertical_facing():
    with pytest.raises(ValueError):
        Asset(id="a", category="box.n.01", mesh=make_cube(), facing=[0, 0, 1])


def test_catalog_rejects_duplicate_ids():
    a = Asset(id="a", category="box.n.01", mesh=make_cube())
    with pytest.raises(ValueError, match="duplicate"):
        AssetCatalog(assets=[a, a])


def test_catalog_round_trip(tmp_path):
    catalog = make_demo_catalog(["cube", "marker"])
    manifest = tmp_path / "catalog.tsv"
    save_catalog(catalog, manifest)
    back = load_catalog(manifest)
    assert len(back) == 2
    assert back.categories == {"cube.n.01", "marker.n.01"}
    for orig, loaded in zip(catalog, back):
        assert orig.id == loaded.id
        assert np.allclose(orig.mesh.vertices, loaded.mesh.vertices)
        assert np.allclose(orig.facing, loaded.facing)


def test_catalog_comma_separated(tmp_path):
    save_obj(make_cube(), tmp_path / "c.obj")
    manifest = write(tmp_path / "cat.csv", "c1,c.obj,cube.n.01,0,-1,0\n")
    catalog = load_catalog(manifest)
    assert catalog.get("c1").category == "cube.n.01"


def test_catalog_duplicate_row_names_id(tmp_path):
    save_obj(make_cube(), tmp_path / "c.obj")
    manifest = write(tmp_path / "cat.tsv",
                     "c1\tc.obj\tcube.n.01\t0\t-1\t0\nc1\tc.obj\tcube.n.01\t0\t-1\t0\n")
    with pytest.raises(ValueError, match="c1"):
        load_catalog(manifest)


def test_catalog_missing_mesh(tmp_path):
    manifest = write(tmp_path / "cat.tsv", "c1\tnope.obj\tcube.n.01\t0\t-1\t0\n")
    with pytest.raises(FileNotFoundError):
        load_catalog(manifest)


def test_demo_catalog_assets_are_normalized():
    for asset in make_demo_catalog():
        assert abs(asset.extent - 1.0) < 1e-12
        assert np.allclose(asset.mesh.bbox_center(), 0.0, atol=1e-12)
