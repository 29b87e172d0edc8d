import numpy as np
import pytest

from conftest import unit_cube
from jawkit import se3
from jawkit.errors import ParseError, UnsupportedFormatError
from jawkit.mesh import TriangleMesh, load_mesh, merge, read_ply_bytes, save_mesh


def test_cube_topology(cube):
    assert cube.n_vertices == 8 and cube.n_triangles == 12
    assert cube.is_watertight()
    assert cube.has_consistent_orientation()
    # outward winding: face normals point away from the centre
    centers = cube.vertices[cube.triangles].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", cube.face_normals, centers - 0.5) > 0)


def test_areas_and_vertex_normals(cube):
    assert np.isclose(cube.face_areas.sum(), 6.0)
    assert np.allclose(np.linalg.norm(cube.vertex_normals, axis=1), 1.0)
    # area weighting depends on the triangulation; the corner normal still points outward
    assert np.all(cube.vertex_normals[6] > 0) and np.all(cube.vertex_normals[0] < 0)


def test_degenerate_triangles_dropped():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]]
    with pytest.warns(UserWarning, match="degenerate"):
        m = TriangleMesh(v, [[0, 1, 2], [0, 1, 3], [1, 1, 2]])
    assert m.n_triangles == 1


def test_index_out_of_range():
    with pytest.raises(ValueError):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])


def test_arrays_read_only(cube):
    with pytest.raises(ValueError):
        cube.vertices[0, 0] = 3.0


def test_mesh_id_digest_stable():
    a, b = unit_cube(), unit_cube()
    a = TriangleMesh(a.vertices, a.triangles)
    b = TriangleMesh(b.vertices, b.triangles)
    assert a.mesh_id == b.mesh_id and len(a.mesh_id) == 12


def test_transformed_and_flipped(cube, rng):
    t = se3.random_transform(rng)
    moved = cube.transformed(t)
    assert np.allclose(moved.vertices, t.apply(cube.vertices))
    assert np.allclose(moved.face_normals, cube.face_normals @ t.rotation.T)
    assert np.allclose(cube.flipped().face_normals, -cube.face_normals)


def test_merge(cube):
    m = merge([cube, cube.transformed(se3.RigidTransform.from_translation([5, 0, 0]))])
    assert m.n_vertices == 16 and m.n_triangles == 24 and m.is_watertight()


@pytest.mark.parametrize("ext,binary", [("ply", True), ("ply", False), ("obj", True)])
def test_exact_roundtrip(tmp_path, cube, ext, binary):
    p = tmp_path / f"m.{ext}"
    save_mesh(cube, p, binary=binary)
    back = load_mesh(p)
    assert np.array_equal(back.vertices, cube.vertices)
    assert np.array_equal(back.triangles, cube.triangles)
    assert back.name == "m"


def test_stl_roundtrip_welds(tmp_path, cube):
    p = tmp_path / "m.stl"
    save_mesh(cube, p)
    back = load_mesh(p)
    assert back.n_vertices == 8 and back.n_triangles == 12
    assert back.is_watertight() and back.has_consistent_orientation()
    assert np.isclose(back.face_areas.sum(), 6.0)


def test_ascii_stl(tmp_path):
    p = tmp_path / "a.stl"
    p.write_text("solid t\nfacet normal 0 0 1\nouter loop\nvertex 0 0 0\nvertex 1 0 0\n"
                 "vertex 0 1 0\nendloop\nendfacet\nendsolid t\n")
    m = load_mesh(p)
    assert m.n_triangles == 1


def test_ply_vertex_properties_roundtrip(tmp_path, cube):
    p = tmp_path / "m.ply"
    vals = np.arange(8, dtype=float) * 0.5
    save_mesh(cube, p, vertex_properties={"d": ("float", vals), "ok": ("uchar", np.ones(8))})
    _, _, extra = read_ply_bytes(p.read_bytes())
    assert np.allclose(extra["d"], vals)
    assert np.all(extra["ok"] == 1)


def test_ply_quads_fan_triangulated():
    data = (b"ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\n"
            b"property float z\nelement face 1\nproperty list uchar int vertex_indices\n"
            b"end_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    v, f, _ = read_ply_bytes(data)
    assert f.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_ply_big_endian(tmp_path):
    head = (b"ply\nformat binary_big_endian 1.0\nelement vertex 3\nproperty float x\n"
            b"property float y\nproperty float z\nelement face 1\n"
            b"property list uchar int vertex_indices\nend_header\n")
    body = np.array([0, 0, 0, 1, 0, 0, 0, 1, 0], dtype=">f4").tobytes()
    body += b"\x03" + np.array([0, 1, 2], dtype=">i4").tobytes()
    v, f, _ = read_ply_bytes(head + body)
    assert np.allclose(v[1], [1, 0, 0]) and f.tolist() == [[0, 1, 2]]


def test_truncated_binary_ply(tmp_path, cube):
    p = tmp_path / "m.ply"
    save_mesh(cube, p)
    data = p.read_bytes()[:-20]
    with pytest.raises(ParseError):
        read_ply_bytes(data)


def test_bad_ascii_ply_reports_offset():
    data = (b"ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
            b"property float z\nend_header\n0 0 0\n1 0 zz\n0 1 0\n")
    with pytest.raises(ParseError) as exc:
        read_ply_bytes(data)
    assert exc.value.offset == data.index(b"1 0 zz")


def test_not_a_ply():
    with pytest.raises(ParseError):
        read_ply_bytes(b"solid nonsense")


def test_truncated_stl(tmp_path, cube):
    p = tmp_path / "m.stl"
    save_mesh(cube, p)
    p.write_bytes(p.read_bytes()[:200])
    with pytest.raises(ParseError):
        load_mesh(p)


def test_bad_obj(tmp_path):
    p = tmp_path / "m.obj"
    p.write_text("v 0 0 0\nv 1 0\n")
    with pytest.raises(ParseError):
        load_mesh(p)


def test_unsupported_format(tmp_path, cube):
    with pytest.raises(UnsupportedFormatError):
        save_mesh(cube, tmp_path / "m.vtk")
    with pytest.raises(UnsupportedFormatError):
        load_mesh(tmp_path / "m.off")


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_mesh(tmp_path / "nope.ply")
