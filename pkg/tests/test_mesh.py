import numpy as np
import pytest

from wgfem.mesh import Mesh, build_uniform_square_mesh, edge_geometry, write_vtk


def brute_force_edges(triangles):
    """Independent edge enumeration: unique sorted vertex pairs."""
    pairs = set()
    for a, b, c in triangles:
        for u, v in ((a, b), (b, c), (c, a)):
            pairs.add((min(u, v), max(u, v)))
    return pairs


def test_single_cell_counts():
    m = build_uniform_square_mesh(1)
    assert m.num_vertices == 4
    assert m.num_triangles == 2
    assert m.num_edges == 5
    assert int(m.boundary_edge.sum()) == 4


def test_n4_counts_and_mesh_size():
    m = build_uniform_square_mesh(4)
    assert m.num_vertices == 25
    assert m.num_triangles == 32
    assert m.h == pytest.approx(np.sqrt(2) / 4, abs=1e-15)


def test_euler_relation_n2():
    m = build_uniform_square_mesh(2)
    edges = brute_force_edges(m.triangles)
    assert len(edges) == 16
    assert m.num_edges == 16
    assert m.num_vertices - m.num_edges + m.num_triangles == 1


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_invariants(n):
    m = build_uniform_square_mesh(n)
    assert np.all(m.areas > 0)
    assert m.areas.sum() == pytest.approx(1.0, abs=1e-12)
    counts = (m.edge_triangles >= 0).sum(axis=1)
    assert np.all(counts[m.boundary_edge] == 1)
    assert np.all(counts[~m.boundary_edge] == 2)
    assert m.num_vertices - m.num_edges + m.num_triangles == 1


def test_rejects_degenerate():
    with pytest.raises(ValueError):
        build_uniform_square_mesh(0)
    with pytest.raises(ValueError):
        # clockwise triangle
        Mesh(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]), np.array([[0, 1, 2]]))


def test_hypotenuse_outward_normal():
    # unit right triangle with hypotenuse from (1,0) to (0,1)
    m = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
    hyp = [e for e in range(m.num_edges) if set(m.edges[e]) == {1, 2}][0]
    _, _, length, normals = edge_geometry(m, hyp)
    assert length == pytest.approx(np.sqrt(2))
    assert normals[0] == pytest.approx(np.array([1, 1]) / np.sqrt(2), abs=1e-15)


def test_bottom_edge_normal_and_length():
    m = build_uniform_square_mesh(1)
    bottom = [e for e in range(m.num_edges) if set(m.edges[e]) == {0, 1}][0]
    mid, tangent, length, normals = edge_geometry(m, bottom)
    assert length == pytest.approx(1.0)
    assert mid == pytest.approx([0.5, 0.0])
    assert normals[0] == pytest.approx([0.0, -1.0], abs=1e-15)


def test_interior_normals_antiparallel():
    m = build_uniform_square_mesh(3)
    for e in np.nonzero(~m.boundary_edge)[0]:
        _, _, _, normals = edge_geometry(m, e)
        assert np.abs(normals[0] + normals[1]).max() < 1e-14


def test_closed_boundary_normal_sum():
    m = build_uniform_square_mesh(3)
    for t in range(m.num_triangles):
        total = np.zeros(2)
        for e in m.triangle_edges[t]:
            _, _, length, normals = edge_geometry(m, e)
            side = list(m.edge_triangles[e]).index(t)
            total += length * normals[side]
        assert np.abs(total).max() < 1e-13


def test_deterministic_build():
    a = build_uniform_square_mesh(5)
    b = build_uniform_square_mesh(5)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.edges, b.edges)
    assert np.array_equal(a.triangle_edges, b.triangle_edges)


def test_mesh_is_immutable():
    m = build_uniform_square_mesh(2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 7.0


def test_vtk_export(tmp_path):
    m = build_uniform_square_mesh(2)
    path = tmp_path / "mesh.vtk"
    write_vtk(m, path)
    text = path.read_text().splitlines()
    assert text[0].startswith("# vtk DataFile")
    assert "DATASET POLYDATA" in text
    assert f"POINTS {m.num_vertices} double" in text
    assert text[5 + m.num_vertices] == f"POLYGONS {m.num_triangles} {4 * m.num_triangles}"
