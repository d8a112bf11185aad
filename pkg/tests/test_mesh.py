"""Surface meshes: sphere generators, metrics, point queries, MSH round-trip."""

import numpy as np
import pytest

from helmbem.materials import material
from helmbem.mesh import (
    MeshError,
    TriangleMesh,
    geodesic_sphere,
    icosphere,
    read_msh,
    refine_for_frequency,
    write_msh,
)


def test_icosphere_counts():
    for s in range(4):
        m = icosphere(1.0, subdivisions=s)
        assert m.num_vertices == 10 * 4 ** s + 2
        assert m.num_triangles == 20 * 4 ** s


def test_geodesic_counts():
    for n in (1, 2, 3, 5, 8):
        m = geodesic_sphere(1.0, frequency=n)
        assert m.num_vertices == 10 * n * n + 2
        assert m.num_triangles == 20 * n * n


def test_vertices_on_sphere_and_centered():
    c = (0.01, -0.02, 0.003)
    m = icosphere(0.005, c, subdivisions=2)
    r = np.linalg.norm(m.vertices - np.asarray(c), axis=1)
    assert np.allclose(r, 0.005, rtol=1e-12)


def test_normals_unit_and_outward():
    m = geodesic_sphere(2.0, frequency=3)
    assert np.allclose(np.linalg.norm(m.normals, axis=1), 1.0, atol=1e-12)
    outward = np.einsum("ij,ij->i", m.centroids, m.normals)
    assert np.all(outward > 0)
    assert m.signed_volume() > 0


def test_area_converges_to_sphere_area():
    # inscribed facets: total area below 4*pi*R^2, deficit shrinking ~4x per
    # subdivision (measured 7.2% / 1.9% / 0.48% for s = 1, 2, 3)
    deficits = []
    for s in (1, 2, 3):
        m = icosphere(1.0, subdivisions=s)
        deficits.append(1.0 - m.areas.sum() / (4 * np.pi))
    assert all(d > 0 for d in deficits)
    assert deficits[2] < 0.006
    assert deficits[1] < 0.35 * deficits[0]
    assert deficits[2] < 0.35 * deficits[1]


def test_mesh_size_halves_per_subdivision():
    h = [icosphere(1.0, subdivisions=s).h_max for s in (0, 1, 2, 3)]
    for a, b in zip(h, h[1:]):
        assert b < 0.6 * a


def test_quasi_uniformity_stays_bounded():
    for s in (1, 2, 3):
        assert icosphere(1.0, subdivisions=s).quasi_uniformity() < 1.5
    for n in (2, 4, 6):
        assert geodesic_sphere(1.0, frequency=n).quasi_uniformity() < 1.6


def test_refine_for_frequency_meets_target():
    media = (material("water"), material("fat"))
    for ppw in (2.0, 4.0, 6.0):
        m = refine_for_frequency(0.005, (0, 0, 0), 5.0e5, media, ppw)
        lam_min = min(mat.c / 5.0e5 for mat in media)
        assert m.h_max <= lam_min / ppw * (1 + 1e-12)
    coarse = refine_for_frequency(0.005, (0, 0, 0), 5.0e5, media, 2.0)
    fine = refine_for_frequency(0.005, (0, 0, 0), 5.0e5, media, 6.0)
    assert fine.num_vertices > coarse.num_vertices


def test_contains_and_distance():
    m = icosphere(1.0, subdivisions=2)
    inside = np.array([[0.0, 0.0, 0.0], [0.3, -0.2, 0.1]])
    outside = np.array([[2.0, 0.0, 0.0], [0.0, 1.5, 0.0]])
    assert np.all(m.contains(inside))
    assert not np.any(m.contains(outside))
    d = m.distance(np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 0.5]]))
    assert np.all(d >= 0)
    # approximately | |x| - R |, up to facet sagitta
    assert d[0] == pytest.approx(1.0, abs=0.02)
    assert d[1] == pytest.approx(0.5, abs=0.02)


def test_msh_round_trip(tmp_path):
    m = icosphere(0.004, (0.001, 0.0, -0.002), subdivisions=1)
    path = tmp_path / "sphere.msh"
    write_msh(m, path)
    text = path.read_text()
    assert text.startswith("$MeshFormat\n2.2")
    m2 = read_msh(path)
    assert np.allclose(m2.vertices, m.vertices, rtol=0, atol=1e-15)
    assert np.array_equal(m2.triangles, m.triangles)


def test_read_msh_rejects_degenerate_triangle(tmp_path):
    path = tmp_path / "bad.msh"
    path.write_text(
        "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n"
        "$Nodes\n3\n1 0 0 0\n2 1 0 0\n3 2 0 0\n$EndNodes\n"
        "$Elements\n1\n1 2 2 0 0 1 2 3\n$EndElements\n"
    )
    with pytest.raises(MeshError):
        read_msh(path)


def test_validation_rejects_bad_connectivity():
    v = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    with pytest.raises(MeshError):
        TriangleMesh(v, np.array([[0, 1, 3]]))
    with pytest.raises(MeshError):
        TriangleMesh(v, np.array([[0, 1, 1]]))


def test_shared_vertex_pair_classification():
    m = icosphere(1.0, subdivisions=0)
    co, edge, vert = m.shared_vertex_pairs()
    # every triangle pairs with itself once
    assert len(co) == m.num_triangles
    # closed icosahedron: 30 edges, seen from both orderings
    assert len(edge) == 60
    # 12 vertices of degree 5: per vertex 5*4 ordered pairs minus edge-sharing
    assert len(vert) == 12 * 5 * 4 - 2 * len(edge)
