"""Mesh construction, validation, geometry, and nodal-basis tests.

Oracles are independent of the implementation: hand geometry (unit right
triangle incircle/circumcircle, regular simplex ratios), the affine patch
test for interpolation, and direct evaluation for hat functions.
"""

import numpy as np
import pytest
from helpers import chain_mesh, crisscross_mesh, kuhn_cube_mesh, square_two_triangles

from cpwlrelu.errors import (
    DegenerateSimplex,
    NonConforming,
    OutsideDomain,
)
from cpwlrelu.mesh import (
    build_mesh,
    compute_kh,
    find_simplex,
    interpolate,
    is_locally_convex,
    mesh_from_dict,
    mesh_to_dict,
    sample_points,
    shape_regularity,
    vertex_star,
)


# ---------------------------------------------------------------------------
# Validation errors
# ---------------------------------------------------------------------------


def test_rejects_out_of_range_index():
    with pytest.raises(NonConforming):
        build_mesh(np.array([[0.0], [1.0]]), np.array([[0, 2]]))


def test_rejects_repeated_vertex_in_element():
    with pytest.raises(NonConforming):
        build_mesh(np.array([[0.0], [1.0]]), np.array([[1, 1]]))


def test_rejects_degenerate_element():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(DegenerateSimplex):
        build_mesh(verts, np.array([[0, 1, 2]]))


def test_rejects_duplicate_elements():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(NonConforming):
        build_mesh(verts, np.array([[0, 1, 2], [2, 0, 1]]))


def test_rejects_unused_vertex():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
    with pytest.raises(NonConforming):
        build_mesh(verts, np.array([[0, 1, 2]]))


def test_rejects_overtriangulated_facet():
    # Three segments out of two vertices share the same 0-facet three times.
    verts = np.array([[0.0], [1.0], [2.0], [3.0]])
    simp = np.array([[0, 1], [1, 2], [1, 3]])
    with pytest.raises(NonConforming):
        build_mesh(verts, simp)


def test_rejects_hanging_node():
    # A vertex of the lower triangle sits on the upper triangle's edge.
    verts = np.array(
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [1.5, -1.0], [-0.5, -1.0]]
    )
    simp = np.array([[0, 1, 2], [3, 4, 5]])
    with pytest.raises(NonConforming):
        build_mesh(verts, simp)
    # without deep validation the same mesh is accepted
    build_mesh(verts, simp, validate=False)


def test_rejects_overlap_without_shared_vertices():
    verts = np.array(
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.2, 0.2], [1.2, 0.2], [0.2, 1.2]]
    )
    simp = np.array([[0, 1, 2], [3, 4, 5]])
    with pytest.raises(NonConforming):
        build_mesh(verts, simp)


def test_rejects_overlap_across_shared_edge():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.4, 0.3]])
    simp = np.array([[0, 1, 2], [0, 1, 3]])
    with pytest.raises(NonConforming):
        build_mesh(verts, simp)


# ---------------------------------------------------------------------------
# Geometry oracles
# ---------------------------------------------------------------------------


def test_barycentric_reproduces_points(rng):
    mesh = square_two_triangles()
    for k in range(len(mesh.simplices)):
        lam = rng.dirichlet(np.ones(3), size=20)
        pts = lam @ mesh.vertices[mesh.simplices[k]]
        back = mesh.barycentric(k, pts)
        assert np.allclose(back, lam, atol=1e-12)
        assert np.allclose(back.sum(axis=1), 1.0, atol=1e-12)


def test_boundary_vertices_oracle():
    chain = chain_mesh(np.linspace(0, 1, 5))
    assert set(chain.boundary_vertices) == {0, 4}
    assert set(chain.interior_vertices) == {1, 2, 3}
    cc = crisscross_mesh(np.linspace(0, 1, 3), np.linspace(0, 1, 3))
    inner = {4}  # center of the 3x3 vertex grid
    assert set(cc.interior_vertices) == inner
    assert set(cc.boundary_vertices) == set(range(9)) - inner


def test_volumes_oracle():
    mesh = square_two_triangles()
    assert np.allclose(mesh.volumes, 0.5)
    cube = kuhn_cube_mesh()
    assert np.allclose(cube.volumes, 1.0 / 6.0)
    assert np.isclose(cube.volumes.sum(), 1.0)


def test_shape_regularity_known_values():
    # 1D elements: ratio is 1 by convention (in/out radii coincide).
    assert shape_regularity(chain_mesh([0.0, 0.3, 1.0])) == pytest.approx(1.0)
    # Unit right triangle: r = (a + b - c)/2, R = c/2.
    tri = build_mesh(
        np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]])
    )
    r = (2.0 - np.sqrt(2.0)) / 2.0
    R = np.sqrt(2.0) / 2.0
    assert shape_regularity(tri) == pytest.approx(r / R, rel=1e-12)
    # Equilateral triangle: r/R = 1/2.
    eq = build_mesh(
        np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]]),
        np.array([[0, 1, 2]]),
    )
    assert shape_regularity(eq) == pytest.approx(0.5, rel=1e-12)


def test_kh_oracle(mesh_corpus):
    for name, mesh in mesh_corpus:
        # independent recount straight from the element array
        counts = np.bincount(mesh.simplices.ravel(), minlength=len(mesh.vertices))
        assert compute_kh(mesh) == counts.max(), name


def test_find_simplex_and_outside():
    mesh = square_two_triangles()
    idx = find_simplex(mesh, np.array([[0.75, 0.1], [0.1, 0.75]]))
    assert idx[0] == 0 and idx[1] == 1
    with pytest.raises(OutsideDomain):
        interpolate(mesh, np.zeros(4), np.array([[2.0, 2.0]]))


def test_interpolation_patch_test(mesh_corpus, rng):
    """Nodal interpolation reproduces affine functions exactly."""
    for name, mesh in mesh_corpus:
        a = rng.normal(size=mesh.dim)
        b = float(rng.normal())
        coeffs = mesh.vertices @ a + b
        X = sample_points(mesh, 200, rng)
        vals = interpolate(mesh, coeffs, X)
        assert np.max(np.abs(vals - (X @ a + b))) < 1e-12, name


def test_sample_points_inside(mesh_corpus, rng):
    for name, mesh in mesh_corpus:
        X = sample_points(mesh, 300, rng)
        assert X.shape == (300, mesh.dim)
        assert np.all(find_simplex(mesh, X) >= 0), name


# ---------------------------------------------------------------------------
# Vertex stars and hat functions
# ---------------------------------------------------------------------------


def test_vertex_star_affines_are_nodal(mesh_corpus):
    """Each local affine is 1 at the center and 0 at the element's others."""
    for name, mesh in mesh_corpus:
        for i in range(len(mesh.vertices)):
            star = vertex_star(mesh, i)
            for k, aff in zip(star.incident, star.local_affines):
                for v in mesh.simplices[k]:
                    want = 1.0 if v == i else 0.0
                    assert abs(aff(mesh.vertices[v]) - want) < 1e-10, (name, i)


def test_hat_equals_min_identity_on_convex_stars(mesh_corpus, rng):
    """On convex stars the hat equals max(0, min of the local affines)."""
    for name, mesh in mesh_corpus:
        for i in range(len(mesh.vertices)):
            if not is_locally_convex(mesh, i):
                continue
            star = vertex_star(mesh, i)
            coeffs = np.zeros(len(mesh.vertices))
            coeffs[i] = 1.0
            X = sample_points(mesh, 400, rng)
            hat = interpolate(mesh, coeffs, X)
            expr = np.maximum(
                0.0, np.min(np.stack([a(X) for a in star.local_affines]), axis=0)
            )
            assert np.max(np.abs(hat - expr)) < 1e-10, (name, i)


def test_locally_convex_negative_case():
    # Three quadrants around the origin form an L-shape: not convex there.
    verts = np.array(
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
    )
    simp = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 4]])
    mesh = build_mesh(verts, simp)
    assert not is_locally_convex(mesh, 0)
    assert is_locally_convex(mesh, 1)


def test_corpus_is_locally_convex(mesh_corpus):
    for name, mesh in mesh_corpus:
        for i in range(len(mesh.vertices)):
            assert is_locally_convex(mesh, i), (name, i)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def test_mesh_roundtrip(mesh_corpus, tmp_path):
    from cpwlrelu.mesh import load_mesh, save_mesh

    for name, mesh in mesh_corpus[:6]:
        p = tmp_path / f"{name}.json"
        save_mesh(mesh, str(p))
        back = load_mesh(str(p))
        assert np.array_equal(back.vertices, mesh.vertices)
        assert np.array_equal(back.simplices, mesh.simplices)
        assert np.array_equal(back.boundary_vertices, mesh.boundary_vertices)


def test_mesh_dict_tampered_boundary_rejected():
    mesh = square_two_triangles()
    d = mesh_to_dict(mesh)
    d["boundary"] = [0]  # wrong: all four corners are boundary
    with pytest.raises(NonConforming):
        mesh_from_dict(d)
