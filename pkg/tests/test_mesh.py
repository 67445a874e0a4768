import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from traction_gap.constitutive import Material
from traction_gap.mesh import (AffineField, BoxDomain3, Mesh, displacement_gradient, generate_mesh,
                               integrate_quadratic_energy, integral, is_normalized, l2_inner, normalize_frame,
                               read_mesh, stiffness_matrix, strain_field, write_mesh)


@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_generated_counts_and_area(n):
    mesh = generate_mesh("unit_square", n)
    assert mesh.n_nodes == (n + 1) ** 2
    assert mesh.n_triangles == 2 * n * n
    assert len(mesh.boundary_edges) == 4 * n
    assert mesh.volume == pytest.approx(1.0, abs=1e-15)
    assert np.all(mesh.areas > 0)


def test_rectangle_moments():
    mesh = generate_mesh("rectangle", 6, width=2.0, height=0.5)
    assert mesh.volume == pytest.approx(1.0)
    np.testing.assert_allclose(mesh.first_moment(), 0, atol=1e-15)
    np.testing.assert_allclose(mesh.second_moment(), np.diag([4.0 / 12, 0.25 / 12]), atol=1e-15)


def test_unknown_kind():
    with pytest.raises(ValueError):
        generate_mesh("disk", 4)


def test_normals_are_outward_unit(mesh8):
    mid = mesh8.nodes[mesh8.boundary_edges].mean(axis=1)
    np.testing.assert_allclose(np.linalg.norm(mesh8.normals, axis=1), 1.0)
    # on the centered square the outward normal points away from the origin
    assert np.all(np.sum(mid * mesh8.normals, axis=1) > 0)


@pytest.mark.parametrize("tag, normal", [(0, [0, -1]), (1, [1, 0]), (2, [0, 1]), (3, [-1, 0])])
def test_edge_tags(mesh8, tag, normal):
    np.testing.assert_allclose(mesh8.normals[mesh8.edge_tags == tag], np.tile(normal, (8, 1)), atol=1e-15)


def test_divergence_theorem(mesh8):
    # int_boundary n (x) x = |Omega| I
    mid = mesh8.nodes[mesh8.boundary_edges].mean(axis=1)
    T = np.einsum("e,ei,ej->ij", mesh8.edge_lengths, mesh8.normals, mid)
    np.testing.assert_allclose(T, np.eye(2), atol=1e-14)


def test_degenerate_triangle_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        Mesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


def test_clockwise_triangles_are_reoriented():
    mesh = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    assert mesh.areas[0] == pytest.approx(0.5)


def test_p1_gradient_exact_on_affine(mesh8, rng):
    M = rng.standard_normal((2, 2))
    v = mesh8.nodes @ M.T + rng.standard_normal(2)
    np.testing.assert_allclose(displacement_gradient(mesh8, v), np.broadcast_to(M, (mesh8.n_triangles, 2, 2)),
                               atol=1e-13)


def test_stiffness_reproduces_quadratic_energy(mesh8, rng):
    m = Material(1.3, 0.4)
    K = stiffness_matrix(mesh8, m)
    v = rng.standard_normal((mesh8.n_nodes, 2))
    assert 0.5 * v.ravel() @ (K @ v.ravel()) == pytest.approx(integrate_quadratic_energy(mesh8, m, v), rel=1e-12)
    # rigid fields are in the kernel
    rot = np.column_stack([-mesh8.nodes[:, 1], mesh8.nodes[:, 0]])
    assert np.abs(K @ rot.ravel()).max() <= 1e-12


def test_stiffness_is_symmetric(mesh4):
    K = stiffness_matrix(mesh4, Material(1, 1)).toarray()
    np.testing.assert_allclose(K, K.T, atol=1e-13)


def test_mass_pairs_exact(mesh8):
    # int x1^2 over the unit square = 1/12
    x = mesh8.nodes
    assert l2_inner(mesh8, np.column_stack([x[:, 0], 0 * x[:, 0]]), np.column_stack([x[:, 0], 0 * x[:, 0]])) == \
        pytest.approx(1 / 12, rel=1e-14)
    np.testing.assert_allclose(integral(mesh8, AffineField(np.eye(2), [1.0, 2.0])), [1.0, 2.0], atol=1e-15)


@settings(max_examples=25)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-3, 3))
def test_normalize_frame_moves_to_principal_axes(dx, dy, theta):
    base = generate_mesh("rectangle", 4, width=2.0, height=1.0)
    c, s = np.cos(theta), np.sin(theta)
    R = np.array([[c, -s], [s, c]])
    moved = Mesh(base.nodes @ R.T + [dx, dy], base.triangles)
    norm = normalize_frame(moved)
    assert is_normalized(norm)
    assert norm.volume == pytest.approx(moved.volume)
    # the recorded frame maps the moved coordinates to the normalized ones
    fr = norm.frame
    np.testing.assert_allclose((moved.nodes + fr.centroid_shift) @ fr.rotation.T, norm.nodes, atol=1e-12)
    assert np.linalg.det(fr.rotation) == pytest.approx(1.0)


def test_normalize_leaves_centered_square_alone():
    mesh = generate_mesh("unit_square", 4)
    np.testing.assert_array_equal(normalize_frame(mesh).nodes, mesh.nodes)


def test_normalize_is_idempotent(mesh8):
    again = normalize_frame(mesh8)
    np.testing.assert_allclose(again.nodes, mesh8.nodes, atol=1e-15)


def test_mesh_file_round_trip(tmp_path, mesh8):
    path = tmp_path / "square.mesh"
    write_mesh(mesh8, path)
    back = read_mesh(path)
    np.testing.assert_array_equal(back.nodes, mesh8.nodes)
    np.testing.assert_array_equal(back.triangles, mesh8.triangles)
    np.testing.assert_array_equal(back.boundary_edges, mesh8.boundary_edges)
    np.testing.assert_array_equal(back.edge_tags, mesh8.edge_tags)
    np.testing.assert_array_equal(back.normals, mesh8.normals)


@pytest.mark.parametrize("text", ["node 0 0 0\nbogus 1\n", "node 1 0 0\n", "node 0 x 0\n"])
def test_read_mesh_rejects_malformed(tmp_path, text):
    path = tmp_path / "bad.mesh"
    path.write_text(text)
    with pytest.raises(ValueError):
        read_mesh(path)


def test_submesh_keeps_coordinates(mesh8):
    left = mesh8.nodes[mesh8.triangles].mean(axis=1)[:, 0] < 0
    sub = mesh8.submesh(left)
    assert sub.volume == pytest.approx(0.5)
    assert sub.n_triangles == mesh8.n_triangles // 2
    np.testing.assert_array_equal(sub.nodes, mesh8.nodes[np.unique(mesh8.triangles[left])])


def test_box_domain():
    box = BoxDomain3((0.5, 1.0, 1.5))
    assert box.volume == pytest.approx(6.0)
    np.testing.assert_allclose(box.second_moment(), np.diag([6 * 0.25 / 3, 6 * 1.0 / 3, 6 * 2.25 / 3]))
    v = AffineField(np.arange(9.0).reshape(3, 3))
    np.testing.assert_allclose(strain_field(box, v), 0.5 * (v.M + v.M.T))


def test_box_rejects_nonpositive_widths():
    with pytest.raises(ValueError):
        BoxDomain3((1.0, 0.0, 1.0))


def test_affine_field_validation():
    with pytest.raises(ValueError):
        AffineField(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        AffineField(np.eye(2), [1.0, 2.0, 3.0])
