import numpy as np
import pytest

from shapeflow.mesh import (InvertedElement, MeshFileError, deform,
                            mesh_quality, read_fields, read_mesh,
                            triangle_quality, triangle_qualities, validate,
                            write_mesh)

from conftest import two_triangle_mesh


def test_quality_equilateral_is_one():
    for scale in (1.0, 1e-3, 17.0):
        q = triangle_quality((0, 0), (scale, 0), (scale / 2, scale * np.sqrt(3) / 2))
        assert abs(q - 1.0) < 1e-12


def test_quality_right_isoceles():
    # analytic: r = area/s = 1/(2 + sqrt(2)), R = abc/(4 area) = sqrt(2)/2
    r = 0.5 / ((2.0 + np.sqrt(2.0)) / 2.0)
    R = np.sqrt(2.0) / 2.0
    expected = 2.0 * r / R
    assert abs(expected - 0.8284271247461903) < 1e-12
    assert abs(triangle_quality((0, 0), (1, 0), (0, 1)) - expected) < 1e-12


def test_quality_collinear_is_zero():
    assert triangle_quality((0, 0), (1, 0), (2, 0)) == 0.0
    assert triangle_quality((0, 0), (0, 0), (1, 1)) == 0.0


def test_quality_negative_orientation_uses_absolute_area():
    q_ccw = triangle_quality((0, 0), (1, 0), (0, 1))
    q_cw = triangle_quality((0, 0), (0, 1), (1, 0))
    assert q_cw == pytest.approx(q_ccw, abs=1e-15)


def test_quality_similarity_invariance():
    rng = np.random.default_rng(11)
    for _ in range(50):
        pts = rng.normal(size=(3, 2))
        q0 = triangle_quality(*pts)
        if q0 == 0.0:
            continue
        angle = rng.uniform(0, 2 * np.pi)
        c, s = np.cos(angle), np.sin(angle)
        R = np.array([[c, -s], [s, c]])
        scale = rng.uniform(0.1, 10.0)
        shift = rng.normal(size=2)
        moved = scale * pts @ R.T + shift
        assert abs(triangle_quality(*moved) - q0) < 1e-12 * max(q0, 1.0)


def test_mesh_quality_is_minimum(interface_mesh):
    qs = triangle_qualities(interface_mesh.nodes, interface_mesh.triangles)
    assert mesh_quality(interface_mesh) == qs.min()
    assert 0.0 < mesh_quality(interface_mesh) <= 1.0


def test_deform_zero_is_identity(interface_mesh):
    V = np.ones((interface_mesh.n_nodes, 2))
    out = deform(interface_mesh, V, 0.0)
    assert out is interface_mesh


def test_deform_rigid_translation_preserves_quality(interface_mesh):
    V = np.tile([0.3, -0.2], (interface_mesh.n_nodes, 1))
    out = deform(interface_mesh, V, 1.0)
    assert abs(mesh_quality(out) - mesh_quality(interface_mesh)) < 1e-12


def test_deform_roundtrip_recovers_nodes(interface_mesh):
    rng = np.random.default_rng(5)
    V = rng.normal(size=(interface_mesh.n_nodes, 2)) * 0.005
    fwd = deform(interface_mesh, V, 1.0)
    back = deform(fwd, -V, 1.0)
    assert np.abs(back.nodes - interface_mesh.nodes).max() < 1e-12


def test_deform_collapse_raises_inverted_element():
    mesh = two_triangle_mesh()
    V = np.zeros((4, 2))
    V[1] = (-0.5, 0.5)  # node (1,0) onto the diagonal edge (0,0)-(1,1)
    with pytest.raises(InvertedElement):
        deform(mesh, V, 1.0)
    # halving the step keeps the element valid
    deform(mesh, V, 0.5)


def test_deform_checks_shape():
    mesh = two_triangle_mesh()
    with pytest.raises(ValueError):
        deform(mesh, np.zeros((3, 2)), 1.0)


def test_validate_accepts_generated(interface_mesh, bridge_mesh):
    validate(interface_mesh)
    validate(bridge_mesh)


def test_write_read_roundtrip(tmp_path, interface_mesh):
    path = tmp_path / "m.mesh"
    write_mesh(interface_mesh, path)
    back = read_mesh(path)
    assert np.array_equal(back.nodes, interface_mesh.nodes)
    assert np.array_equal(back.triangles, interface_mesh.triangles)
    assert np.array_equal(back.cell_region, interface_mesh.cell_region)
    assert np.array_equal(back.boundary_edges, interface_mesh.boundary_edges)
    assert np.array_equal(back.boundary_markers, interface_mesh.boundary_markers)
    assert np.array_equal(back.node_is_shape, interface_mesh.node_is_shape)


def test_field_sections_roundtrip(tmp_path, interface_mesh):
    rng = np.random.default_rng(0)
    scalar = rng.normal(size=interface_mesh.n_nodes)
    vec = rng.normal(size=(interface_mesh.n_nodes, 2))
    path = tmp_path / "m.mesh"
    write_mesh(interface_mesh, path, fields={"u": scalar, "v": vec})
    fields = read_fields(path)
    assert np.array_equal(fields["u"], scalar)
    assert np.array_equal(fields["v"], vec)


def test_read_rejects_out_of_range_triangle(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("mesh2d v1\nnodes 3\n0 0 0\n1 0 0\n0 1 0\n"
                    "triangles 1\n0 1 9 0\nboundary 0\n")
    with pytest.raises(MeshFileError):
        read_mesh(path)


def test_read_rejects_duplicate_boundary_edge(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("mesh2d v1\nnodes 3\n0 0 0\n1 0 0\n0 1 0\n"
                    "triangles 1\n0 1 2 0\n"
                    "boundary 2\n0 1 outer\n1 0 outer\n")
    with pytest.raises(MeshFileError):
        read_mesh(path)


def test_read_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("mesh3d v7\n")
    with pytest.raises(MeshFileError):
        read_mesh(path)
