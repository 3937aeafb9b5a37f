import numpy as np
import pytest

from facemotion.face_model import (Camera, CoefficientSet, Lighting, Pose,
                                   blendshape_vertices, rotation_matrix,
                                   sample_coefficients, synthesize_mesh,
                                   vertex_normals)


def _neutral(jaw=0.0, expression=None, shape=None, **light):
    k = 10
    lighting = Lighting(ambient=light.get("ambient", 0.5),
                        direction=np.array(light.get("direction", [0.0, 0.0, 1.0])),
                        intensity=light.get("intensity", 0.5))
    return CoefficientSet(
        camera=Camera(scale=0.85, tx=0.0, ty=0.0),
        pose=Pose(yaw=0.0, pitch=0.0, roll=0.0, jaw=jaw),
        expression=np.zeros(k) if expression is None else np.asarray(expression, dtype=np.float64),
        shape=np.zeros(k) if shape is None else np.asarray(shape, dtype=np.float64),
        lighting=lighting,
        texture=np.zeros(k),
    )


def test_rotation_matrix_identity_at_zero():
    assert np.allclose(rotation_matrix(0.0, 0.0, 0.0), np.eye(3), atol=1e-12)


def test_rotation_matrix_is_orthonormal(rng):
    for _ in range(50):
        yaw, pitch, roll = rng.uniform(-np.pi, np.pi, size=3)
        r = rotation_matrix(yaw, pitch, roll)
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-10)
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-10)


def test_rotation_composition_order():
    # Oracle: roll about z applied after pitch about x applied after yaw
    # about y, each checked on a basis vector in isolation.
    yaw, pitch, roll = 0.3, -0.2, 0.1
    z = np.array([0.0, 0.0, 1.0])
    assert np.allclose(rotation_matrix(yaw, 0, 0) @ z,
                       [np.sin(yaw), 0.0, np.cos(yaw)], atol=1e-12)
    assert np.allclose(rotation_matrix(0, pitch, 0) @ z,
                       [0.0, -np.sin(pitch), np.cos(pitch)], atol=1e-12)
    x = np.array([1.0, 0.0, 0.0])
    assert np.allclose(rotation_matrix(0, 0, roll) @ x,
                       [np.cos(roll), np.sin(roll), 0.0], atol=1e-12)
    combined = rotation_matrix(yaw, pitch, roll)
    manual = rotation_matrix(0, 0, roll) @ rotation_matrix(0, pitch, 0) @ rotation_matrix(yaw, 0, 0)
    assert np.allclose(combined, manual, atol=1e-12)


def test_zero_weights_give_mean_mesh(basis):
    out = blendshape_vertices(_neutral(), basis)
    assert np.allclose(out, basis.mean_vertices, atol=1e-6)


def test_expression_delta_is_linear(basis):
    # Two sets differing only in expression differ by exactly the weighted
    # expression basis sum.
    w = np.linspace(-1.0, 1.0, 10)
    a = blendshape_vertices(_neutral(), basis)
    b = blendshape_vertices(_neutral(expression=w), basis)
    expected = np.tensordot(w, basis.expression_basis.astype(np.float64), axes=1)
    assert np.allclose(b - a, expected, atol=1e-9)


def test_jaw_displacement_is_linear(basis):
    a = blendshape_vertices(_neutral(jaw=0.0), basis)
    b = blendshape_vertices(_neutral(jaw=1.0), basis)
    mid = blendshape_vertices(_neutral(jaw=0.5), basis)
    assert np.allclose(mid, 0.5 * (a + b), atol=1e-9)
    assert np.linalg.norm(b - a) > 0


def test_wrong_weight_dimension_is_rejected(basis):
    bad = _neutral()
    bad.expression = np.zeros(7)
    with pytest.raises(ValueError):
        blendshape_vertices(bad, basis)


def test_vertex_normals_unit_and_outward_on_sphere():
    # Octahedron centered at origin: all vertex normals must be unit and
    # point away from the center.
    verts = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0],
                      [0, 0, 1], [0, 0, -1]], dtype=np.float64)
    faces = np.array([[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
                      [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]], dtype=np.int32)
    normals = vertex_normals(verts, faces)
    assert np.allclose(np.linalg.norm(normals, axis=1), 1.0, atol=1e-9)
    assert np.all(np.sum(normals * verts, axis=1) > 0.9)


def test_yaw_rotates_synthesized_vertices(basis):
    c0 = sample_coefficients(3, identity_id=1)
    v0, _ = synthesize_mesh(c0, basis)
    yawed = CoefficientSet(camera=c0.camera,
                           pose=Pose(c0.pose.yaw + 0.2, c0.pose.pitch,
                                     c0.pose.roll, c0.pose.jaw),
                           expression=c0.expression, shape=c0.shape,
                           lighting=c0.lighting, texture=c0.texture)
    v1, _ = synthesize_mesh(yawed, basis)
    # Same mesh, different rigid pose: pairwise distances are preserved.
    d0 = np.linalg.norm(v0[1:50] - v0[0], axis=1)
    d1 = np.linalg.norm(v1[1:50] - v1[0], axis=1)
    assert np.allclose(d0, d1, atol=1e-9)
    assert not np.allclose(v0, v1, atol=1e-4)


def test_shading_is_lambertian(basis):
    # With zero intensity the color is ambient * albedo everywhere, so
    # doubling ambient doubles every unclipped color.
    dim = _neutral(ambient=0.2, intensity=0.0)
    bright = _neutral(ambient=0.4, intensity=0.0)
    _, c_dim = synthesize_mesh(dim, basis)
    _, c_bright = synthesize_mesh(bright, basis)
    unclipped = c_bright < 1.0
    assert np.allclose(c_bright[unclipped], 2.0 * c_dim[unclipped], atol=1e-9)


def test_colors_stay_in_unit_range(basis, rng):
    for _ in range(10):
        c = sample_coefficients(int(rng.integers(1 << 31)), identity_id=1)
        _, colors = synthesize_mesh(c, basis)
        assert np.all(colors >= 0.0) and np.all(colors <= 1.0)
