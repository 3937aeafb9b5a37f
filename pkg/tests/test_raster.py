import numpy as np
import pytest

from facemotion.face_model import (Camera, CoefficientSet, Pose,
                                   canonical_coefficients,
                                   landmark_visibility, project_vertices,
                                   render_proxy, sample_coefficients)


def test_projection_formula_oracle():
    cam = Camera(scale=0.8, tx=0.1, ty=-0.05)
    verts = np.array([[0.0, 0.0, 0.0], [0.5, -0.25, 1.0]])
    res = 64
    px, depth = project_vertices(verts, cam, res)
    half = res / 2.0
    for i, (x, y, _) in enumerate(verts):
        assert px[i, 0] == pytest.approx((x * cam.scale + cam.tx) * half + half)
        assert px[i, 1] == pytest.approx(half - (y * cam.scale + cam.ty) * half)
    assert np.array_equal(depth, verts[:, 2])


def test_projection_center_maps_to_image_center():
    px, _ = project_vertices(np.zeros((1, 3)), Camera(0.85, 0.0, 0.0), 128)
    assert np.allclose(px[0], [64.0, 64.0])


def test_translation_moves_pixels_linearly():
    base, _ = project_vertices(np.zeros((1, 3)), Camera(0.85, 0.0, 0.0), 64)
    moved, _ = project_vertices(np.zeros((1, 3)), Camera(0.85, 0.25, 0.25), 64)
    assert moved[0, 0] - base[0, 0] == pytest.approx(0.25 * 32.0)
    # +y in world moves up, which is down in pixel row terms
    assert moved[0, 1] - base[0, 1] == pytest.approx(-0.25 * 32.0)


def test_canonical_coefficients_are_neutral():
    c = canonical_coefficients()
    c.validate()
    assert c.pose == Pose(0.0, 0.0, 0.0, 0.0)
    assert c.camera.scale == pytest.approx(0.85)
    assert c.camera.tx == 0.0 and c.camera.ty == 0.0
    assert np.all(c.expression == 0) and np.all(c.shape == 0)
    assert np.all(c.texture == 0)
    assert np.allclose(c.lighting.direction, [0.0, 0.0, 1.0])


def test_render_shapes_and_ranges(basis):
    render = render_proxy(canonical_coefficients(), basis, 64)
    assert render.image.shape == (64, 64, 3)
    assert render.image.dtype == np.float32
    assert render.mask.shape == (64, 64) and render.mask.dtype == np.bool_
    assert render.region_map.shape == (64, 64)
    assert render.landmarks.shape == (68, 2)
    assert render.depth.shape == (64, 64)
    assert np.all(render.image >= 0) and np.all(render.image <= 1)
    # Pixels outside the mask carry no color or depth.
    assert np.all(render.image[~render.mask] == 0)
    assert np.all(render.depth[~render.mask] == 0)
    assert np.all((render.region_map > 0) == render.mask)


def test_canonical_mask_coverage_is_moderate(basis):
    render = render_proxy(canonical_coefficients(), basis, 64)
    coverage = render.mask.mean()
    assert 0.2 <= coverage <= 0.8


def test_invalid_resolution_is_rejected(basis):
    with pytest.raises(ValueError):
        render_proxy(canonical_coefficients(), basis, 63)


def test_nonpositive_scale_is_rejected(basis):
    c = canonical_coefficients()
    bad = CoefficientSet(camera=Camera(0.0, 0.0, 0.0), pose=c.pose,
                         expression=c.expression, shape=c.shape,
                         lighting=c.lighting, texture=c.texture)
    with pytest.raises(ValueError):
        render_proxy(bad, basis, 64)


def test_render_is_deterministic(basis):
    c = sample_coefficients(17, identity_id=4)
    a = render_proxy(c, basis, 64)
    b = render_proxy(c, basis, 64)
    assert np.array_equal(a.image, b.image)
    assert np.array_equal(a.region_map, b.region_map)
    assert np.array_equal(a.landmarks, b.landmarks)


def test_resolution_covariance_of_landmarks(basis):
    # The same scene rendered at 64 and 128 must place landmarks at the
    # same normalized positions, within half a pixel at the fine scale.
    c = sample_coefficients(23, identity_id=9)
    lo = render_proxy(c, basis, 64)
    hi = render_proxy(c, basis, 128)
    assert np.all(np.abs(lo.landmarks * 2.0 - hi.landmarks) <= 0.5 + 1e-9)


def test_translation_shifts_render(basis):
    # A 0.25-NDC horizontal shift at 64 px moves content by exactly 8
    # columns; compare the overlapping region of the masks.
    c = canonical_coefficients()
    moved = CoefficientSet(camera=Camera(c.camera.scale, 0.25, 0.0),
                           pose=c.pose, expression=c.expression,
                           shape=c.shape, lighting=c.lighting,
                           texture=c.texture)
    a = render_proxy(c, basis, 64)
    b = render_proxy(moved, basis, 64)
    shift = 8
    assert np.array_equal(a.mask[:, :-shift], b.mask[:, shift:])
    assert np.allclose(a.image[:, :-shift], b.image[:, shift:], atol=1e-6)


def test_occlusion_uses_depth(basis):
    # A strongly yawed face still produces a valid single-layer image:
    # every masked pixel has the depth of the nearest surface, so depth
    # values inside the mask are finite and the mask is nonempty.
    c = canonical_coefficients()
    yawed = CoefficientSet(camera=c.camera, pose=Pose(0.45, 0.0, 0.0, 0.0),
                           expression=c.expression, shape=c.shape,
                           lighting=c.lighting, texture=c.texture)
    render = render_proxy(yawed, basis, 64)
    assert render.mask.any()
    assert np.all(np.isfinite(render.depth))


def test_landmark_visibility_flips_with_yaw(basis):
    c = canonical_coefficients()
    left = CoefficientSet(camera=c.camera, pose=Pose(-0.45, 0.0, 0.0, 0.0),
                          expression=c.expression, shape=c.shape,
                          lighting=c.lighting, texture=c.texture)
    right = CoefficientSet(camera=c.camera, pose=Pose(0.45, 0.0, 0.0, 0.0),
                           expression=c.expression, shape=c.shape,
                           lighting=c.lighting, texture=c.texture)
    vl = landmark_visibility(left, basis)
    vr = landmark_visibility(right, basis)
    assert vl.dtype == np.bool_ and vl.shape == (68,)
    # Turning the head changes which landmarks face the camera.
    assert np.any(vl != vr)
