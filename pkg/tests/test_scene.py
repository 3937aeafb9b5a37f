import numpy as np

from facemotion.face_model import (canonical_coefficients, compose_scene,
                                   heatmap_sigma, landmark_heatmaps,
                                   parsing_to_onehot, procedural_background,
                                   render_proxy)


def test_heatmap_sigma_scales_linearly():
    assert heatmap_sigma(64) == 2.0
    assert heatmap_sigma(128) == 4.0
    assert heatmap_sigma(256) == 8.0


def test_heatmap_gaussian_values_match_closed_form():
    res = 32
    landmarks = np.array([[10.3, 20.7], [0.5, 0.5]])
    maps = landmark_heatmaps(landmarks, res)
    assert maps.shape == (2, res, res)
    sigma = heatmap_sigma(res)
    centers = np.arange(res) + 0.5
    for k, (lx, ly) in enumerate(landmarks):
        for (row, col) in [(5, 9), (20, 10), (31, 31)]:
            d2 = (centers[col] - lx) ** 2 + (centers[row] - ly) ** 2
            expected = np.exp(-d2 / (2.0 * sigma * sigma))
            assert abs(maps[k, row, col] - expected) < 1e-6


def test_heatmap_peak_location_and_height():
    res = 64
    landmarks = np.array([[12.5, 40.5]])  # exactly on a pixel center
    maps = landmark_heatmaps(landmarks, res)
    flat = maps[0].argmax()
    row, col = divmod(flat, res)
    assert (col, row) == (12, 40)
    assert maps[0, row, col] == 1.0
    assert maps[0].max() <= 1.0


def test_heatmap_argmax_tracks_landmarks(basis, rng):
    from facemotion.face_model import sample_coefficients
    c = sample_coefficients(5, identity_id=2)
    render = render_proxy(c, basis, 64)
    maps = landmark_heatmaps(render.landmarks, 64)
    in_frame = ((render.landmarks[:, 0] >= 0) & (render.landmarks[:, 0] < 64)
                & (render.landmarks[:, 1] >= 0) & (render.landmarks[:, 1] < 64))
    for k in np.flatnonzero(in_frame):
        row, col = divmod(int(maps[k].argmax()), 64)
        assert abs(col + 0.5 - render.landmarks[k, 0]) <= 1.0
        assert abs(row + 0.5 - render.landmarks[k, 1]) <= 1.0


def test_background_is_seeded_and_smooth():
    a = procedural_background(7, 64)
    b = procedural_background(7, 64)
    c = procedural_background(8, 64)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.shape == (64, 64, 3)
    assert np.all(a >= 0.0) and np.all(a <= 1.0)
    # Bilinear blowup of a 5x5 grid: neighboring pixels differ by little.
    assert np.abs(np.diff(a, axis=0)).max() < 0.1
    assert np.abs(np.diff(a, axis=1)).max() < 0.1


def test_compose_scene_overlays_proxy_on_background(basis):
    render = render_proxy(canonical_coefficients(), basis, 64)
    bundle = compose_scene(render, background_seed=3)
    background = procedural_background(3, 64)
    assert np.array_equal(bundle.image[render.mask], render.image[render.mask])
    assert np.array_equal(bundle.image[~render.mask], background[~render.mask])
    assert np.array_equal(bundle.parsing, render.region_map)
    assert bundle.heatmaps.shape == (68, 64, 64)


def test_parsing_onehot_partition():
    parsing = np.array([[0, 1], [2, 3]], dtype=np.int32)
    onehot = parsing_to_onehot(parsing, n_labels=4)
    assert onehot.shape == (4, 2, 2)
    assert np.array_equal(onehot.sum(axis=0), np.ones((2, 2)))
    assert onehot[1, 0, 1] == 1.0 and onehot[3, 1, 1] == 1.0


def test_parsing_onehot_on_render(basis):
    render = render_proxy(canonical_coefficients(), basis, 64)
    onehot = parsing_to_onehot(render.region_map)
    assert onehot.shape == (4, 64, 64)
    assert np.allclose(onehot.sum(axis=0), 1.0)
    assert np.array_equal(onehot[0] == 1.0, ~render.mask)
