import numpy as np
import pytest

from facemotion.face_model import (EYE, MOUTH, N_LANDMARKS, SKIN,
                                   BasisAssetError, basis_fingerprint,
                                   build_face_basis, load_basis,
                                   mirror_permutation, save_basis)


def test_basis_shapes_are_consistent(basis):
    v = basis.mean_vertices.shape[0]
    assert basis.mean_vertices.shape == (v, 3)
    assert basis.shape_basis.shape == (10, v, 3)
    assert basis.expression_basis.shape == (10, v, 3)
    assert basis.texture_basis.shape == (10, v, 3)
    assert basis.jaw_field.shape == (v, 3)
    assert basis.mean_albedo.shape == (v, 3)
    assert basis.faces.ndim == 2 and basis.faces.shape[1] == 3
    assert basis.region_labels.shape == (v,)
    assert basis.landmark_indices.shape == (N_LANDMARKS,)
    assert N_LANDMARKS == 68


def test_basis_value_ranges(basis):
    assert np.all(np.isfinite(basis.mean_vertices))
    assert np.all(basis.mean_albedo >= 0) and np.all(basis.mean_albedo <= 1)
    labels = set(np.unique(basis.region_labels).tolist())
    assert labels == {SKIN, EYE, MOUTH}
    v = basis.mean_vertices.shape[0]
    assert basis.faces.min() >= 0 and basis.faces.max() < v
    assert basis.landmark_indices.min() >= 0
    assert basis.landmark_indices.max() < v
    assert len(set(basis.landmark_indices.tolist())) == N_LANDMARKS


def test_mesh_is_closed_and_consistently_oriented(basis):
    # Every edge of a watertight, consistently oriented triangle mesh
    # appears exactly once in each direction.
    edges = {}
    for tri in basis.faces:
        a, b, c = (int(x) for x in tri)
        for u, w in ((a, b), (b, c), (c, a)):
            edges[(u, w)] = edges.get((u, w), 0) + 1
    assert all(count == 1 for count in edges.values())
    assert all((w, u) in edges for (u, w) in edges)


def test_build_is_seed_deterministic():
    a = build_face_basis(seed=0)
    b = build_face_basis(seed=0)
    assert basis_fingerprint(a) == basis_fingerprint(b)
    assert np.array_equal(a.shape_basis, b.shape_basis)
    c = build_face_basis(seed=1)
    assert basis_fingerprint(c) != basis_fingerprint(a)


def test_mirror_permutation_is_an_involution(basis):
    perm = mirror_permutation(basis)
    v = basis.mean_vertices.shape[0]
    assert perm.shape == (v,)
    assert sorted(perm.tolist()) == list(range(v))
    assert np.array_equal(perm[perm], np.arange(v))
    # Mirrored positions match the x-flipped originals.
    mirrored = basis.mean_vertices[perm]
    flipped = basis.mean_vertices * np.array([-1.0, 1.0, 1.0], dtype=np.float32)
    assert np.allclose(mirrored, flipped, atol=1e-5)


def test_save_load_round_trip(tmp_path, basis):
    path = tmp_path / "basis.fbas"
    save_basis(basis, str(path))
    loaded = load_basis(str(path))
    assert basis_fingerprint(loaded) == basis_fingerprint(basis)
    assert np.array_equal(loaded.mean_vertices, basis.mean_vertices)
    assert np.array_equal(loaded.faces, basis.faces)


def test_corrupted_asset_is_rejected(tmp_path, basis):
    path = tmp_path / "basis.fbas"
    save_basis(basis, str(path))
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(BasisAssetError):
        load_basis(str(path))
