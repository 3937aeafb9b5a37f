import os

import numpy as np
import pytest

from facemotion.face_model import (basis_fingerprint, generate_dataset,
                                   load_dataset, to_vector)


def test_layout_and_counts(tiny_dataset_dir, tiny_index):
    assert os.path.isfile(os.path.join(tiny_dataset_dir, "manifest.jsonl"))
    assert os.path.isfile(os.path.join(tiny_dataset_dir, "dataset.json"))
    assert len(tiny_index) == 12
    assert tiny_index.resolution == 64
    assert tiny_index.meta["n_identities"] == 4
    assert tiny_index.meta["samples_per_identity"] == 3
    ids = [rec.sample_id for rec in tiny_index.records]
    assert ids == list(range(12))


def test_fingerprint_binds_dataset_to_basis(tiny_index, basis):
    assert tiny_index.meta["basis_fingerprint"] == basis_fingerprint(basis)


def test_by_identity_groups(tiny_index):
    groups = tiny_index.by_identity()
    assert sorted(groups) == [0, 1, 2, 3]
    for recs in groups.values():
        assert len(recs) == 3
        shapes = {tuple(rec.coefficients.shape) for rec in recs}
        assert len(shapes) == 1  # identity-static weights shared
        poses = {rec.coefficients.pose for rec in recs}
        assert len(poses) == 3  # per-frame motion varies


def test_bundle_contents(tiny_index):
    rec = tiny_index.records[0]
    bundle = tiny_index.load_bundle(rec)
    res = tiny_index.resolution
    assert bundle.image.shape == (res, res, 3)
    assert bundle.image.dtype == np.float32
    assert bundle.image.min() >= 0.0 and bundle.image.max() <= 1.0
    assert bundle.parsing.shape == (res, res)
    assert set(np.unique(bundle.parsing)) <= {0, 1, 2, 3}
    assert bundle.heatmaps.shape == (68, res, res)
    assert bundle.landmarks.shape == (68, 2)


def test_generation_is_seed_deterministic(tmp_path, basis):
    a = tmp_path / "a"
    b = tmp_path / "b"
    generate_dataset(basis, str(a), n_identities=2, samples_per_identity=2,
                     resolution=64, seed=5)
    generate_dataset(basis, str(b), n_identities=2, samples_per_identity=2,
                     resolution=64, seed=5)
    for sub in ("images/000000.png", "images/000003.png",
                "parsing/000002.png", "landmarks/000001.npy",
                "manifest.jsonl"):
        assert (a / sub).read_bytes() == (b / sub).read_bytes(), sub


def test_different_seeds_give_different_identities(tmp_path, basis):
    a = generate_dataset(basis, str(tmp_path / "s5"), n_identities=1,
                         samples_per_identity=1, resolution=64, seed=5)
    b = generate_dataset(basis, str(tmp_path / "s6"), n_identities=1,
                         samples_per_identity=1, resolution=64, seed=6)
    assert not np.array_equal(a[0].coefficients.shape, b[0].coefficients.shape)


def test_manifest_round_trip_preserves_coefficients(tiny_dataset_dir, tiny_index):
    reloaded = load_dataset(tiny_dataset_dir)
    for rec, back in zip(tiny_index.records, reloaded.records):
        assert rec.sample_id == back.sample_id
        assert rec.identity_id == back.identity_id
        assert np.allclose(to_vector(rec.coefficients),
                           to_vector(back.coefficients))


def test_load_missing_directory_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(str(tmp_path / "nope"))
