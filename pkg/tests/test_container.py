import numpy as np
import pytest

from facemotion.container import (ContainerError, load_container,
                                  save_container, sha256_of_arrays)


def _sample_payload():
    arrays = {
        "weights/a": np.arange(12, dtype=np.float32).reshape(3, 4),
        "weights/b": np.array([1.5, -2.5], dtype=np.float64),
        "meta/step": np.array([7], dtype=np.int64),
    }
    meta = {"step": 7, "nested": {"x": [1, 2, 3]}}
    return arrays, meta


def test_round_trip_preserves_arrays_and_meta(tmp_path):
    arrays, meta = _sample_payload()
    path = tmp_path / "blob.fmck"
    save_container(str(path), "unit-test", meta, arrays)
    kind, loaded_meta, loaded_arrays = load_container(str(path))
    assert kind == "unit-test"
    assert loaded_meta == meta
    assert set(loaded_arrays) == set(arrays)
    for name, arr in arrays.items():
        got = loaded_arrays[name]
        assert got.dtype == arr.dtype
        assert got.shape == arr.shape
        assert np.array_equal(got, arr)


def test_write_is_bit_deterministic(tmp_path):
    arrays, meta = _sample_payload()
    p1 = tmp_path / "one.fmck"
    p2 = tmp_path / "two.fmck"
    save_container(str(p1), "unit-test", meta, arrays)
    # Same payload handed over in a different dict order must serialize
    # identically: names are sorted on disk.
    shuffled = dict(reversed(list(arrays.items())))
    save_container(str(p2), "unit-test", dict(meta), shuffled)
    assert p1.read_bytes() == p2.read_bytes()


def test_expected_kind_is_enforced(tmp_path):
    arrays, meta = _sample_payload()
    path = tmp_path / "blob.fmck"
    save_container(str(path), "unit-test", meta, arrays)
    load_container(str(path), expected_kind="unit-test")
    with pytest.raises(ContainerError):
        load_container(str(path), expected_kind="something-else")


def test_corrupted_payload_is_rejected(tmp_path):
    arrays, meta = _sample_payload()
    path = tmp_path / "blob.fmck"
    save_container(str(path), "unit-test", meta, arrays)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ContainerError):
        load_container(str(path))


def test_truncated_file_is_rejected(tmp_path):
    arrays, meta = _sample_payload()
    path = tmp_path / "blob.fmck"
    save_container(str(path), "unit-test", meta, arrays)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 8])
    with pytest.raises(ContainerError):
        load_container(str(path))


def test_bad_magic_is_rejected(tmp_path):
    path = tmp_path / "blob.fmck"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ContainerError):
        load_container(str(path))


def test_missing_file_raises_container_error(tmp_path):
    with pytest.raises(ContainerError):
        load_container(str(tmp_path / "does-not-exist.fmck"))


def test_sha256_of_arrays_ignores_dict_order():
    arrays, _ = _sample_payload()
    shuffled = dict(reversed(list(arrays.items())))
    assert sha256_of_arrays(arrays) == sha256_of_arrays(shuffled)
    # Changing any value must change the digest.
    mutated = {k: v.copy() for k, v in arrays.items()}
    mutated["weights/a"][0, 0] += 1
    assert sha256_of_arrays(mutated) != sha256_of_arrays(arrays)
