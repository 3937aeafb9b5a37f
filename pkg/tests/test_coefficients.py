import numpy as np
import pytest

from facemotion.face_model import (CoefficientSet, SamplerConfig,
                                   coefficients_from_json,
                                   coefficients_to_json, from_vector,
                                   group_slices, mix_coefficients,
                                   sample_coefficients, to_vector, vector_size)


def test_vector_layout_is_contiguous_and_complete():
    slices = group_slices()
    assert list(slices) == ["camera", "pose", "expression", "shape",
                            "lighting", "texture"]
    cursor = 0
    for name, sl in slices.items():
        assert sl.start == cursor, name
        cursor = sl.stop
    assert cursor == vector_size() == 42


def test_group_widths():
    slices = group_slices()
    widths = {name: sl.stop - sl.start for name, sl in slices.items()}
    assert widths == {"camera": 3, "pose": 4, "expression": 10, "shape": 10,
                      "lighting": 5, "texture": 10}


def test_to_from_vector_round_trip(rng):
    for seed in range(20):
        coeffs = sample_coefficients(int(rng.integers(1 << 31)))
        vec = to_vector(coeffs)
        assert vec.shape == (vector_size(),)
        back = from_vector(vec)
        assert np.allclose(to_vector(back), vec)


def test_from_vector_repair_clamps_out_of_range():
    vec = np.zeros(vector_size(), dtype=np.float64)
    vec[0] = -5.0  # scale must stay positive
    repaired = from_vector(vec, repair=True)
    assert repaired.camera.scale > 0
    with pytest.raises(ValueError):
        from_vector(vec, repair=False).validate()


def test_from_vector_rejects_wrong_length():
    with pytest.raises(ValueError):
        from_vector(np.zeros(41))


def test_sampler_respects_configured_ranges():
    config = SamplerConfig()
    for seed in range(200):
        c = sample_coefficients(seed, config=config)
        c.validate()
        assert config.yaw_range[0] <= c.pose.yaw <= config.yaw_range[1]
        assert config.pitch_range[0] <= c.pose.pitch <= config.pitch_range[1]
        assert config.roll_range[0] <= c.pose.roll <= config.roll_range[1]
        assert config.jaw_range[0] <= c.pose.jaw <= config.jaw_range[1]
        assert config.scale_range[0] <= c.camera.scale <= config.scale_range[1]
        assert np.all(np.abs(c.expression) <= config.weight_clip)
        assert np.all(np.abs(c.shape) <= config.weight_clip)
        assert np.all(np.abs(c.texture) <= config.weight_clip)
        n = np.linalg.norm(c.lighting.direction)
        assert n == pytest.approx(1.0, abs=1e-6)


def test_same_identity_shares_shape_and_texture():
    a = sample_coefficients(100, identity_id=7)
    b = sample_coefficients(101, identity_id=7)
    c = sample_coefficients(102, identity_id=8)
    assert np.array_equal(a.shape, b.shape)
    assert np.array_equal(a.texture, b.texture)
    assert not np.array_equal(a.shape, c.shape)
    # Per-frame groups still vary between draws of the same identity.
    assert a.pose != b.pose


def test_sampling_is_seed_deterministic():
    a = sample_coefficients(42, identity_id=3)
    b = sample_coefficients(42, identity_id=3)
    assert np.array_equal(to_vector(a), to_vector(b))


def test_mix_takes_motion_from_driving_and_statics_from_source():
    source = sample_coefficients(1, identity_id=1)
    driving = sample_coefficients(2, identity_id=2)
    mixed = mix_coefficients(source, driving)
    assert mixed.camera is driving.camera
    assert mixed.pose is driving.pose
    assert mixed.expression is driving.expression
    assert mixed.shape is source.shape
    assert mixed.lighting is source.lighting
    assert mixed.texture is source.texture


def test_mix_with_itself_is_identity():
    for seed in range(50):
        c = sample_coefficients(seed, identity_id=seed % 5)
        m = mix_coefficients(c, c)
        assert np.array_equal(to_vector(m), to_vector(c))


def test_mix_fuzz_vector_slots(rng):
    slices = group_slices()
    drive_groups = ("camera", "pose", "expression")
    for _ in range(1000):
        s = sample_coefficients(int(rng.integers(1 << 31)),
                                identity_id=int(rng.integers(100)))
        d = sample_coefficients(int(rng.integers(1 << 31)),
                                identity_id=int(rng.integers(100)))
        mv = to_vector(mix_coefficients(s, d))
        sv, dv = to_vector(s), to_vector(d)
        for name, sl in slices.items():
            want = dv[sl] if name in drive_groups else sv[sl]
            assert np.array_equal(mv[sl], want), name


def test_json_round_trip():
    c = sample_coefficients(9, identity_id=2)
    blob = coefficients_to_json(c)
    back = coefficients_from_json(blob)
    assert isinstance(back, CoefficientSet)
    assert np.allclose(to_vector(back), to_vector(c))
