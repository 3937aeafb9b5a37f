"""Face coefficient groups: sampling priors, mixing, and vector packing.

A face is described by six groups: camera (weak-perspective scale and
translation), pose (three Euler angles plus a jaw-open scalar), expression
weights, shape weights, lighting (ambient + one directional Lambertian
light), and texture weights. Re-enactment mixes geometry-related groups
from the driving face with the remaining groups from the source face.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Identity-pinned draws use their own seed stream so that shape/texture
# depend on identity_id alone, never on the per-sample seed.
_IDENTITY_STREAM = 0x1DF0CE


@dataclass(frozen=True)
class Camera:
    scale: float
    tx: float
    ty: float


@dataclass(frozen=True)
class Pose:
    yaw: float
    pitch: float
    roll: float
    jaw: float  # jaw-open amount in [0, 1]


@dataclass(frozen=True)
class Lighting:
    ambient: float
    direction: np.ndarray  # unit 3-vector, points toward the light
    intensity: float


@dataclass
class CoefficientSet:
    camera: Camera
    pose: Pose
    expression: np.ndarray
    shape: np.ndarray
    lighting: Lighting
    texture: np.ndarray

    def validate(self):
        if not self.camera.scale > 0:
            raise ValueError(f"camera scale must be positive, got {self.camera.scale}")
        for name in ("yaw", "pitch", "roll"):
            if abs(getattr(self.pose, name)) > np.pi:
                raise ValueError(f"pose angle {name} out of [-pi, pi]")
        if not 0.0 <= self.pose.jaw <= 1.0:
            raise ValueError(f"jaw must lie in [0, 1], got {self.pose.jaw}")
        direction = np.asarray(self.lighting.direction, dtype=np.float64)
        if abs(float(np.linalg.norm(direction)) - 1.0) > 1e-5:
            raise ValueError("lighting direction must be unit norm")
        if not (0.0 <= self.lighting.ambient <= 1.0 and 0.0 <= self.lighting.intensity <= 1.0):
            raise ValueError("lighting ambient/intensity must lie in [0, 1]")
        for name in ("expression", "shape", "texture"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} weights must be finite")
        return self


@dataclass(frozen=True)
class SamplerConfig:
    """Documented priors for synthetic coefficient sampling."""

    yaw_range: tuple = (-0.45, 0.45)
    pitch_range: tuple = (-0.25, 0.25)
    roll_range: tuple = (-0.15, 0.15)
    jaw_range: tuple = (0.0, 0.55)
    scale_range: tuple = (0.78, 0.92)
    translation_limit: float = 0.1
    ambient_range: tuple = (0.35, 0.6)
    intensity_range: tuple = (0.35, 0.7)
    weight_clip: float = 3.0  # basis weights ~ N(0,1) clipped to +-3
    k_expression: int = 10
    k_shape: int = 10
    k_texture: int = 10


DEFAULT_SAMPLER = SamplerConfig()


def _clipped_normal(rng, size, clip):
    return np.clip(rng.standard_normal(size), -clip, clip)


def _hemisphere_direction(rng):
    # light always comes from the camera side (positive z component)
    while True:
        d = rng.standard_normal(3)
        n = np.linalg.norm(d)
        if n > 1e-6:
            d = d / n
            d[2] = abs(d[2])
            return d / np.linalg.norm(d)


def sample_coefficients(rng_seed: int, identity_id=None,
                        config: SamplerConfig = DEFAULT_SAMPLER) -> CoefficientSet:
    """Draw one coefficient set.

    When identity_id is given (an int or a tuple of ints), shape and texture
    weights are a pure function of identity_id, so all samples of an identity
    share them regardless of rng_seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed) & 0xFFFFFFFF]))
    camera = Camera(
        scale=float(rng.uniform(*config.scale_range)),
        tx=float(rng.uniform(-config.translation_limit, config.translation_limit)),
        ty=float(rng.uniform(-config.translation_limit, config.translation_limit)),
    )
    pose = Pose(
        yaw=float(rng.uniform(*config.yaw_range)),
        pitch=float(rng.uniform(*config.pitch_range)),
        roll=float(rng.uniform(*config.roll_range)),
        jaw=float(rng.uniform(*config.jaw_range)),
    )
    expression = _clipped_normal(rng, config.k_expression, config.weight_clip)
    lighting = Lighting(
        ambient=float(rng.uniform(*config.ambient_range)),
        direction=_hemisphere_direction(rng),
        intensity=float(rng.uniform(*config.intensity_range)),
    )
    if identity_id is None:
        shape = _clipped_normal(rng, config.k_shape, config.weight_clip)
        texture = _clipped_normal(rng, config.k_texture, config.weight_clip)
    else:
        key = identity_id if isinstance(identity_id, tuple) else (identity_id,)
        id_rng = np.random.default_rng(
            np.random.SeedSequence([_IDENTITY_STREAM] + [int(k) for k in key]))
        shape = _clipped_normal(id_rng, config.k_shape, config.weight_clip)
        texture = _clipped_normal(id_rng, config.k_texture, config.weight_clip)
    return CoefficientSet(camera, pose, expression, shape, lighting, texture).validate()


def mix_coefficients(source: CoefficientSet, driving: CoefficientSet) -> CoefficientSet:
    """Geometry (camera, pose, expression) from driving; identity-bearing
    groups (shape, lighting, texture) from source. Pure field selection."""
    return CoefficientSet(
        camera=driving.camera,
        pose=driving.pose,
        expression=driving.expression,
        shape=source.shape,
        lighting=source.lighting,
        texture=source.texture,
    )


# ---------------------------------------------------------------------------
# flat-vector packing (regression targets for the coefficient encoder)

def vector_size(config: SamplerConfig = DEFAULT_SAMPLER) -> int:
    return 3 + 4 + config.k_expression + config.k_shape + 5 + config.k_texture


def group_slices(config: SamplerConfig = DEFAULT_SAMPLER) -> dict[str, slice]:
    k_e, k_s, k_t = config.k_expression, config.k_shape, config.k_texture
    out, start = {}, 0
    for name, size in [("camera", 3), ("pose", 4), ("expression", k_e),
                       ("shape", k_s), ("lighting", 5), ("texture", k_t)]:
        out[name] = slice(start, start + size)
        start += size
    return out


def to_vector(c: CoefficientSet) -> np.ndarray:
    return np.concatenate([
        [c.camera.scale, c.camera.tx, c.camera.ty],
        [c.pose.yaw, c.pose.pitch, c.pose.roll, c.pose.jaw],
        np.asarray(c.expression, dtype=np.float64),
        np.asarray(c.shape, dtype=np.float64),
        [c.lighting.ambient], np.asarray(c.lighting.direction, dtype=np.float64),
        [c.lighting.intensity],
        np.asarray(c.texture, dtype=np.float64),
    ])


def from_vector(vec: np.ndarray, config: SamplerConfig = DEFAULT_SAMPLER,
                repair: bool = False) -> CoefficientSet:
    """Unpack a flat vector. With repair=True the result is coerced onto the
    valid manifold (positive scale, unit light direction, clamped ranges) so
    regressor outputs always form a usable coefficient set."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (vector_size(config),):
        raise ValueError(f"expected coefficient vector of size {vector_size(config)}, got {vec.shape}")
    sl = group_slices(config)
    cam, pose, light = vec[sl["camera"]], vec[sl["pose"]], vec[sl["lighting"]]
    scale, tx, ty = cam
    yaw, pitch, roll, jaw = pose
    ambient, intensity = light[0], light[4]
    direction = light[1:4].copy()
    if repair:
        scale = max(float(scale), 1e-3)
        yaw, pitch, roll = np.clip([yaw, pitch, roll], -np.pi, np.pi)
        jaw = float(np.clip(jaw, 0.0, 1.0))
        ambient = float(np.clip(ambient, 0.0, 1.0))
        intensity = float(np.clip(intensity, 0.0, 1.0))
        n = np.linalg.norm(direction)
        direction = direction / n if n > 1e-6 else np.array([0.0, 0.0, 1.0])
    return CoefficientSet(
        camera=Camera(float(scale), float(tx), float(ty)),
        pose=Pose(float(yaw), float(pitch), float(roll), float(jaw)),
        expression=vec[sl["expression"]].copy(),
        shape=vec[sl["shape"]].copy(),
        lighting=Lighting(float(ambient), direction, float(intensity)),
        texture=vec[sl["texture"]].copy(),
    )


def coefficients_to_json(c: CoefficientSet) -> dict:
    return {
        "camera": {"scale": c.camera.scale, "tx": c.camera.tx, "ty": c.camera.ty},
        "pose": {"yaw": c.pose.yaw, "pitch": c.pose.pitch, "roll": c.pose.roll, "jaw": c.pose.jaw},
        "expression": np.asarray(c.expression, dtype=float).tolist(),
        "shape": np.asarray(c.shape, dtype=float).tolist(),
        "lighting": {"ambient": c.lighting.ambient,
                     "direction": np.asarray(c.lighting.direction, dtype=float).tolist(),
                     "intensity": c.lighting.intensity},
        "texture": np.asarray(c.texture, dtype=float).tolist(),
    }


def coefficients_from_json(d: dict) -> CoefficientSet:
    return CoefficientSet(
        camera=Camera(d["camera"]["scale"], d["camera"]["tx"], d["camera"]["ty"]),
        pose=Pose(d["pose"]["yaw"], d["pose"]["pitch"], d["pose"]["roll"], d["pose"]["jaw"]),
        expression=np.asarray(d["expression"], dtype=np.float64),
        shape=np.asarray(d["shape"], dtype=np.float64),
        lighting=Lighting(d["lighting"]["ambient"],
                          np.asarray(d["lighting"]["direction"], dtype=np.float64),
                          d["lighting"]["intensity"]),
        texture=np.asarray(d["texture"], dtype=np.float64),
    )
