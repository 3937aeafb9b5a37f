"""Parametric face proxy: coefficients, blendshape basis, rasterizer,
scene composition, and synthetic dataset generation."""

from .basis import (
    EYE,
    MOUTH,
    N_LANDMARKS,
    N_REGIONS,
    SKIN,
    BasisAssetError,
    FaceBasis,
    basis_fingerprint,
    build_face_basis,
    load_basis,
    mirror_permutation,
    save_basis,
)
from .coefficients import (
    Camera,
    CoefficientSet,
    Lighting,
    Pose,
    SamplerConfig,
    coefficients_from_json,
    coefficients_to_json,
    from_vector,
    group_slices,
    mix_coefficients,
    sample_coefficients,
    to_vector,
    vector_size,
)
from .dataset import DatasetIndex, SampleRecord, generate_dataset, load_dataset
from .mesh import blendshape_vertices, rotation_matrix, synthesize_mesh, vertex_normals
from .raster import (
    VALID_RESOLUTIONS,
    ProxyRender,
    canonical_coefficients,
    landmark_visibility,
    project_vertices,
    render_proxy,
)
from .scene import (
    SpatialBundle,
    compose_scene,
    heatmap_sigma,
    landmark_heatmaps,
    parsing_to_onehot,
    procedural_background,
)

__all__ = [
    "BasisAssetError", "Camera", "CoefficientSet", "DatasetIndex", "EYE",
    "FaceBasis", "Lighting", "MOUTH", "N_LANDMARKS", "N_REGIONS", "Pose",
    "ProxyRender", "SKIN", "SampleRecord", "SamplerConfig", "SpatialBundle",
    "VALID_RESOLUTIONS", "basis_fingerprint", "blendshape_vertices",
    "build_face_basis", "canonical_coefficients", "coefficients_from_json",
    "coefficients_to_json", "compose_scene", "from_vector", "generate_dataset",
    "group_slices", "heatmap_sigma", "landmark_heatmaps", "landmark_visibility",
    "load_basis", "load_dataset", "mirror_permutation", "mix_coefficients",
    "parsing_to_onehot", "procedural_background", "project_vertices",
    "render_proxy", "rotation_matrix", "sample_coefficients", "save_basis",
    "synthesize_mesh", "to_vector", "vector_size", "vertex_normals",
]
