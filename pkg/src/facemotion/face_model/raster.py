"""Weak-perspective projection and z-buffer triangle rasterization.

Produces textured face proxies: shaded image, coverage mask, region-ID map,
projected landmarks, and a depth map. Rendering is plain numpy, deterministic,
and intentionally not differentiable: proxies only ever enter the pipeline as
network inputs and warping targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import FaceBasis, N_LANDMARKS
from .coefficients import Camera, CoefficientSet, Lighting, Pose, SamplerConfig, DEFAULT_SAMPLER
from .mesh import synthesize_mesh

VALID_RESOLUTIONS = (64, 128, 256)


@dataclass
class ProxyRender:
    image: np.ndarray       # (H, W, 3) float32 in [0, 1], zero outside mask
    mask: np.ndarray        # (H, W) bool
    region_map: np.ndarray  # (H, W) int32; 0 = background
    landmarks: np.ndarray   # (68, 2) float64 pixel coordinates (x, y)
    depth: np.ndarray       # (H, W) float32 camera-space z, 0 outside mask

    @property
    def resolution(self) -> int:
        return self.image.shape[0]


def project_vertices(vertices: np.ndarray, camera: Camera, resolution: int):
    """Weak perspective: scale + 2D translation in NDC, then pixel mapping.

    Pixel x = (x * s + tx) * W/2 + W/2; rows grow downward. Returns pixel
    coordinates (V, 2) and camera-space depth (larger = closer).
    """
    half = resolution / 2.0
    px = (vertices[:, 0] * camera.scale + camera.tx) * half + half
    py = half - (vertices[:, 1] * camera.scale + camera.ty) * half
    return np.stack([px, py], axis=1), vertices[:, 2].copy()


def canonical_coefficients(config: SamplerConfig = DEFAULT_SAMPLER) -> CoefficientSet:
    """Front-facing neutral face with mid-range camera and lighting."""
    return CoefficientSet(
        camera=Camera(float(np.mean(config.scale_range)), 0.0, 0.0),
        pose=Pose(0.0, 0.0, 0.0, 0.0),
        expression=np.zeros(config.k_expression),
        shape=np.zeros(config.k_shape),
        lighting=Lighting(0.5, np.array([0.0, 0.0, 1.0]), 0.5),
        texture=np.zeros(config.k_texture),
    )


def render_proxy(c: CoefficientSet, basis: FaceBasis, resolution: int) -> ProxyRender:
    if resolution not in VALID_RESOLUTIONS:
        raise ValueError(f"resolution must be one of {VALID_RESOLUTIONS}, got {resolution}")
    if not c.camera.scale > 0:
        raise ValueError(f"camera scale must be positive, got {c.camera.scale}")

    vertices, colors = synthesize_mesh(c, basis)
    points, depth_v = project_vertices(vertices, c.camera, resolution)
    size = resolution

    faces = basis.faces.astype(np.int64)
    tri = points[faces]  # (F, 3, 2)
    edge1 = tri[:, 1] - tri[:, 0]
    edge2 = tri[:, 2] - tri[:, 0]
    # pixel y grows downward, so outward-oriented front faces have negative
    # signed area; back-face culling keeps strictly front-facing triangles
    area = edge1[:, 0] * edge2[:, 1] - edge1[:, 1] * edge2[:, 0]
    front = np.nonzero(area < 0)[0]

    frag_pix, frag_z, frag_tri, frag_bary = [], [], [], []
    for t in front:
        v0, v1, v2 = tri[t]
        xmin = max(int(np.ceil(min(v0[0], v1[0], v2[0]) - 0.5)), 0)
        xmax = min(int(np.floor(max(v0[0], v1[0], v2[0]) - 0.5)), size - 1)
        ymin = max(int(np.ceil(min(v0[1], v1[1], v2[1]) - 0.5)), 0)
        ymax = min(int(np.floor(max(v0[1], v1[1], v2[1]) - 0.5)), size - 1)
        if xmin > xmax or ymin > ymax:
            continue
        xs = np.arange(xmin, xmax + 1) + 0.5
        ys = np.arange(ymin, ymax + 1) + 0.5
        px, py = np.meshgrid(xs, ys)
        w0 = (v2[0] - v1[0]) * (py - v1[1]) - (v2[1] - v1[1]) * (px - v1[0])
        w1 = (v0[0] - v2[0]) * (py - v2[1]) - (v0[1] - v2[1]) * (px - v2[0])
        w2 = (v1[0] - v0[0]) * (py - v0[1]) - (v1[1] - v0[1]) * (px - v0[0])
        inside = (w0 <= 0) & (w1 <= 0) & (w2 <= 0)
        if not inside.any():
            continue
        b = np.stack([w0[inside], w1[inside], w2[inside]], axis=1) / area[t]
        iy, ix = np.nonzero(inside)
        frag_pix.append((ymin + iy) * size + (xmin + ix))
        frag_z.append(b @ depth_v[faces[t]])
        frag_tri.append(np.full(b.shape[0], t, dtype=np.int64))
        frag_bary.append(b)

    image = np.zeros((size, size, 3), dtype=np.float64)
    mask = np.zeros((size, size), dtype=bool)
    region = np.zeros((size, size), dtype=np.int32)
    depth = np.zeros((size, size), dtype=np.float64)

    if frag_pix:
        pix = np.concatenate(frag_pix)
        z = np.concatenate(frag_z)
        tri_id = np.concatenate(frag_tri)
        bary = np.concatenate(frag_bary)
        # nearest fragment wins; exact depth ties go to the lower triangle index
        order = np.lexsort((tri_id, -z, pix))
        pix, z, tri_id, bary = pix[order], z[order], tri_id[order], bary[order]
        _, first = np.unique(pix, return_index=True)
        pix, z, tri_id, bary = pix[first], z[first], tri_id[first], bary[first]

        corners = faces[tri_id]  # (n, 3)
        color = np.einsum("nk,nkc->nc", bary, colors[corners])
        nearest = corners[np.arange(len(tri_id)), np.argmax(bary, axis=1)]
        rows, cols = pix // size, pix % size
        image[rows, cols] = color
        mask[rows, cols] = True
        region[rows, cols] = basis.region_labels[nearest]
        depth[rows, cols] = z

    landmarks, _ = project_vertices(vertices[basis.landmark_indices.astype(np.int64)],
                                    c.camera, resolution)
    assert landmarks.shape == (N_LANDMARKS, 2)
    return ProxyRender(
        image=image.astype(np.float32),
        mask=mask,
        region_map=region,
        landmarks=landmarks,
        depth=depth.astype(np.float32),
    )


def landmark_visibility(c: CoefficientSet, basis: FaceBasis) -> np.ndarray:
    """Landmarks whose posed vertex normal faces the camera (+z)."""
    from .mesh import vertex_normals

    vertices, _ = synthesize_mesh(c, basis)
    normals = vertex_normals(vertices, basis.faces.astype(np.int64))
    return normals[basis.landmark_indices.astype(np.int64), 2] > 0.0
