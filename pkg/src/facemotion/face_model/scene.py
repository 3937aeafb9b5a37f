"""Scene composition: proxy over a procedural background, parsing map,
and per-landmark Gaussian heatmaps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import ProxyRender

# Gaussian heatmap width: 2 px at 64x64, scaled linearly with resolution
HEATMAP_SIGMA_AT_64 = 2.0


@dataclass
class SpatialBundle:
    image: np.ndarray        # (H, W, 3) float32 in [0, 1]
    parsing: np.ndarray      # (H, W) int32 labels, 0 = background
    heatmaps: np.ndarray     # (68, H, W) float32, peak 1 at each landmark
    landmarks: np.ndarray    # (68, 2) float64 pixel coordinates


def heatmap_sigma(resolution: int) -> float:
    return HEATMAP_SIGMA_AT_64 * resolution / 64.0


def landmark_heatmaps(landmarks: np.ndarray, resolution: int) -> np.ndarray:
    """Unnormalized Gaussians centered on each landmark, evaluated at pixel
    centers, so channel k peaks at the pixel nearest landmark k."""
    sigma = heatmap_sigma(resolution)
    centers = np.arange(resolution, dtype=np.float64) + 0.5
    lx = landmarks[:, 0][:, None]
    ly = landmarks[:, 1][:, None]
    dx2 = (centers[None, :] - lx) ** 2  # (68, W)
    dy2 = (centers[None, :] - ly) ** 2  # (68, H)
    maps = np.exp(-(dy2[:, :, None] + dx2[:, None, :]) / (2.0 * sigma * sigma))
    return maps.astype(np.float32)


def procedural_background(background_seed: int, resolution: int) -> np.ndarray:
    """Smooth seeded background: bilinear blowup of a low-res color field."""
    rng = np.random.default_rng(np.random.SeedSequence([0xB6, int(background_seed) & 0xFFFFFFFF]))
    grid = 5
    control = rng.uniform(0.15, 0.85, size=(grid, grid, 3))
    # bilinear interpolation of the control grid at pixel centers
    pos = (np.arange(resolution) + 0.5) / resolution * (grid - 1)
    i0 = np.clip(pos.astype(np.int64), 0, grid - 2)
    frac = pos - i0
    row = control[i0] * (1 - frac)[:, None, None] + control[i0 + 1] * frac[:, None, None]
    out = (row[:, i0] * (1 - frac)[None, :, None]
           + row[:, i0 + 1] * frac[None, :, None])
    return out.astype(np.float32)


def compose_scene(proxy: ProxyRender, background_seed: int) -> SpatialBundle:
    resolution = proxy.resolution
    background = procedural_background(background_seed, resolution)
    image = np.where(proxy.mask[:, :, None], proxy.image, background)
    return SpatialBundle(
        image=image.astype(np.float32),
        parsing=proxy.region_map.copy(),
        heatmaps=landmark_heatmaps(proxy.landmarks, resolution),
        landmarks=proxy.landmarks.copy(),
    )


def parsing_to_onehot(parsing: np.ndarray, n_labels: int = 4) -> np.ndarray:
    """(H, W) labels -> (n_labels, H, W) float32 one-hot."""
    out = np.zeros((n_labels,) + parsing.shape, dtype=np.float32)
    for k in range(n_labels):
        out[k] = parsing == k
    return out
