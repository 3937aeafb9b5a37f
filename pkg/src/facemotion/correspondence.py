"""Dense correspondence between proxy renders.

A shared convolutional trunk reads each proxy; branch-specific ResBlock
stacks then mix in auxiliary landmark heatmaps (and, for the source
branch, the parsing map). Flattened per-position features from the two
branches form a row-stochastic correlation matrix: row i of the matrix
distributes target position i's mass over source positions. Warping any
spatial map is then a single matrix multiplication, and the reverse
mapping reuses the retained pre-softmax scores transposed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

DEFAULT_TAU = 0.01
DOWNSAMPLE_FACTOR = 4


@dataclass
class FeatureGrid:
    values: torch.Tensor  # (c, h, w)

    def __post_init__(self):
        if self.values.dim() != 3:
            raise ValueError(f"feature grid must be (c, h, w), got {tuple(self.values.shape)}")
        if not torch.isfinite(self.values).all():
            raise ValueError("feature grid contains non-finite values")

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def resolution(self) -> tuple:
        return tuple(self.values.shape[1:])


@dataclass
class CorrespondenceField:
    matrix: torch.Tensor       # (hw, hw), row-stochastic
    resolution: tuple          # (h, w)
    tau: float
    scores: torch.Tensor | None = None  # retained pre-softmax logits (hw, hw)

    def __post_init__(self):
        hw = self.resolution[0] * self.resolution[1]
        if self.matrix.shape != (hw, hw):
            raise ValueError(f"matrix shape {tuple(self.matrix.shape)} does not "
                             f"match resolution {self.resolution}")
        if not torch.isfinite(self.matrix).all():
            raise ValueError("correspondence matrix contains non-finite values")
        if (self.matrix < 0).any():
            raise ValueError("correspondence matrix has negative entries")
        sums = self.matrix.sum(dim=-1)
        if (sums - 1.0).abs().max() > 1e-5:
            raise ValueError("correspondence matrix rows must sum to 1")


def normalize_features(flat: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """Per-position channel normalization: subtract the channel mean, then
    scale to unit length. Constant features map to the zero vector."""
    centered = flat - flat.mean(dim=-1, keepdim=True)
    return centered / (centered.norm(dim=-1, keepdim=True) + eps)


def correlation_scores(f_s: torch.Tensor, f_r: torch.Tensor) -> torch.Tensor:
    """(..., c, h, w) feature pairs -> (..., hw, hw) raw match scores."""
    def flat(f):
        return f.flatten(-2).transpose(-1, -2)  # (..., hw, c)
    return normalize_features(flat(f_r)) @ normalize_features(flat(f_s)).transpose(-1, -2)


def correlation_field(f_s: FeatureGrid, f_r: FeatureGrid,
                      tau: float = DEFAULT_TAU) -> CorrespondenceField:
    """Row-softmax of scaled feature matching scores (target rows over
    source columns)."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if f_s.resolution != f_r.resolution:
        raise ValueError(f"resolution mismatch: {f_s.resolution} vs {f_r.resolution}")
    scores = correlation_scores(f_s.values, f_r.values)
    matrix = torch.softmax(scores / tau, dim=-1)
    return CorrespondenceField(matrix=matrix, resolution=f_s.resolution,
                               tau=float(tau), scores=scores / tau)


def downsample_area(x: torch.Tensor, out_hw: tuple) -> torch.Tensor:
    """(..., H, W) -> (..., h, w) by area averaging (exact integer factor)."""
    h, w = out_hw
    H, W = x.shape[-2:]
    if H == h and W == w:
        return x
    if H % h or W % w:
        raise ValueError(f"cannot area-downsample {H}x{W} to {h}x{w}")
    lead = x.shape[:-2]
    return x.reshape(*lead, h, H // h, w, W // w).mean(dim=(-3, -1))


def downsample_nearest(x: torch.Tensor, out_hw: tuple) -> torch.Tensor:
    """(..., H, W) -> (..., h, w) picking the center sample of each cell;
    keeps label/one-hot maps pure."""
    h, w = out_hw
    H, W = x.shape[-2:]
    if H == h and W == w:
        return x
    rows = (torch.arange(h) * H) // h + H // (2 * h)
    cols = (torch.arange(w) * W) // w + W // (2 * w)
    return x[..., rows, :][..., cols]


def warp(field: CorrespondenceField, x: torch.Tensor,
         mode: str = "area") -> torch.Tensor:
    """Warp a (k, H, W) map: downsample to field resolution, flatten, and
    left-multiply by the correspondence matrix."""
    if x.dim() != 3:
        raise ValueError(f"expected (k, H, W) input, got {tuple(x.shape)}")
    h, w = field.resolution
    if mode == "area":
        small = downsample_area(x, (h, w))
    elif mode == "nearest":
        small = downsample_nearest(x, (h, w))
    else:
        raise ValueError(f"unknown downsampling mode: {mode}")
    flat = small.flatten(1).transpose(0, 1)          # (hw, k)
    out = field.matrix.to(flat.dtype) @ flat         # (hw, k)
    return out.transpose(0, 1).reshape(x.shape[0], h, w)


def reverse_warp(field: CorrespondenceField, x_warp: torch.Tensor) -> torch.Tensor:
    """Map a warped (k, h, w) tensor back through softmaxed transposed
    scores. Requires the retained pre-softmax logits."""
    if field.scores is None:
        raise ValueError("reverse_warp needs the retained correlation scores")
    h, w = field.resolution
    if tuple(x_warp.shape[-2:]) != (h, w):
        raise ValueError(f"warped input at {tuple(x_warp.shape[-2:])}, field at {(h, w)}")
    reverse = torch.softmax(field.scores.transpose(-1, -2), dim=-1)
    flat = x_warp.flatten(1).transpose(0, 1)
    out = reverse.to(flat.dtype) @ flat
    return out.transpose(0, 1).reshape(x_warp.shape[0], h, w)


# ---------------------------------------------------------------------------
# feature extraction networks


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = (nn.Conv2d(in_ch, out_ch, 1)
                     if in_ch != out_ch else nn.Identity())
        self.norm1 = nn.GroupNorm(min(8, out_ch), out_ch)
        self.norm2 = nn.GroupNorm(min(8, out_ch), out_ch)

    def forward(self, x):
        h = F.silu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return F.silu(h + self.skip(x))


@dataclass
class CorrespondenceConfig:
    resolution: int = 64          # proxy input resolution
    trunk_channels: int = 32
    feature_channels: int = 32
    n_heatmap_channels: int = 68
    n_parsing_labels: int = 4
    tau: float = DEFAULT_TAU

    @property
    def field_resolution(self) -> int:
        return self.resolution // DOWNSAMPLE_FACTOR


class CorrespondenceExtractor(nn.Module):
    """Shared trunk over the proxy plus two branch-specific ResBlock stacks.

    The source branch additionally sees the parsing map; both branches see
    landmark heatmaps. Auxiliary maps join by concatenation at the trunk's
    output resolution (input/4).
    """

    def __init__(self, config: CorrespondenceConfig | None = None):
        super().__init__()
        if config is None:
            config = CorrespondenceConfig()
        self.config = config
        t, c = config.trunk_channels, config.feature_channels
        self.trunk = nn.Sequential(
            nn.Conv2d(3, t, 3, stride=2, padding=1),
            nn.GroupNorm(min(8, t), t), nn.SiLU(),
            nn.Conv2d(t, t, 3, stride=2, padding=1),
            nn.GroupNorm(min(8, t), t), nn.SiLU(),
        )
        aux_s = config.n_heatmap_channels + config.n_parsing_labels
        aux_r = config.n_heatmap_channels
        self.source_branch = nn.Sequential(
            ResBlock(t + aux_s, c), ResBlock(c, c))
        self.target_branch = nn.Sequential(
            ResBlock(t + aux_r, c), ResBlock(c, c))

    def _check(self, proxy_image, heatmaps, parsing_onehot=None):
        res = self.config.resolution
        for name, x in [("proxy", proxy_image), ("heatmaps", heatmaps),
                        ("parsing", parsing_onehot)]:
            if x is None:
                continue
            if tuple(x.shape[-2:]) != (res, res):
                raise ValueError(f"{name} input must be {res}x{res}, "
                                 f"got {tuple(x.shape[-2:])}")

    def trunk_features(self, proxy_image: torch.Tensor) -> torch.Tensor:
        return self.trunk(proxy_image)

    def source_features(self, proxy_image, heatmaps, parsing_onehot) -> torch.Tensor:
        """Batched (b, c, h, w) source-branch features."""
        self._check(proxy_image, heatmaps, parsing_onehot)
        hw = (self.config.field_resolution,) * 2
        aux = torch.cat([downsample_area(heatmaps, hw),
                         downsample_nearest(parsing_onehot, hw)], dim=1)
        return self.source_branch(torch.cat([self.trunk(proxy_image), aux], dim=1))

    def target_features(self, proxy_image, heatmaps) -> torch.Tensor:
        """Batched (b, c, h, w) target-branch features."""
        self._check(proxy_image, heatmaps)
        hw = (self.config.field_resolution,) * 2
        aux = downsample_area(heatmaps, hw)
        return self.target_branch(torch.cat([self.trunk(proxy_image), aux], dim=1))


def extract_source_features(extractor: CorrespondenceExtractor,
                            proxy_image: torch.Tensor,
                            heatmaps: torch.Tensor,
                            parsing_onehot: torch.Tensor) -> FeatureGrid:
    out = extractor.source_features(proxy_image[None], heatmaps[None],
                                    parsing_onehot[None])
    return FeatureGrid(values=out[0])


def extract_target_features(extractor: CorrespondenceExtractor,
                            proxy_image: torch.Tensor,
                            heatmaps: torch.Tensor) -> FeatureGrid:
    out = extractor.target_features(proxy_image[None], heatmaps[None])
    return FeatureGrid(values=out[0])


def dump_field(field: CorrespondenceField, directory, stem: str = "correspondence") -> None:
    """Debug dump: dense row-major float32 matrix + JSON sidecar."""
    import json
    import os
    os.makedirs(directory, exist_ok=True)
    mat = field.matrix.detach().cpu().numpy().astype("<f4")
    mat.tofile(os.path.join(directory, stem + ".f32"))
    with open(os.path.join(directory, stem + ".json"), "w") as fh:
        json.dump({"h": field.resolution[0], "w": field.resolution[1],
                   "tau": field.tau, "dtype": "float32", "order": "row-major"},
                  fh, indent=2)


def load_field_dump(directory, stem: str = "correspondence") -> CorrespondenceField:
    import json
    import os
    with open(os.path.join(directory, stem + ".json")) as fh:
        side = json.load(fh)
    h, w = int(side["h"]), int(side["w"])
    mat = np.fromfile(os.path.join(directory, stem + ".f32"), dtype="<f4")
    matrix = torch.from_numpy(mat.reshape(h * w, h * w).copy())
    return CorrespondenceField(matrix=matrix, resolution=(h, w), tau=float(side["tau"]))
