"""Prior-guided generator and patch discriminator.

Warped priors (source image, parsing map, proxy) are aligned by small
spatial transformers and fused into a guidance map by an attention-based
module. The generator consumes the downsampled prior stack at its lowest
resolution and, at the configured coarse levels only, modulates ResBlock
activations with per-pixel scale/shift predicted from the guidance. A
strided patch discriminator provides the adversarial signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .correspondence import ResBlock, downsample_area


class SpatialTransformer(nn.Module):
    """Affine resampler whose localization head starts at the identity."""

    def __init__(self, in_channels: int, hidden: int = 8):
        super().__init__()
        self.loc = nn.Sequential(
            nn.Conv2d(in_channels, hidden, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(hidden, hidden, 3, stride=2, padding=1), nn.SiLU(),
            nn.AdaptiveAvgPool2d(1), nn.Flatten(),
        )
        self.theta_head = nn.Linear(hidden, 6)
        nn.init.zeros_(self.theta_head.weight)
        with torch.no_grad():
            self.theta_head.bias.copy_(
                torch.tensor([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]))

    def forward(self, x: torch.Tensor,
                theta_override: torch.Tensor | None = None) -> torch.Tensor:
        if theta_override is None:
            theta = self.theta_head(self.loc(x)).view(-1, 2, 3)
        else:
            theta = theta_override.reshape(-1, 2, 3).to(x.dtype)
            if theta.shape[0] == 1 and x.shape[0] > 1:
                theta = theta.expand(x.shape[0], 2, 3)
        grid = F.affine_grid(theta, list(x.shape), align_corners=False)
        return F.grid_sample(x, grid, mode="bilinear", padding_mode="zeros",
                             align_corners=False)


@dataclass
class PriorBundle:
    """Warped priors at correspondence resolution: source image (3ch),
    parsing label distribution (one label-probability channel per class),
    and source proxy (3ch)."""
    image_warp: torch.Tensor
    parsing_warp: torch.Tensor
    proxy_warp: torch.Tensor

    def validate(self) -> "PriorBundle":
        shapes = {tuple(t.shape[-2:]) for t in
                  (self.image_warp, self.parsing_warp, self.proxy_warp)}
        if len(shapes) != 1:
            raise ValueError(f"prior resolutions differ: {sorted(shapes)}")
        sums = self.parsing_warp.sum(dim=-3)
        if not torch.allclose(sums, torch.ones_like(sums), atol=1e-5):
            raise ValueError("parsing prior channels must sum to 1 per pixel")
        return self

    @property
    def resolution(self) -> tuple:
        return tuple(self.image_warp.shape[-2:])


class AttentionFusion(nn.Module):
    """Convex fusion of foreground/background features under a learned
    attention map: out = A * f_fg + (1 - A) * f_bg, A in [0, 1]."""

    def __init__(self, guidance_channels: int = 1, width: int = 16,
                 n_parsing_labels: int = 4):
        super().__init__()
        self.guidance_channels = int(guidance_channels)
        self.stn_image = SpatialTransformer(3)
        self.stn_parsing = SpatialTransformer(n_parsing_labels)
        self.stn_proxy = SpatialTransformer(3)
        self.bg_head = nn.Sequential(
            nn.Conv2d(3, width, 3, padding=1), nn.SiLU(),
            nn.Conv2d(width, guidance_channels, 3, padding=1))
        self.fg_head = nn.Sequential(
            nn.Conv2d(6, width, 3, padding=1), nn.SiLU(),
            nn.Conv2d(width, guidance_channels, 3, padding=1))
        self.attention_head = nn.Sequential(
            nn.Conv2d(6 + n_parsing_labels, width, 3, padding=1), nn.SiLU(),
            nn.Conv2d(width, 1, 3, padding=1))

    def components(self, image_warp, parsing_warp, proxy_warp):
        """(f_fg, f_bg, attention) for batched inputs."""
        shapes = {tuple(t.shape[-2:]) for t in (image_warp, parsing_warp, proxy_warp)}
        if len(shapes) != 1:
            raise ValueError(f"fusion inputs disagree on resolution: {sorted(shapes)}")
        a_img = self.stn_image(image_warp)
        a_par = self.stn_parsing(parsing_warp)
        a_prx = self.stn_proxy(proxy_warp)
        f_bg = self.bg_head(a_img)
        f_fg = self.fg_head(torch.cat([a_img, a_prx], dim=1))
        attention = torch.sigmoid(
            self.attention_head(torch.cat([a_img, a_par, a_prx], dim=1)))
        return f_fg, f_bg, attention

    def forward(self, image_warp, parsing_warp, proxy_warp,
                attention_override: torch.Tensor | float | None = None):
        f_fg, f_bg, attention = self.components(image_warp, parsing_warp, proxy_warp)
        if attention_override is not None:
            if torch.is_tensor(attention_override):
                attention = attention_override.to(f_fg.dtype)
            else:
                attention = torch.full_like(attention, float(attention_override))
        return attention * f_fg + (1.0 - attention) * f_bg


def afm_fuse(afm: AttentionFusion, bundle: PriorBundle,
             attention_override=None) -> torch.Tensor:
    """Single-sample guidance map (guidance_channels, h, w)."""
    bundle.validate()
    out = afm(bundle.image_warp[None], bundle.parsing_warp[None],
              bundle.proxy_warp[None], attention_override=attention_override)
    return out[0]


# ---------------------------------------------------------------------------
# generator


@dataclass
class GeneratorConfig:
    output_resolution: int = 64
    channels: tuple = (96, 96, 64, 48, 32)  # from the bottom level upward
    coarse_levels: tuple = (8, 16)          # resolutions receiving guidance
    guidance_channels: int = 1
    afm_width: int = 16
    n_parsing_labels: int = 4

    @property
    def levels(self) -> tuple:
        bottom = self.output_resolution // 16
        return tuple(bottom * (2 ** i) for i in range(len(self.channels)))

    def validate(self) -> "GeneratorConfig":
        if self.output_resolution % 16:
            raise ValueError("output resolution must be divisible by 16")
        levels = self.levels
        if levels[-1] != self.output_resolution:
            raise ValueError(f"channel schedule {self.channels} does not reach "
                             f"{self.output_resolution} from {levels[0]}")
        bad = set(self.coarse_levels) - set(levels)
        if bad:
            raise ValueError(f"coarse levels {sorted(bad)} not in {levels}")
        if self.coarse_levels and max(self.coarse_levels) > self.output_resolution // 4:
            raise ValueError("coarse levels must stay at or below output/4")
        return self

    def to_json(self) -> dict:
        return {"output_resolution": self.output_resolution,
                "channels": list(self.channels),
                "coarse_levels": list(self.coarse_levels),
                "guidance_channels": self.guidance_channels,
                "afm_width": self.afm_width,
                "n_parsing_labels": self.n_parsing_labels}

    @classmethod
    def from_json(cls, d: dict) -> "GeneratorConfig":
        return cls(output_resolution=int(d["output_resolution"]),
                   channels=tuple(d["channels"]),
                   coarse_levels=tuple(d["coarse_levels"]),
                   guidance_channels=int(d["guidance_channels"]),
                   afm_width=int(d["afm_width"]),
                   n_parsing_labels=int(d["n_parsing_labels"])).validate()


class GuidanceModulation(nn.Module):
    """Spatially-adaptive scale/shift on normalized activations, heads
    zero-initialized so step 0 matches the unmodulated baseline."""

    def __init__(self, channels: int, guidance_channels: int, hidden: int = 16):
        super().__init__()
        self.norm = nn.GroupNorm(min(8, channels), channels, affine=False)
        self.shared = nn.Sequential(
            nn.Conv2d(guidance_channels, hidden, 3, padding=1), nn.SiLU())
        self.scale_head = nn.Conv2d(hidden, channels, 3, padding=1)
        self.shift_head = nn.Conv2d(hidden, channels, 3, padding=1)
        for head in (self.scale_head, self.shift_head):
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)

    def forward(self, x: torch.Tensor, guidance: torch.Tensor | None) -> torch.Tensor:
        h = self.norm(x)
        if guidance is None:
            return h
        if tuple(guidance.shape[-2:]) != tuple(x.shape[-2:]):
            guidance = F.interpolate(guidance, size=x.shape[-2:],
                                     mode="bilinear", align_corners=False)
        g = self.shared(guidance)
        return h * (1.0 + self.scale_head(g)) + self.shift_head(g)


class ModulatedBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, guidance_channels: int):
        super().__init__()
        self.mod1 = GuidanceModulation(in_ch, guidance_channels)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.mod2 = GuidanceModulation(out_ch, guidance_channels)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = (nn.Conv2d(in_ch, out_ch, 1)
                     if in_ch != out_ch else nn.Identity())

    def forward(self, x, guidance):
        h = self.conv1(F.silu(self.mod1(x, guidance)))
        h = self.conv2(F.silu(self.mod2(h, guidance)))
        return h + self.skip(x)


class Generator(nn.Module):
    def __init__(self, config: GeneratorConfig | None = None):
        super().__init__()
        if config is None:
            config = GeneratorConfig()
        self.config = config.validate()
        self.afm = AttentionFusion(guidance_channels=config.guidance_channels,
                                   width=config.afm_width,
                                   n_parsing_labels=config.n_parsing_labels)
        in_ch = 3 + config.n_parsing_labels + 3
        self.stem = nn.Conv2d(in_ch, config.channels[0], 3, padding=1)
        blocks = []
        prev = config.channels[0]
        for ch in config.channels:
            blocks.append(ModulatedBlock(prev, ch, config.guidance_channels))
            prev = ch
        self.blocks = nn.ModuleList(blocks)
        self.head = nn.Conv2d(prev, 3, 3, padding=1)

    def forward(self, image_warp, parsing_warp, proxy_warp,
                modulation_enabled: bool = True):
        """Batched synthesis from warped priors at correspondence resolution."""
        guidance = self.afm(image_warp, parsing_warp, proxy_warp) \
            if modulation_enabled else None
        stack = torch.cat([image_warp, parsing_warp, proxy_warp], dim=1)
        bottom = self.config.levels[0]
        x = self.stem(downsample_area(stack, (bottom, bottom)))
        for i, (level, block) in enumerate(zip(self.config.levels, self.blocks)):
            if i > 0:
                x = F.interpolate(x, scale_factor=2, mode="nearest")
            g = guidance if (modulation_enabled and level in self.config.coarse_levels) else None
            x = block(x, g)
        return torch.sigmoid(self.head(x))


def generate(generator: Generator, priors: PriorBundle) -> torch.Tensor:
    """Single-sample convenience wrapper: PriorBundle -> (3, H, W) image."""
    priors.validate()
    res = priors.resolution
    expected = generator.config.output_resolution // 4
    if res != (expected, expected):
        raise ValueError(f"priors at {res}, generator expects {expected}x{expected}")
    generator.eval()
    out = generator(priors.image_warp[None], priors.parsing_warp[None],
                    priors.proxy_warp[None])
    return out[0]


# ---------------------------------------------------------------------------
# discriminator


class PatchDiscriminator(nn.Module):
    """Strided conv stack producing an s x s patch score map, no final
    activation (hinge losses are applied outside)."""

    def __init__(self, resolution: int = 64, width: int = 32):
        super().__init__()
        self.resolution = int(resolution)
        w = width
        self.net = nn.Sequential(
            nn.Conv2d(3, w, 4, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.Conv2d(w, 2 * w, 4, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.Conv2d(2 * w, 4 * w, 4, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.Conv2d(4 * w, 1, 3, padding=1),
        )

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        if tuple(image.shape[-2:]) != (self.resolution, self.resolution):
            raise ValueError(f"discriminator expects {self.resolution}px input, "
                             f"got {tuple(image.shape[-2:])}")
        return self.net(image)


def discriminate(disc: PatchDiscriminator, image: torch.Tensor) -> torch.Tensor:
    """Single-sample wrapper: (3, H, W) -> (s, s) score map."""
    disc.eval()
    return disc(image[None])[0, 0]
