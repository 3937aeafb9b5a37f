"""Objective terms for the re-enactment training loop.

All norms are mean-reduced over elements so weights stay comparable
across resolutions. The geometry term reads pose/expression off the
generated image through the frozen coefficient regressor; the identity
term compares frozen-embedder features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .face_model.coefficients import SamplerConfig, group_slices


@dataclass
class LossWeights:
    mw: float = 1.0
    cc: float = 1.0
    id: float = 1.0
    geo: float = 1.0   # reference term, weight fixed at 1 by default
    pix: float = 1.0
    adv_g: float = 1.0

    def validate(self) -> "LossWeights":
        for name, v in self.as_dict().items():
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"weight {name} must be finite and >= 0, got {v}")
        return self

    def as_dict(self) -> dict:
        return {"mw": self.mw, "cc": self.cc, "id": self.id,
                "geo": self.geo, "pix": self.pix, "adv_g": self.adv_g}

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**{k: float(v) for k, v in d.items()}).validate()


@dataclass
class LossReport:
    mw: float = 0.0
    cc: float = 0.0
    id: float = 0.0
    geo: float = 0.0
    pix: float = 0.0
    adv_g: float = 0.0
    adv_d: float = 0.0
    total_g: float = 0.0
    total_d: float = 0.0
    paired: bool = False
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {"mw": self.mw, "cc": self.cc, "id": self.id, "geo": self.geo,
               "pix": self.pix, "adv_g": self.adv_g, "adv_d": self.adv_d,
               "total_g": self.total_g, "total_d": self.total_d,
               "paired": self.paired}
        out.update(self.extras)
        return out


def _check_shapes(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def loss_mw(proxy_warp: torch.Tensor, proxy_target: torch.Tensor) -> torch.Tensor:
    """Proxy warping error: mean absolute difference between the warped
    source proxy and the re-enacted proxy at field resolution."""
    _check_shapes(proxy_warp, proxy_target, "proxy warping loss")
    return (proxy_warp - proxy_target).abs().mean()


def loss_cc(image_cycled: torch.Tensor, image_source: torch.Tensor) -> torch.Tensor:
    """Cycle consistency: the reverse-warped warp of the source image
    should recover the (downsampled) source image."""
    _check_shapes(image_cycled, image_source, "cycle consistency loss")
    return (image_cycled - image_source).abs().mean()


def loss_id(embed_generated: torch.Tensor, embed_source: torch.Tensor) -> torch.Tensor:
    """1 - cosine similarity of identity embeddings (unit-norm inputs)."""
    _check_shapes(embed_generated, embed_source, "identity loss")
    cos = (embed_generated * embed_source).sum(dim=-1)
    return (1.0 - cos).mean()


def loss_geo(pred_vector: torch.Tensor, target_vector: torch.Tensor,
             config: SamplerConfig | None = None) -> torch.Tensor:
    """L1 norm over the pose slots plus L1 norm over the expression slots
    of regressed coefficient vectors (raw units, summed per group so a
    0.1 shift in one angle moves the loss by exactly 0.1), averaged over
    the batch. Target comes from the driving coefficients."""
    _check_shapes(pred_vector, target_vector, "geometry loss")
    sl = group_slices(config or SamplerConfig())
    diff = (pred_vector - target_vector).abs()
    pose = diff[..., sl["pose"]].sum(dim=-1).mean()
    expr = diff[..., sl["expression"]].sum(dim=-1).mean()
    return pose + expr


def loss_pix(generated: torch.Tensor, target_image: torch.Tensor | None,
             parsing_warp: torch.Tensor | None,
             target_parsing: torch.Tensor | None,
             paired: bool) -> torch.Tensor:
    """Hybrid pixel supervision: MSE on the image plus MSE on the warped
    parsing distribution when the pair is a same-identity (paired) sample;
    identically zero otherwise."""
    if not paired:
        return generated.new_zeros(())
    if target_image is None or parsing_warp is None or target_parsing is None:
        raise ValueError("paired pixel loss requires target image and parsing maps")
    _check_shapes(generated, target_image, "pixel loss (image)")
    _check_shapes(parsing_warp, target_parsing, "pixel loss (parsing)")
    return (F.mse_loss(generated, target_image)
            + F.mse_loss(parsing_warp, target_parsing))


def hinge(t: torch.Tensor) -> torch.Tensor:
    """h(t) = min(0, -1 + t)."""
    return torch.clamp(t - 1.0, max=0.0)


def loss_adv_d(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    """Discriminator hinge objective: -E[h(D(real))] - E[h(-D(fake))]."""
    return -hinge(real_scores).mean() - hinge(-fake_scores).mean()


def loss_adv_g(fake_scores: torch.Tensor) -> torch.Tensor:
    """Generator adversarial objective: -E[D(fake)]."""
    return -fake_scores.mean()


def total_losses(terms: dict, weights: LossWeights) -> tuple:
    """Weighted generator total and the discriminator total.

    terms maps {"mw", "cc", "id", "geo", "pix", "adv_g", "adv_d"} to
    scalar tensors (adv_d optional when only L_G is needed).
    """
    w = weights.validate()
    total_g = (w.mw * terms["mw"] + w.cc * terms["cc"] + w.id * terms["id"]
               + w.geo * terms["geo"] + w.pix * terms["pix"]
               + w.adv_g * terms["adv_g"])
    total_d = terms.get("adv_d")
    if total_d is None:
        total_d = total_g.new_zeros(())
    return total_g, total_d


def calibrate_weights(term_means: dict, target_ratio: float = 0.1,
                      eps: float = 1e-8) -> LossWeights:
    """Set every weight so its term lands one order of magnitude below the
    geometry term's mean over the warm-up window; geometry stays at 1."""
    ref = abs(float(term_means["geo"]))
    out = {}
    for name in ("mw", "cc", "id", "pix", "adv_g"):
        mean = abs(float(term_means.get(name, 0.0)))
        out[name] = target_ratio * ref / max(mean, eps) if mean > eps else 1.0
    return LossWeights(mw=out["mw"], cc=out["cc"], id=out["id"], geo=1.0,
                       pix=out["pix"], adv_g=out["adv_g"]).validate()
