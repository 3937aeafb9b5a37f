"""End-to-end re-enactment: two images in, one re-enacted image out.

Both inputs pass through the frozen coefficient regressor; mixed
coefficients are rendered into proxies, the correspondence field warps
the source priors, and the generator refines them. Optional debug dumps
capture every intermediate so a run can be replayed from disk.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from .correspondence import (
    CorrespondenceField,
    correlation_scores,
    downsample_area,
    downsample_nearest,
    dump_field,
    load_field_dump,
)
from .encoders import encode_image, image_to_tensor
from .face_model.coefficients import coefficients_to_json, mix_coefficients
from .face_model.raster import render_proxy
from .face_model.scene import landmark_heatmaps, parsing_to_onehot
from .training import TrainState, load_checkpoint


@dataclass
class ReenactRequest:
    source_path: str
    driving_path: str
    checkpoint_path: str
    output_path: str
    dump_dir: str | None = None


def load_image(path, resolution: int | None = None) -> np.ndarray:
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)
    out = img.astype(np.float32) / 255.0
    if resolution is not None and out.shape[:2] != (resolution, resolution):
        raise ValueError(f"{path}: expected {resolution}x{resolution} input, "
                         f"got {out.shape[1]}x{out.shape[0]}")
    return out


def save_image(path, image: np.ndarray) -> None:
    u8 = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8).save(path)


class ReenactPipeline:
    """Inference wrapper around a trained state; all modules in eval mode."""

    def __init__(self, state: TrainState):
        self.state = state
        self.resolution = state.config.resolution
        for m in (state.extractor, state.generator, state.discriminator,
                  state.encoder, state.embedder):
            m.eval()

    @classmethod
    def from_checkpoint(cls, path) -> "ReenactPipeline":
        return cls(load_checkpoint(path))

    def _priors(self, source_image: np.ndarray, driving_image: np.ndarray) -> dict:
        """Encode, mix, render, correlate, and warp; returns all
        intermediates keyed by name."""
        st = self.state
        res = self.resolution
        c_s = encode_image(st.encoder, st.normalizer, source_image)
        c_d = encode_image(st.encoder, st.normalizer, driving_image)
        c_r = mix_coefficients(c_s, c_d)
        p_s = render_proxy(c_s, st.basis, res)
        p_r = render_proxy(c_r, st.basis, res)

        src_t = image_to_tensor(source_image)
        heat_s = torch.from_numpy(landmark_heatmaps(p_s.landmarks, res))[None]
        heat_r = torch.from_numpy(landmark_heatmaps(p_r.landmarks, res))[None]
        parse_s = torch.from_numpy(parsing_to_onehot(p_s.region_map))[None]
        proxy_s = torch.from_numpy(p_s.image.transpose(2, 0, 1).copy())[None]
        proxy_r = torch.from_numpy(p_r.image.transpose(2, 0, 1).copy())[None]

        cfg = st.extractor.config
        hw = (cfg.field_resolution, cfg.field_resolution)
        with torch.no_grad():
            f_s = st.extractor.source_features(proxy_s, heat_s, parse_s)
            f_r = st.extractor.target_features(proxy_r, heat_r)
            scores = correlation_scores(f_s, f_r)[0] / cfg.tau
            matrix = torch.softmax(scores, dim=-1)

            def one_warp(x, mode):
                small = (downsample_area(x[0], hw) if mode == "area"
                         else downsample_nearest(x[0], hw))
                flat = small.flatten(1).transpose(0, 1)
                return (matrix @ flat).transpose(0, 1).reshape(small.shape)

            img_w = one_warp(src_t, "area")
            par_w = one_warp(parse_s, "nearest")
            prx_w = one_warp(proxy_s, "area")
        return {
            "coeff_source": c_s, "coeff_driving": c_d, "coeff_mixed": c_r,
            "proxy_source": p_s, "proxy_reenacted": p_r,
            "field": CorrespondenceField(matrix=matrix, resolution=hw,
                                         tau=cfg.tau, scores=scores),
            "img_warp": img_w, "parsing_warp": par_w, "proxy_warp": prx_w,
        }

    def generate_from_warps(self, img_w: torch.Tensor, par_w: torch.Tensor,
                            prx_w: torch.Tensor) -> np.ndarray:
        with torch.no_grad():
            out = self.state.generator(img_w[None], par_w[None], prx_w[None])[0]
        return out.permute(1, 2, 0).numpy().astype(np.float32)

    def reenact_arrays(self, source_image: np.ndarray,
                       driving_image: np.ndarray) -> tuple:
        """(re-enacted HxWx3 image, intermediates dict)."""
        inter = self._priors(source_image, driving_image)
        image = self.generate_from_warps(inter["img_warp"],
                                         inter["parsing_warp"],
                                         inter["proxy_warp"])
        return image, inter


def write_dumps(dump_dir: str, inter: dict) -> None:
    """Persist the intermediate set: proxies as PNG, warps as .npy, the
    correspondence matrix as a raw float array with a JSON sidecar."""
    os.makedirs(dump_dir, exist_ok=True)
    save_image(os.path.join(dump_dir, "proxy_source.png"),
               inter["proxy_source"].image)
    save_image(os.path.join(dump_dir, "proxy_reenacted.png"),
               inter["proxy_reenacted"].image)
    for key in ("img_warp", "parsing_warp", "proxy_warp"):
        np.save(os.path.join(dump_dir, key + ".npy"),
                inter[key].numpy().astype(np.float32))
    dump_field(inter["field"], dump_dir)
    with open(os.path.join(dump_dir, "coefficients.json"), "w") as fh:
        json.dump({k: coefficients_to_json(inter[f"coeff_{k}"])
                   for k in ("source", "driving", "mixed")}, fh, indent=2)


def reenact(request: ReenactRequest) -> np.ndarray:
    """Run the full pipeline for a request; returns the output image."""
    pipeline = ReenactPipeline.from_checkpoint(request.checkpoint_path)
    source = load_image(request.source_path, pipeline.resolution)
    driving = load_image(request.driving_path, pipeline.resolution)
    image, inter = pipeline.reenact_arrays(source, driving)
    if request.dump_dir:
        write_dumps(request.dump_dir, inter)
    out_dir = os.path.dirname(os.path.abspath(request.output_path))
    os.makedirs(out_dir, exist_ok=True)
    save_image(request.output_path, image)
    return image


def reenact_from_intermediates(checkpoint_path, dump_dir,
                               output_path=None) -> np.ndarray:
    """Replay generation from dumped warps; reproduces the original output
    exactly (same generator, same inputs)."""
    pipeline = ReenactPipeline.from_checkpoint(checkpoint_path)
    warps = [torch.from_numpy(np.load(os.path.join(dump_dir, key + ".npy")))
             for key in ("img_warp", "parsing_warp", "proxy_warp")]
    # the dumped field is loadable too; generation only needs the warps
    load_field_dump(dump_dir)
    image = pipeline.generate_from_warps(*warps)
    if output_path is not None:
        save_image(output_path, image)
    return image
