"""Synthetic dataset generation and loading.

Each sample is a rendered face over a seeded background plus its ground
truth: coefficients, landmarks, and region parsing. Samples are grouped
by identity so that shape and texture stay fixed within a group.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image

from .basis import FaceBasis, basis_fingerprint
from .coefficients import (
    CoefficientSet,
    SamplerConfig,
    coefficients_from_json,
    coefficients_to_json,
    sample_coefficients,
)
from .raster import render_proxy
from .scene import SpatialBundle, compose_scene, landmark_heatmaps

MANIFEST_NAME = "manifest.jsonl"
META_NAME = "dataset.json"


@dataclass
class SampleRecord:
    sample_id: int
    identity_id: int
    coefficients: CoefficientSet
    image_path: str
    parsing_path: str
    landmarks_path: str


def _save_image_u8(path: str, image: np.ndarray) -> None:
    u8 = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8).save(path)


def _load_image_f32(path: str) -> np.ndarray:
    u8 = np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)
    return (u8.astype(np.float32) / 255.0)


def generate_dataset(
    basis: FaceBasis,
    out_dir: str,
    n_identities: int,
    samples_per_identity: int,
    resolution: int,
    seed: int,
    config: Optional[SamplerConfig] = None,
) -> list[SampleRecord]:
    """Render a dataset to ``out_dir`` and return its manifest records.

    Layout: images/{id:06d}.png, parsing/{id:06d}.png,
    landmarks/{id:06d}.npy, manifest.jsonl, dataset.json.
    """
    if config is None:
        config = SamplerConfig()
    os.makedirs(out_dir, exist_ok=True)
    for sub in ("images", "parsing", "landmarks"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    records = []
    sample_id = 0
    for identity in range(n_identities):
        for _ in range(samples_per_identity):
            draw_seed = (seed * 1_000_003 + sample_id) & 0x7FFFFFFF
            coeffs = sample_coefficients(draw_seed, identity_id=(seed, identity), config=config)
            proxy = render_proxy(coeffs, basis, resolution)
            bundle = compose_scene(proxy, background_seed=draw_seed)

            stem = f"{sample_id:06d}"
            image_path = os.path.join("images", stem + ".png")
            parsing_path = os.path.join("parsing", stem + ".png")
            landmarks_path = os.path.join("landmarks", stem + ".npy")
            _save_image_u8(os.path.join(out_dir, image_path), bundle.image)
            Image.fromarray(bundle.parsing.astype(np.uint8)).save(
                os.path.join(out_dir, parsing_path))
            np.save(os.path.join(out_dir, landmarks_path),
                    bundle.landmarks.astype(np.float64))

            records.append(SampleRecord(
                sample_id=sample_id,
                identity_id=identity,
                coefficients=coeffs,
                image_path=image_path,
                parsing_path=parsing_path,
                landmarks_path=landmarks_path,
            ))
            sample_id += 1

    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as fh:
        for rec in records:
            fh.write(json.dumps({
                "sample_id": rec.sample_id,
                "identity_id": rec.identity_id,
                "coefficients": coefficients_to_json(rec.coefficients),
                "image": rec.image_path,
                "parsing": rec.parsing_path,
                "landmarks": rec.landmarks_path,
            }) + "\n")

    meta = {
        "resolution": resolution,
        "seed": seed,
        "n_identities": n_identities,
        "samples_per_identity": samples_per_identity,
        "n_samples": len(records),
        "basis_fingerprint": basis_fingerprint(basis),
    }
    with open(os.path.join(out_dir, META_NAME), "w") as fh:
        json.dump(meta, fh, indent=2)
    return records


@dataclass
class DatasetIndex:
    root: str
    meta: dict
    records: list

    @property
    def resolution(self) -> int:
        return int(self.meta["resolution"])

    def __len__(self) -> int:
        return len(self.records)

    def by_identity(self) -> dict:
        groups: dict = {}
        for rec in self.records:
            groups.setdefault(rec.identity_id, []).append(rec)
        return groups

    def load_bundle(self, rec: SampleRecord) -> SpatialBundle:
        image = _load_image_f32(os.path.join(self.root, rec.image_path))
        parsing = np.asarray(
            Image.open(os.path.join(self.root, rec.parsing_path)), dtype=np.int32)
        landmarks = np.load(os.path.join(self.root, rec.landmarks_path))
        heatmaps = landmark_heatmaps(landmarks, image.shape[0])
        return SpatialBundle(image=image, parsing=parsing,
                             heatmaps=heatmaps, landmarks=landmarks)


def load_dataset(root: str) -> DatasetIndex:
    meta_path = os.path.join(root, META_NAME)
    manifest_path = os.path.join(root, MANIFEST_NAME)
    if not os.path.isfile(meta_path) or not os.path.isfile(manifest_path):
        raise FileNotFoundError(f"not a dataset directory: {root}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    records = []
    with open(manifest_path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            records.append(SampleRecord(
                sample_id=int(row["sample_id"]),
                identity_id=int(row["identity_id"]),
                coefficients=coefficients_from_json(row["coefficients"]),
                image_path=row["image"],
                parsing_path=row["parsing"],
                landmarks_path=row["landmarks"],
            ))
    return DatasetIndex(root=root, meta=meta, records=records)
