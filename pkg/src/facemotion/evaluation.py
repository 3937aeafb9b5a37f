"""Re-enactment quality metrics on held-out synthetic pairs.

CosSim compares identity embeddings of output and source; PoseMSE and
ExpMSE compare regressed pose/expression coefficients of output and
driving image. Both regressor and embedder are bundled substitutes, so
the report carries their parameter digests and never claims comparability
with any externally trained metric network. Images are compared
unaligned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .container import sha256_of_arrays
from .encoders import state_dict_arrays
from .face_model.coefficients import group_slices
from .pipeline import ReenactPipeline


@dataclass
class PairMetrics:
    source_id: int
    driving_id: int
    cos_sim: float            # output vs source embedding
    pose_mse: float           # output vs driving, regressed pose slots
    exp_mse: float            # output vs driving, regressed expression slots
    cos_sim_driving: float = 0.0   # output vs driving embedding (leak probe)
    exp_mse_baseline: float = 0.0  # source vs driving expression gap


@dataclass
class MetricsReport:
    cos_sim_mean: float
    cos_sim_std: float
    pose_mse_mean: float
    pose_mse_std: float
    exp_mse_mean: float
    exp_mse_std: float
    n_pairs: int
    cos_sim_driving_mean: float = 0.0
    exp_mse_baseline_mean: float = 0.0
    alignment: str = "none"
    substitute_hashes: dict = field(default_factory=dict)
    pairs: list = field(default_factory=list)

    def validate(self) -> "MetricsReport":
        if not (-1.0 - 1e-6 <= self.cos_sim_mean <= 1.0 + 1e-6):
            raise ValueError(f"cos_sim mean out of range: {self.cos_sim_mean}")
        if not (-1.0 - 1e-6 <= self.cos_sim_driving_mean <= 1.0 + 1e-6):
            raise ValueError(
                f"driving cos_sim mean out of range: {self.cos_sim_driving_mean}")
        if self.pose_mse_mean < 0 or self.exp_mse_mean < 0:
            raise ValueError("MSE metrics must be nonnegative")
        return self

    def to_json(self) -> dict:
        return {
            "cos_sim": {"mean": self.cos_sim_mean, "std": self.cos_sim_std},
            "cos_sim_driving": {"mean": self.cos_sim_driving_mean},
            "pose_mse": {"mean": self.pose_mse_mean, "std": self.pose_mse_std},
            "exp_mse": {"mean": self.exp_mse_mean, "std": self.exp_mse_std},
            "exp_mse_baseline": {"mean": self.exp_mse_baseline_mean},
            "n_pairs": self.n_pairs,
            "alignment": self.alignment,
            "substitute_hashes": self.substitute_hashes,
        }


def round_robin_pairs(index, max_pairs: int | None = None) -> list:
    """Deterministic unpaired protocol: samples sorted by id, each source
    paired with the next sample (cyclically) of a different identity."""
    records = sorted(index.records, key=lambda r: r.sample_id)
    n = len(records)
    pairs = []
    for i, src in enumerate(records):
        for off in range(1, n):
            cand = records[(i + off) % n]
            if cand.identity_id != src.identity_id:
                pairs.append((src, cand))
                break
    if max_pairs is not None:
        pairs = pairs[:max_pairs]
    return pairs


def regressed_vector(pipeline: ReenactPipeline, image: np.ndarray) -> np.ndarray:
    """Raw 42-slot coefficient vector read off an image by the bundled
    regressor (the substitute pose/expression metric backbone)."""
    st = pipeline.state
    t = torch.from_numpy(image.transpose(2, 0, 1).copy())[None].float()
    with torch.no_grad():
        raw = st.normalizer.denormalize_t(st.encoder(t))[0].numpy()
    return raw


def identity_embedding(pipeline: ReenactPipeline, image: np.ndarray) -> np.ndarray:
    t = torch.from_numpy(image.transpose(2, 0, 1).copy())[None].float()
    with torch.no_grad():
        return pipeline.state.embedder(t)[0].numpy()


def _group_mse(vec_a: np.ndarray, vec_b: np.ndarray, group: str) -> float:
    sl = group_slices()[group]
    return float(np.mean((vec_a[sl] - vec_b[sl]) ** 2))


def pair_metrics(pipeline: ReenactPipeline, output: np.ndarray,
                 source: np.ndarray, driving: np.ndarray) -> PairMetrics:
    """All per-pair metrics for one (output, source, driving) triple;
    sample ids are left at 0 for the caller to fill in."""
    emb_out = identity_embedding(pipeline, output)
    emb_src = identity_embedding(pipeline, source)
    emb_drv = identity_embedding(pipeline, driving)
    vec_out = regressed_vector(pipeline, output)
    vec_src = regressed_vector(pipeline, source)
    vec_drv = regressed_vector(pipeline, driving)
    return PairMetrics(
        source_id=0, driving_id=0,
        cos_sim=float(np.clip(np.dot(emb_out, emb_src), -1.0, 1.0)),
        cos_sim_driving=float(np.clip(np.dot(emb_out, emb_drv), -1.0, 1.0)),
        pose_mse=_group_mse(vec_out, vec_drv, "pose"),
        exp_mse=_group_mse(vec_out, vec_drv, "expression"),
        exp_mse_baseline=_group_mse(vec_src, vec_drv, "expression"),
    )


def evaluate(index, pipeline: ReenactPipeline, max_pairs: int | None = None,
             output_fn=None) -> MetricsReport:
    """Metrics over the deterministic pairing. output_fn overrides how the
    output image is produced (for baselines); default is the pipeline."""
    pairs = round_robin_pairs(index, max_pairs)
    if not pairs:
        raise ValueError("no evaluation pairs: dataset is empty or single-identity")
    if output_fn is None:
        def output_fn(source, driving):
            image, _ = pipeline.reenact_arrays(source, driving)
            return image
    rows = []
    for src, drv in pairs:
        source = index.load_bundle(src).image
        driving = index.load_bundle(drv).image
        output = output_fn(source, driving)
        row = pair_metrics(pipeline, output, source, driving)
        row.source_id, row.driving_id = src.sample_id, drv.sample_id
        rows.append(row)
    rows.sort(key=lambda r: (r.source_id, r.driving_id))
    cos = np.array([r.cos_sim for r in rows])
    pose = np.array([r.pose_mse for r in rows])
    exp = np.array([r.exp_mse for r in rows])
    st = pipeline.state
    hashes = {
        "coefficient_encoder": sha256_of_arrays(state_dict_arrays(st.encoder)),
        "identity_embedder": sha256_of_arrays(state_dict_arrays(st.embedder)),
        "generator": sha256_of_arrays(state_dict_arrays(st.generator)),
    }
    return MetricsReport(
        cos_sim_mean=float(cos.mean()), cos_sim_std=float(cos.std()),
        pose_mse_mean=float(pose.mean()), pose_mse_std=float(pose.std()),
        exp_mse_mean=float(exp.mean()), exp_mse_std=float(exp.std()),
        cos_sim_driving_mean=float(np.mean([r.cos_sim_driving for r in rows])),
        exp_mse_baseline_mean=float(np.mean([r.exp_mse_baseline for r in rows])),
        n_pairs=len(rows), substitute_hashes=hashes, pairs=rows).validate()
