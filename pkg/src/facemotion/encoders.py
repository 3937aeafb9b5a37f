"""Coefficient regressor and identity embedder.

Both are small CNNs trained from scratch on the synthetic renders: the
regressor recovers the six coefficient groups from an image (used to read
pose/expression off generated outputs), the embedder maps a face to a
unit vector whose cosine similarity reflects identity. They stand in for
the large pretrained encoders a real pipeline would use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .container import load_container, save_container
from .face_model.coefficients import (
    CoefficientSet,
    SamplerConfig,
    from_vector,
    group_slices,
    to_vector,
    vector_size,
)

EMBED_DIM = 64

# camera scale is strictly positive; regress it in inverse-softplus space
_SCALE_SLOT = 0


def inv_softplus(x):
    if isinstance(x, torch.Tensor):
        return x + torch.log(-torch.expm1(-x))
    return x + np.log(-np.expm1(-x))


def append_coords(x: torch.Tensor) -> torch.Tensor:
    """Concatenate normalized x/y coordinate channels (CoordConv input)."""
    b, _, h, w = x.shape
    ys = torch.linspace(-1.0, 1.0, h, dtype=x.dtype, device=x.device)
    xs = torch.linspace(-1.0, 1.0, w, dtype=x.dtype, device=x.device)
    gy = ys.view(1, 1, h, 1).expand(b, 1, h, w)
    gx = xs.view(1, 1, 1, w).expand(b, 1, h, w)
    return torch.cat([x, gy, gx], dim=1)


def _gn(ch: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, ch), ch)


@dataclass
class Normalizer:
    """Per-slot z-scoring of coefficient vectors, scale slot pre-warped."""
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, vectors: np.ndarray) -> "Normalizer":
        warped = cls._warp(vectors)
        std = warped.std(axis=0)
        return cls(mean=warped.mean(axis=0), std=np.maximum(std, 1e-6))

    @staticmethod
    def _warp(vectors: np.ndarray) -> np.ndarray:
        out = np.array(vectors, dtype=np.float64)
        out[..., _SCALE_SLOT] = inv_softplus(out[..., _SCALE_SLOT])
        return out

    def normalize(self, vectors: np.ndarray) -> np.ndarray:
        return ((self._warp(vectors) - self.mean) / self.std).astype(np.float32)

    def denormalize_t(self, z: torch.Tensor) -> torch.Tensor:
        """z-scored prediction -> raw coefficient vector (torch, differentiable)."""
        mean = torch.as_tensor(self.mean, dtype=z.dtype, device=z.device)
        std = torch.as_tensor(self.std, dtype=z.dtype, device=z.device)
        raw = z * std + mean
        parts = [F.softplus(raw[..., :1]), raw[..., 1:]]
        return torch.cat(parts, dim=-1)


class EncoderModel(nn.Module):
    """Image -> z-scored 42-vector of coefficients, one head per group."""

    def __init__(self, resolution: int = 64, width: int = 24,
                 config: SamplerConfig | None = None):
        super().__init__()
        if config is None:
            config = SamplerConfig()
        self.resolution = int(resolution)
        self.width = int(width)
        self.sampler_config = config
        w = width
        self.trunk = nn.Sequential(
            nn.Conv2d(5, w, 3, stride=2, padding=1), _gn(w), nn.SiLU(),
            nn.Conv2d(w, 2 * w, 3, stride=2, padding=1), _gn(2 * w), nn.SiLU(),
            nn.Conv2d(2 * w, 4 * w, 3, stride=2, padding=1), _gn(4 * w), nn.SiLU(),
            nn.Conv2d(4 * w, 4 * w, 3, stride=2, padding=1), _gn(4 * w), nn.SiLU(),
        )
        spatial = resolution // 16
        self.neck = nn.Sequential(
            nn.Flatten(), nn.Linear(4 * w * spatial * spatial, 256), nn.SiLU())
        self.heads = nn.ModuleDict({
            name: nn.Linear(256, sl.stop - sl.start)
            for name, sl in group_slices(config).items()
        })
        self._slices = group_slices(config)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        if image.shape[-1] != self.resolution or image.shape[-2] != self.resolution:
            raise ValueError(
                f"expected {self.resolution}x{self.resolution} input, "
                f"got {tuple(image.shape[-2:])}")
        h = self.neck(self.trunk(append_coords(image)))
        return torch.cat([self.heads[name](h) for name in self._slices], dim=-1)


def image_to_tensor(image: np.ndarray) -> torch.Tensor:
    """HxWx3 float [0,1] -> 1x3xHxW float32 tensor."""
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1)))[None].float()


def encode_image(model: EncoderModel, normalizer: Normalizer,
                 image) -> CoefficientSet:
    """Regress a valid CoefficientSet from one image (eval mode)."""
    if isinstance(image, np.ndarray):
        image = image_to_tensor(image)
    model.eval()
    with torch.no_grad():
        z = model(image)
        raw = normalizer.denormalize_t(z)[0].cpu().numpy().astype(np.float64)
    return from_vector(raw, config=model.sampler_config, repair=True)


@dataclass
class EpochStats:
    epoch: int
    train_mse: float
    val_mse: float
    group_val_mse: dict


@dataclass
class EncoderTrainResult:
    model: EncoderModel
    normalizer: Normalizer
    history: list
    seed: int


def _stack_dataset(index, resolution: int):
    images = np.empty((len(index), 3, resolution, resolution), dtype=np.float32)
    vectors = np.empty((len(index), vector_size()), dtype=np.float64)
    identities = np.empty(len(index), dtype=np.int64)
    for i, rec in enumerate(index.records):
        bundle = index.load_bundle(rec)
        images[i] = bundle.image.transpose(2, 0, 1)
        vectors[i] = to_vector(rec.coefficients)
        identities[i] = rec.identity_id
    return images, vectors, identities


def per_group_mse(pred_z: torch.Tensor, target_z: torch.Tensor,
                  config: SamplerConfig | None = None) -> dict:
    diff2 = (pred_z - target_z) ** 2
    return {name: float(diff2[:, sl].mean())
            for name, sl in group_slices(config or SamplerConfig()).items()}


def train_encoder(index, epochs: int, seed: int, width: int = 24,
                  batch_size: int = 32, lr: float = 1e-3,
                  val_fraction: float = 0.1) -> EncoderTrainResult:
    """Supervised coefficient regression on a rendered dataset."""
    if len(index) == 0:
        raise ValueError("cannot train on an empty dataset")
    resolution = index.resolution
    torch.manual_seed(seed)
    model = EncoderModel(resolution=resolution, width=width)

    images, vectors, _ = _stack_dataset(index, resolution)
    normalizer = Normalizer.fit(vectors)
    targets = normalizer.normalize(vectors)

    rng = np.random.default_rng(np.random.SeedSequence([0xE3D, int(seed)]))
    order = rng.permutation(len(index))
    n_val = max(1, int(round(val_fraction * len(index)))) if len(index) > 1 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) == 0:
        train_idx = order
    x_val = torch.from_numpy(images[val_idx])
    y_val = torch.from_numpy(targets[val_idx])

    opt = torch.optim.Adam(model.parameters(), lr=lr)
    history = []
    for epoch in range(int(epochs)):
        model.train()
        perm = rng.permutation(len(train_idx))
        train_losses = []
        for start in range(0, len(perm), batch_size):
            sel = train_idx[perm[start:start + batch_size]]
            x = torch.from_numpy(images[sel])
            y = torch.from_numpy(targets[sel])
            pred = model(x)
            loss = F.mse_loss(pred, y)
            opt.zero_grad()
            loss.backward()
            opt.step()
            train_losses.append(loss.item())
        model.eval()
        with torch.no_grad():
            if len(val_idx):
                val_pred = model(x_val)
                val_mse = float(F.mse_loss(val_pred, y_val))
                group_mse = per_group_mse(val_pred, y_val)
            else:
                val_mse, group_mse = float("nan"), {}
        history.append(EpochStats(epoch=epoch, train_mse=float(np.mean(train_losses)),
                                  val_mse=val_mse, group_val_mse=group_mse))
    return EncoderTrainResult(model=model, normalizer=normalizer,
                              history=history, seed=seed)


# ---------------------------------------------------------------------------
# identity embedder


class IdentityEmbedder(nn.Module):
    """Image -> unit-norm identity vector (cosine-comparable)."""

    def __init__(self, resolution: int = 64, width: int = 16,
                 embed_dim: int = EMBED_DIM):
        super().__init__()
        self.resolution = int(resolution)
        self.width = int(width)
        self.embed_dim = int(embed_dim)
        w = width
        self.trunk = nn.Sequential(
            nn.Conv2d(3, w, 3, stride=2, padding=1), _gn(w), nn.SiLU(),
            nn.Conv2d(w, 2 * w, 3, stride=2, padding=1), _gn(2 * w), nn.SiLU(),
            nn.Conv2d(2 * w, 4 * w, 3, stride=2, padding=1), _gn(4 * w), nn.SiLU(),
            nn.Conv2d(4 * w, 4 * w, 3, stride=2, padding=1), _gn(4 * w), nn.SiLU(),
        )
        spatial = resolution // 16
        self.head = nn.Linear(4 * w * spatial * spatial, embed_dim)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        if image.shape[-1] != self.resolution or image.shape[-2] != self.resolution:
            raise ValueError(
                f"expected {self.resolution}x{self.resolution} input, "
                f"got {tuple(image.shape[-2:])}")
        h = self.trunk(image).flatten(1)
        return F.normalize(self.head(h), dim=-1, eps=1e-8)


def embed_image(embedder: IdentityEmbedder, image) -> torch.Tensor:
    if isinstance(image, np.ndarray):
        image = image_to_tensor(image)
    embedder.eval()
    with torch.no_grad():
        return embedder(image)[0]


@dataclass
class EmbedderTrainResult:
    embedder: IdentityEmbedder
    history: list          # per-epoch mean CE loss
    margin: float          # held-out same-identity minus cross-identity cosine
    seed: int


def cosine_margin(embeddings: torch.Tensor, identities: np.ndarray) -> float:
    """Mean same-identity cosine minus mean cross-identity cosine."""
    sims = embeddings @ embeddings.T
    ids = torch.as_tensor(identities)
    same = ids[:, None] == ids[None, :]
    off = ~torch.eye(len(ids), dtype=torch.bool)
    same_mean = float(sims[same & off].mean())
    cross_mean = float(sims[~same].mean())
    return same_mean - cross_mean


def train_embedder(index, epochs: int, seed: int, width: int = 16,
                   batch_size: int = 32, lr: float = 1e-3,
                   logit_scale: float = 16.0,
                   val_fraction: float = 0.15) -> EmbedderTrainResult:
    """Identity classification with a normalized-prototype softmax head;
    the classifier is discarded and only the embedding trunk is kept."""
    if len(index) == 0:
        raise ValueError("cannot train on an empty dataset")
    resolution = index.resolution
    torch.manual_seed(seed + 1)
    embedder = IdentityEmbedder(resolution=resolution, width=width)

    images, _, identities = _stack_dataset(index, resolution)
    classes = np.unique(identities)
    class_of = {int(c): i for i, c in enumerate(classes)}
    labels = np.array([class_of[int(i)] for i in identities], dtype=np.int64)
    prototypes = nn.Parameter(torch.randn(len(classes), embedder.embed_dim) * 0.05)

    rng = np.random.default_rng(np.random.SeedSequence([0xA1D, int(seed)]))
    order = rng.permutation(len(index))
    n_val = max(1, int(round(val_fraction * len(index)))) if len(index) > 1 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) == 0:
        train_idx = order

    opt = torch.optim.Adam(list(embedder.parameters()) + [prototypes], lr=lr)
    history = []
    for _ in range(int(epochs)):
        embedder.train()
        perm = rng.permutation(len(train_idx))
        losses = []
        for start in range(0, len(perm), batch_size):
            sel = train_idx[perm[start:start + batch_size]]
            x = torch.from_numpy(images[sel])
            y = torch.from_numpy(labels[sel])
            emb = embedder(x)
            logits = logit_scale * emb @ F.normalize(prototypes, dim=-1).T
            loss = F.cross_entropy(logits, y)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))

    embedder.eval()
    with torch.no_grad():
        hold = val_idx if len(val_idx) >= 2 else order
        emb = embedder(torch.from_numpy(images[hold]))
    margin = cosine_margin(emb, identities[hold])
    return EmbedderTrainResult(embedder=embedder, history=history,
                               margin=margin, seed=seed)


# ---------------------------------------------------------------------------
# checkpoint I/O (shared versioned container)


def state_dict_arrays(module: nn.Module, prefix: str = "param/") -> dict:
    return {prefix + k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def load_state_dict_arrays(module: nn.Module, arrays: dict, prefix: str = "param/") -> None:
    state = {k[len(prefix):]: torch.from_numpy(np.array(v))
             for k, v in arrays.items() if k.startswith(prefix)}
    module.load_state_dict(state)


def save_encoder_checkpoint(path, result: EncoderTrainResult) -> None:
    arrays = state_dict_arrays(result.model)
    arrays["norm/mean"] = result.normalizer.mean
    arrays["norm/std"] = result.normalizer.std
    meta = {
        "resolution": result.model.resolution,
        "width": result.model.width,
        "seed": result.seed,
        "epochs": len(result.history),
        "final_val_mse": result.history[-1].val_mse if result.history else None,
    }
    save_container(path, "coefficient-encoder", meta, arrays)


def load_encoder_checkpoint(path):
    _, meta, arrays = load_container(path, expected_kind="coefficient-encoder")
    model = EncoderModel(resolution=int(meta["resolution"]), width=int(meta["width"]))
    load_state_dict_arrays(model, arrays)
    model.eval()
    normalizer = Normalizer(mean=np.array(arrays["norm/mean"]),
                            std=np.array(arrays["norm/std"]))
    return model, normalizer, meta


def save_embedder_checkpoint(path, result: EmbedderTrainResult) -> None:
    arrays = state_dict_arrays(result.embedder)
    meta = {
        "resolution": result.embedder.resolution,
        "width": result.embedder.width,
        "embed_dim": result.embedder.embed_dim,
        "seed": result.seed,
        "margin": result.margin,
    }
    save_container(path, "identity-embedder", meta, arrays)


def load_embedder_checkpoint(path):
    _, meta, arrays = load_container(path, expected_kind="identity-embedder")
    embedder = IdentityEmbedder(resolution=int(meta["resolution"]),
                                width=int(meta["width"]),
                                embed_dim=int(meta["embed_dim"]))
    load_state_dict_arrays(embedder, arrays)
    embedder.eval()
    return embedder, meta


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
