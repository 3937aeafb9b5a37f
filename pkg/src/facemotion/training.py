"""Adversarial training loop for the re-enactment model.

Batches mix paired samples (driving frame shares the source identity, so
pixel supervision applies) and unpaired ones according to a probability
that decays linearly over the run. Each step updates the discriminator
on the current generator output, then the generator and correspondence
networks on the full objective. The coefficient regressor and identity
embedder stay frozen throughout.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .container import load_container, save_container
from .correspondence import (
    CorrespondenceConfig,
    CorrespondenceExtractor,
    correlation_scores,
    downsample_area,
    downsample_nearest,
)
from .encoders import (
    EncoderModel,
    IdentityEmbedder,
    Normalizer,
    load_state_dict_arrays,
    state_dict_arrays,
)
from .face_model.basis import FaceBasis
from .face_model.coefficients import mix_coefficients, to_vector
from .face_model.raster import render_proxy
from .face_model.scene import landmark_heatmaps, parsing_to_onehot
from .losses import (
    LossReport,
    LossWeights,
    calibrate_weights,
    loss_adv_d,
    loss_adv_g,
    loss_cc,
    loss_geo,
    loss_id,
    loss_mw,
    total_losses,
)
from .synthesis import Generator, GeneratorConfig, PatchDiscriminator

_TRAIN_STREAM = 0x7BA1
CHECKPOINT_KIND = "reenactment-trainer"


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


@dataclass
class TrainConfig:
    resolution: int = 64
    batch_size: int = 4
    total_steps: int = 500
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    p_start: float = 0.8
    p_end: float = 0.2
    seed: int = 1
    tau: float = 0.01
    calibration_steps: int = 50
    weight_overrides: dict | None = None
    trunk_channels: int = 32
    feature_channels: int = 32
    gen_channels: tuple = (96, 96, 64, 48, 32)
    coarse_levels: tuple = (8, 16)
    guidance_channels: int = 1
    afm_width: int = 16
    disc_width: int = 32
    checkpoint_every: int = 0  # 0 = final checkpoint only

    def validate(self) -> "TrainConfig":
        if not (0.0 <= self.p_start <= 1.0 and 0.0 <= self.p_end <= 1.0):
            raise ValueError("p_start and p_end must lie in [0, 1]")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be nonnegative")
        return self

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["gen_channels"] = list(self.gen_channels)
        out["coarse_levels"] = list(self.coarse_levels)
        return out

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        kwargs = dict(d)
        if "gen_channels" in kwargs:
            kwargs["gen_channels"] = tuple(kwargs["gen_channels"])
        if "coarse_levels" in kwargs:
            kwargs["coarse_levels"] = tuple(kwargs["coarse_levels"])
        return cls(**kwargs).validate()

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            output_resolution=self.resolution, channels=tuple(self.gen_channels),
            coarse_levels=tuple(self.coarse_levels),
            guidance_channels=self.guidance_channels,
            afm_width=self.afm_width).validate()

    def correspondence_config(self) -> CorrespondenceConfig:
        return CorrespondenceConfig(
            resolution=self.resolution, trunk_channels=self.trunk_channels,
            feature_channels=self.feature_channels, tau=self.tau)


def p_schedule(step: float, config: TrainConfig) -> float:
    """Paired-sampling probability: linear from p_start at the first step
    to p_end at the last, clamped to [0, 1]. Batches are drawn with
    replacement so the step doubles as the schedule's epoch unit."""
    horizon = max(1, config.total_steps - 1)
    t = min(max(step / horizon, 0.0), 1.0)
    p = config.p_start + (config.p_end - config.p_start) * t
    return min(max(p, 0.0), 1.0)


@dataclass
class PairDraw:
    source: object    # SampleRecord
    driving: object   # SampleRecord
    paired: bool


def sample_batch(index, batch_size: int, p_current: float,
                 rng: np.random.Generator) -> list:
    """Draw (source, driving) pairs; each is paired (same identity,
    different sample) independently with probability p_current."""
    groups = index.by_identity()
    if len(groups) < 2 and p_current < 1.0:
        raise ValueError("unpaired sampling requires at least two identities")
    multi = [i for i, recs in groups.items() if len(recs) >= 2]
    if p_current > 0.0 and not multi:
        raise ValueError("paired sampling requires an identity with >= 2 samples")
    records = index.records
    draws = []
    for _ in range(batch_size):
        paired = bool(rng.random() < p_current)
        if paired:
            identity = multi[int(rng.integers(len(multi)))]
            recs = groups[identity]
            i, j = rng.choice(len(recs), size=2, replace=False)
            draws.append(PairDraw(source=recs[int(i)], driving=recs[int(j)],
                                  paired=True))
        else:
            src = records[int(rng.integers(len(records)))]
            others = [r for r in records if r.identity_id != src.identity_id]
            drv = others[int(rng.integers(len(others)))]
            draws.append(PairDraw(source=src, driving=drv, paired=False))
    return draws


class SampleCache:
    """Decoded dataset bundles plus source-proxy renders, kept in memory.
    Everything derives deterministically from the dataset and basis."""

    def __init__(self, index, basis: FaceBasis):
        self.index = index
        self.basis = basis
        self.resolution = index.resolution
        self._items = {}

    def get(self, record) -> dict:
        item = self._items.get(record.sample_id)
        if item is None:
            bundle = self.index.load_bundle(record)
            proxy = render_proxy(record.coefficients, self.basis, self.resolution)
            item = {
                "image": torch.from_numpy(bundle.image.transpose(2, 0, 1).copy()),
                "heatmaps": torch.from_numpy(bundle.heatmaps.copy()),
                "parsing_onehot": torch.from_numpy(parsing_to_onehot(bundle.parsing)),
                "proxy": torch.from_numpy(proxy.image.transpose(2, 0, 1).copy()),
                "vector": to_vector(record.coefficients),
            }
            self._items[record.sample_id] = item
        return item


def collate_pairs(draws: list, cache: SampleCache) -> dict:
    """Assemble batched tensors for one train step, rendering each pair's
    re-enacted proxy on the fly."""
    res = cache.resolution
    src_image, src_proxy, src_heat, src_parse = [], [], [], []
    drv_image, drv_parse, reen_proxy, reen_heat = [], [], [], []
    drv_vec, paired = [], []
    for draw in draws:
        s, d = cache.get(draw.source), cache.get(draw.driving)
        mixed = mix_coefficients(draw.source.coefficients, draw.driving.coefficients)
        target = render_proxy(mixed, cache.basis, res)
        src_image.append(s["image"])
        src_proxy.append(s["proxy"])
        src_heat.append(s["heatmaps"])
        src_parse.append(s["parsing_onehot"])
        drv_image.append(d["image"])
        drv_parse.append(d["parsing_onehot"])
        reen_proxy.append(torch.from_numpy(target.image.transpose(2, 0, 1).copy()))
        reen_heat.append(torch.from_numpy(landmark_heatmaps(target.landmarks, res)))
        drv_vec.append(d["vector"])
        paired.append(draw.paired)
    return {
        "src_image": torch.stack(src_image),
        "src_proxy": torch.stack(src_proxy),
        "src_heat": torch.stack(src_heat),
        "src_parsing": torch.stack(src_parse),
        "drv_image": torch.stack(drv_image),
        "drv_parsing": torch.stack(drv_parse),
        "reen_proxy": torch.stack(reen_proxy),
        "reen_heat": torch.stack(reen_heat),
        "drv_vector": torch.from_numpy(np.stack(drv_vec)).float(),
        "paired": torch.tensor(paired, dtype=torch.bool),
    }


@dataclass
class TrainState:
    config: TrainConfig
    basis: FaceBasis
    encoder: EncoderModel
    normalizer: Normalizer
    embedder: IdentityEmbedder
    extractor: CorrespondenceExtractor
    generator: Generator
    discriminator: PatchDiscriminator
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    weights: LossWeights
    rng: np.random.Generator
    step: int = 0
    extras: dict = field(default_factory=dict)


def _freeze(module: torch.nn.Module) -> torch.nn.Module:
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module


def build_state(config: TrainConfig, basis: FaceBasis, encoder: EncoderModel,
                normalizer: Normalizer, embedder: IdentityEmbedder,
                weights: LossWeights | None = None) -> TrainState:
    config.validate()
    if encoder.resolution != config.resolution:
        raise ValueError("coefficient encoder resolution does not match config")
    if embedder.resolution != config.resolution:
        raise ValueError("identity embedder resolution does not match config")
    torch.manual_seed(config.seed)
    extractor = CorrespondenceExtractor(config.correspondence_config())
    generator = Generator(config.generator_config())
    discriminator = PatchDiscriminator(config.resolution, config.disc_width)
    _freeze(encoder)
    _freeze(embedder)
    betas = (config.beta1, config.beta2)
    opt_g = torch.optim.Adam(
        list(extractor.parameters()) + list(generator.parameters()),
        lr=config.lr, betas=betas)
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=config.lr, betas=betas)
    if weights is None:
        weights = (LossWeights.from_dict(config.weight_overrides)
                   if config.weight_overrides else LossWeights())
    rng = np.random.default_rng(
        np.random.SeedSequence([_TRAIN_STREAM, int(config.seed)]))
    return TrainState(config=config, basis=basis, encoder=encoder,
                      normalizer=normalizer, embedder=embedder,
                      extractor=extractor, generator=generator,
                      discriminator=discriminator, opt_g=opt_g, opt_d=opt_d,
                      weights=weights, rng=rng)


def _forward_generator(state: TrainState, batch: dict) -> dict:
    """Correspondence, warps, and generator output for one batch."""
    cfg = state.extractor.config
    hw = (cfg.field_resolution, cfg.field_resolution)

    f_s = state.extractor.source_features(batch["src_proxy"], batch["src_heat"],
                                          batch["src_parsing"])
    f_r = state.extractor.target_features(batch["reen_proxy"], batch["reen_heat"])
    scores = correlation_scores(f_s, f_r) / cfg.tau     # (B, hw, hw)
    field_matrix = torch.softmax(scores, dim=-1)

    def batch_warp(x, mode):
        small = downsample_area(x, hw) if mode == "area" else downsample_nearest(x, hw)
        flat = small.flatten(2).transpose(1, 2)         # (B, hw, k)
        return (field_matrix @ flat).transpose(1, 2).reshape(small.shape)

    img_w = batch_warp(batch["src_image"], "area")
    par_w = batch_warp(batch["src_parsing"], "nearest")
    prx_w = batch_warp(batch["src_proxy"], "area")

    reverse = torch.softmax(scores.transpose(1, 2), dim=-1)
    img_cycled = (reverse @ img_w.flatten(2).transpose(1, 2)) \
        .transpose(1, 2).reshape(img_w.shape)

    generated = state.generator(img_w, par_w, prx_w)
    return {"field": field_matrix, "img_w": img_w, "par_w": par_w,
            "prx_w": prx_w, "img_cycled": img_cycled, "generated": generated,
            "hw": hw}


def train_step(state: TrainState, batch: dict) -> LossReport:
    """One discriminator update on current generator outputs, then one
    generator/correspondence update on the full objective."""
    cfg = state.config
    out = _forward_generator(state, batch)
    generated, hw = out["generated"], out["hw"]
    fake_checksum = float(generated.detach().double().sum())

    # discriminator update (generator outputs detached)
    real_scores = state.discriminator(batch["drv_image"])
    fake_scores_d = state.discriminator(generated.detach())
    adv_d = loss_adv_d(real_scores, fake_scores_d)
    state.opt_d.zero_grad(set_to_none=True)
    adv_d.backward()
    state.opt_d.step()

    # generator losses (discriminator frozen for this backward)
    mw = loss_mw(out["prx_w"], downsample_area(batch["reen_proxy"], hw))
    cc = loss_cc(out["img_cycled"], downsample_area(batch["src_image"], hw))
    emb_gen = state.embedder(generated)
    emb_src = state.embedder(batch["src_image"])
    ident = loss_id(emb_gen, emb_src)
    pred_vec = state.normalizer.denormalize_t(state.encoder(generated))
    geo = loss_geo(pred_vec, batch["drv_vector"])

    paired_mask = batch["paired"]
    if paired_mask.any():
        sel = paired_mask.nonzero(as_tuple=True)[0]
        target_parse = downsample_nearest(batch["drv_parsing"][sel], hw)
        pix_terms = (
            (generated[sel] - batch["drv_image"][sel]).pow(2).mean(dim=(1, 2, 3))
            + (out["par_w"][sel] - target_parse).pow(2).mean(dim=(1, 2, 3)))
        pix = pix_terms.sum() / paired_mask.shape[0]
    else:
        pix = generated.new_zeros(())

    for p in state.discriminator.parameters():
        p.requires_grad_(False)
    adv_g = loss_adv_g(state.discriminator(generated))
    terms = {"mw": mw, "cc": cc, "id": ident, "geo": geo, "pix": pix,
             "adv_g": adv_g, "adv_d": adv_d.detach()}
    total_g, total_d = total_losses(terms, state.weights)
    state.opt_g.zero_grad(set_to_none=True)
    total_g.backward()
    state.opt_g.step()
    for p in state.discriminator.parameters():
        p.requires_grad_(True)

    report = LossReport(
        mw=float(mw), cc=float(cc), id=float(ident), geo=float(geo),
        pix=float(pix), adv_g=float(adv_g), adv_d=float(adv_d),
        total_g=float(total_g), total_d=float(total_d),
        paired=bool(paired_mask.any()),
        extras={"paired_fraction": float(paired_mask.float().mean()),
                "fake_checksum_d": fake_checksum,
                "fake_checksum_g": float(generated.detach().double().sum())})
    values = [report.mw, report.cc, report.id, report.geo, report.pix,
              report.adv_g, report.adv_d, report.total_g]
    if not all(np.isfinite(v) for v in values):
        raise TrainingDiverged(
            f"non-finite loss at step {state.step}", report.as_dict())
    state.step += 1
    return report


def run_calibration(config: TrainConfig, basis, encoder, normalizer, embedder,
                    index) -> LossWeights:
    """Measure mean term magnitudes over seeded warm-up steps with unit
    weights, then fix each weight an order of magnitude under L_geo."""
    state = build_state(config, basis, encoder, normalizer, embedder,
                        weights=LossWeights())
    cache = SampleCache(index, basis)
    sums = {k: 0.0 for k in ("mw", "cc", "id", "geo", "pix", "adv_g")}
    n = max(1, config.calibration_steps)
    paired_steps = 0
    for step in range(n):
        draws = sample_batch(index, config.batch_size,
                             p_schedule(step, config), state.rng)
        report = train_step(state, collate_pairs(draws, cache))
        for k in sums:
            sums[k] += getattr(report, k)
        paired_steps += int(report.paired)
    means = {k: v / n for k, v in sums.items()}
    if paired_steps:
        means["pix"] = means["pix"] * n / paired_steps  # mean over active steps
    return calibrate_weights(means)


def run_training(index, config: TrainConfig, basis, encoder, normalizer,
                 embedder, out_dir: str | None = None,
                 resume_from: str | None = None,
                 log_callback=None) -> tuple:
    """Full training run: optional weight calibration, then total_steps
    alternating updates. Returns (state, history of per-step dicts)."""
    torch.set_num_threads(1)
    if resume_from is not None:
        state = load_checkpoint(resume_from, basis=basis)
        config = state.config
    else:
        config.validate()
        if config.weight_overrides:
            weights = LossWeights.from_dict(config.weight_overrides)
        elif config.calibration_steps > 0 and config.total_steps > 0:
            weights = run_calibration(config, basis, encoder, normalizer,
                                      embedder, index)
        else:
            weights = LossWeights()
        state = build_state(config, basis, encoder, normalizer, embedder,
                            weights=weights)

    cache = SampleCache(index, state.basis)
    history = []
    log_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        mode = "a" if resume_from else "w"
        log_fh = open(os.path.join(out_dir, "train_log.jsonl"), mode)
        with open(os.path.join(out_dir, "run_config.json"), "w") as fh:
            json.dump({"config": state.config.to_json(),
                       "weights": state.weights.as_dict()}, fh, indent=2)
    try:
        while state.step < config.total_steps:
            p = p_schedule(state.step, config)
            draws = sample_batch(index, config.batch_size, p, state.rng)
            report = train_step(state, collate_pairs(draws, cache))
            row = {"step": state.step, "p_current": p}
            row.update(report.as_dict())
            history.append(row)
            if log_fh is not None:
                log_fh.write(json.dumps(row) + "\n")
            if log_callback is not None:
                log_callback(row)
            if (out_dir is not None and config.checkpoint_every
                    and state.step % config.checkpoint_every == 0
                    and state.step < config.total_steps):
                save_checkpoint(state, os.path.join(
                    out_dir, f"checkpoint_{state.step:06d}.fmck"))
    finally:
        if log_fh is not None:
            log_fh.close()
    if out_dir is not None:
        save_checkpoint(state, os.path.join(out_dir, "checkpoint.fmck"))
    return state, history


# ---------------------------------------------------------------------------
# checkpointing


def _optimizer_arrays(opt: torch.optim.Adam, named: list, prefix: str) -> dict:
    arrays = {}
    for name, p in named:
        st = opt.state.get(p)
        if not st:
            continue
        arrays[f"{prefix}/step/{name}"] = np.array([float(st["step"])], dtype=np.float64)
        arrays[f"{prefix}/exp_avg/{name}"] = st["exp_avg"].detach().cpu().numpy()
        arrays[f"{prefix}/exp_avg_sq/{name}"] = st["exp_avg_sq"].detach().cpu().numpy()
    return arrays


def _restore_optimizer(opt: torch.optim.Adam, named: list, prefix: str,
                       arrays: dict) -> None:
    for name, p in named:
        key = f"{prefix}/step/{name}"
        if key not in arrays:
            continue
        opt.state[p] = {
            "step": torch.tensor(float(arrays[key][0])),
            "exp_avg": torch.from_numpy(np.array(arrays[f"{prefix}/exp_avg/{name}"])),
            "exp_avg_sq": torch.from_numpy(np.array(arrays[f"{prefix}/exp_avg_sq/{name}"])),
        }


def _named_g_params(state: TrainState) -> list:
    return ([("corr." + n, p) for n, p in state.extractor.named_parameters()]
            + [("gen." + n, p) for n, p in state.generator.named_parameters()])


def _named_d_params(state: TrainState) -> list:
    return [("disc." + n, p) for n, p in state.discriminator.named_parameters()]


def _basis_arrays(basis: FaceBasis) -> dict:
    return {
        "basis/mean_vertices": basis.mean_vertices,
        "basis/shape_basis": basis.shape_basis,
        "basis/expression_basis": basis.expression_basis,
        "basis/jaw_field": basis.jaw_field,
        "basis/mean_albedo": basis.mean_albedo,
        "basis/texture_basis": basis.texture_basis,
        "basis/faces": basis.faces,
        "basis/region_labels": basis.region_labels,
        "basis/landmark_indices": basis.landmark_indices,
    }


def _basis_from_arrays(arrays: dict) -> FaceBasis:
    def a(name):
        return np.array(arrays["basis/" + name])
    return FaceBasis(
        mean_vertices=a("mean_vertices"), shape_basis=a("shape_basis"),
        expression_basis=a("expression_basis"), jaw_field=a("jaw_field"),
        mean_albedo=a("mean_albedo"), texture_basis=a("texture_basis"),
        faces=a("faces"), region_labels=a("region_labels"),
        landmark_indices=a("landmark_indices"))


def save_checkpoint(state: TrainState, path) -> None:
    arrays = {}
    arrays.update(state_dict_arrays(state.extractor, "corr/param/"))
    arrays.update(state_dict_arrays(state.generator, "gen/param/"))
    arrays.update(state_dict_arrays(state.discriminator, "disc/param/"))
    arrays.update(state_dict_arrays(state.encoder, "encoder/param/"))
    arrays.update(state_dict_arrays(state.embedder, "embedder/param/"))
    arrays["encoder/norm/mean"] = state.normalizer.mean
    arrays["encoder/norm/std"] = state.normalizer.std
    arrays.update(_basis_arrays(state.basis))
    arrays.update(_optimizer_arrays(state.opt_g, _named_g_params(state), "optg"))
    arrays.update(_optimizer_arrays(state.opt_d, _named_d_params(state), "optd"))
    meta = {
        "config": state.config.to_json(),
        "weights": state.weights.as_dict(),
        "step": state.step,
        "rng_state": state.rng.bit_generator.state,
        "encoder": {"resolution": state.encoder.resolution,
                    "width": state.encoder.width},
        "embedder": {"resolution": state.embedder.resolution,
                     "width": state.embedder.width,
                     "embed_dim": state.embedder.embed_dim},
    }
    save_container(path, CHECKPOINT_KIND, meta, arrays)


def load_checkpoint(path, basis: FaceBasis | None = None) -> TrainState:
    _, meta, arrays = load_container(path, expected_kind=CHECKPOINT_KIND)
    config = TrainConfig.from_json(meta["config"])
    if basis is None:
        basis = _basis_from_arrays(arrays)
    encoder = EncoderModel(resolution=int(meta["encoder"]["resolution"]),
                           width=int(meta["encoder"]["width"]))
    load_state_dict_arrays(encoder, arrays, "encoder/param/")
    normalizer = Normalizer(mean=np.array(arrays["encoder/norm/mean"]),
                            std=np.array(arrays["encoder/norm/std"]))
    embedder = IdentityEmbedder(resolution=int(meta["embedder"]["resolution"]),
                                width=int(meta["embedder"]["width"]),
                                embed_dim=int(meta["embedder"]["embed_dim"]))
    load_state_dict_arrays(embedder, arrays, "embedder/param/")
    state = build_state(config, basis, encoder, normalizer, embedder,
                        weights=LossWeights.from_dict(meta["weights"]))
    load_state_dict_arrays(state.extractor, arrays, "corr/param/")
    load_state_dict_arrays(state.generator, arrays, "gen/param/")
    load_state_dict_arrays(state.discriminator, arrays, "disc/param/")
    _restore_optimizer(state.opt_g, _named_g_params(state), "optg", arrays)
    _restore_optimizer(state.opt_d, _named_d_params(state), "optd", arrays)
    state.step = int(meta["step"])
    state.rng.bit_generator.state = meta["rng_state"]
    return state
