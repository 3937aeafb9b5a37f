import numpy as np
import pytest
import torch

from facemotion.encoders import train_embedder, train_encoder
from facemotion.face_model import build_face_basis, generate_dataset, load_dataset
from facemotion.training import TrainConfig, run_training


def pytest_configure(config):
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def basis():
    return build_face_basis(seed=0)


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory, basis):
    root = tmp_path_factory.mktemp("tiny-data")
    generate_dataset(basis, str(root), n_identities=4, samples_per_identity=3,
                     resolution=64, seed=11)
    return str(root)


@pytest.fixture(scope="session")
def tiny_index(tiny_dataset_dir):
    return load_dataset(tiny_dataset_dir)


def small_train_config(**kw) -> TrainConfig:
    """Down-sized training config so loop/persistence tests stay fast."""
    base = dict(resolution=64, batch_size=2, total_steps=4, lr=1e-4,
                calibration_steps=0, trunk_channels=8, feature_channels=8,
                gen_channels=(32, 32, 24, 16, 16), coarse_levels=(8, 16),
                afm_width=8, disc_width=16, seed=3)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def quick_encoder(tiny_index):
    return train_encoder(tiny_index, epochs=2, seed=5, width=8)


@pytest.fixture(scope="session")
def quick_embedder(tiny_index):
    return train_embedder(tiny_index, epochs=2, seed=5, width=8)


@pytest.fixture(scope="session")
def micro_run(tmp_path_factory, tiny_index, basis, quick_encoder, quick_embedder):
    """A 3-step trained state + checkpoint on disk, shared by pipeline,
    evaluation, and CLI tests."""
    out_dir = tmp_path_factory.mktemp("micro-run")
    config = small_train_config(total_steps=3)
    state, history = run_training(
        tiny_index, config, basis, quick_encoder.model, quick_encoder.normalizer,
        quick_embedder.embedder, out_dir=str(out_dir))
    return {"state": state, "history": history, "out_dir": str(out_dir),
            "checkpoint": str(out_dir / "checkpoint.fmck")}


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
