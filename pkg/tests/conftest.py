"""
File: conftest.py

Overview:
Shared fixtures for the segmentation toolkit tests. Everything runs on CPU with tiny
networks and small synthetic corpora written into pytest's ``tmp_path``.

Fixtures:
- `space`: the unified label space loaded from the bundled label table.
- `toy_model_config`: a five-stage encoder with very few channels.
- `driving_spec` / `indoor_spec`: synthetic dataset specs for one driving and one indoor dataset.
- `driving_corpus` / `mixed_corpus`: generated datasets on disk.
- `run_config`: a RunConfig wired to the mixed corpus with a short training budget.
"""

# Third-party imports
import numpy as np
import pytest
import torch

# Application-specific imports
from app.schemas.config_schemas import AugmentParams, DatasetEntry, ModelConfig, RunConfig, SamplerConfig, SyntheticDatasetSpec, TrainConfig
from app.services.dataset_service import generate_synthetic
from app.services.label_service import build_default_space
from settings.config import settings


@pytest.fixture(scope="session")
def space():
    return build_default_space()


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch):
    """No test sees a developer's LADDERSEG_OUTPUT_ROOT; loading stays in-process."""
    monkeypatch.setattr(settings, "output_root", None)
    monkeypatch.setattr(settings, "num_workers", 0)
    monkeypatch.setattr(settings, "device", "cpu")


@pytest.fixture
def toy_model_config():
    return ModelConfig(
        encoder_stage_widths=(16, 24, 32, 48, 64),
        block_depths=(1, 1, 1, 1, 1),
        growth_rate=8,
        decoder_width=32,
        num_classes=6,
    )


@pytest.fixture
def full_label_model_config():
    """Toy widths but every unified object class, for mixed driving/indoor corpora."""
    return ModelConfig(
        encoder_stage_widths=(16, 24, 32, 48, 64),
        block_depths=(1, 1, 1, 1, 1),
        growth_rate=8,
        decoder_width=32,
        num_classes=39,
    )


@pytest.fixture
def driving_spec():
    return SyntheticDatasetSpec(dataset_id="cityscapes", split="train", height=64, width=64,
                                classes=(0, 1, 2, 3, 4, 5), count=6, max_shapes=2)


@pytest.fixture
def indoor_spec():
    return SyntheticDatasetSpec(dataset_id="scannet", split="train", height=64, width=64,
                                classes=(19, 20, 21, 23), count=6, max_shapes=2)


@pytest.fixture
def driving_corpus(tmp_path, space, driving_spec):
    return generate_synthetic(driving_spec, 0, tmp_path / "data" / "train", space)


@pytest.fixture
def mixed_corpus(tmp_path, space, driving_spec, indoor_spec):
    root = tmp_path / "data"
    indexes = {}
    for spec in (driving_spec, indoor_spec):
        indexes[spec.dataset_id] = generate_synthetic(spec, 0, root / "train", space)
        val_spec = spec.model_copy(update={"split": "val", "count": 2})
        generate_synthetic(val_spec, 0, root / "val", space)
    return indexes


@pytest.fixture
def run_config(tmp_path, mixed_corpus, full_label_model_config):
    root = tmp_path / "data"
    return RunConfig(
        datasets=[
            DatasetEntry(dataset_id="cityscapes", root=root / "train", val_root=root / "val"),
            DatasetEntry(dataset_id="scannet", root=root / "train", val_root=root / "val"),
        ],
        augment=AugmentParams(scale_min=0.75, scale_max=1.25, crop=64, flip_prob=0.5),
        sampler=SamplerConfig(ratio=2.0),
        model=full_label_model_config,
        train=TrainConfig(base_lr=1e-3, batch_size=2, iterations=4, eval_every=1000, checkpoint_every=2, log_every=1),
        output_dir=tmp_path / "run",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def torch_seed():
    torch.manual_seed(0)
