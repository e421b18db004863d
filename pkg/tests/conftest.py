from __future__ import annotations

import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from aigiqa.data import make_split
from aigiqa.encoders import StubDualEncoder
from aigiqa.synthetic import make_synthetic_dataset


@pytest.fixture
def small_encoder():
    """Fast stub backbone: d=32, 16x16 inputs, full 77-token window."""
    return StubDualEncoder(identifier="stub:test", embed_dim=32, image_size=16)


@pytest.fixture
def dataset_factory(tmp_path):
    """Build tiny on-disk datasets; returns (manifest, directory)."""

    def build(count=10, seed=0, image_size=16, split_ratio=None, split_seed=0, profile="agiqa-3k"):
        directory = tmp_path / f"ds_{count}_{seed}"
        manifest = make_synthetic_dataset(
            directory, count=count, seed=seed, image_size=image_size, profile=profile
        )
        if split_ratio is not None:
            manifest = make_split(manifest, ratio=split_ratio, seed=split_seed)
        return manifest, directory

    return build


@pytest.fixture(autouse=True)
def _single_thread():
    # keeps tiny-tensor runs fast and reproducible on CI boxes
    torch.set_num_threads(1)
