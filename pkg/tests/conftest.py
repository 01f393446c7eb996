"""Shared fixtures: a small exported synthetic dataset."""

import pytest

from egomatch.dataset import VideoDataset
from egomatch.synthworld import WorldConfig, export, generate


@pytest.fixture(scope="session")
def small_ds_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("smallds") / "data"
    cfg = WorldConfig(frames=120, agents=3, wearers=2, seed=5)
    export(generate(cfg), out)
    return out


@pytest.fixture(scope="session")
def small_ds(small_ds_dir):
    return VideoDataset(small_ds_dir)
