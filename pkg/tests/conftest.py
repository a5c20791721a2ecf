"""Shared fixtures: the real digits splits plus a small synthetic dataset.

Datasets other than digits need files the repo does not ship; tests that want
them go through `load_or_skip` so a bare checkout still runs green.
"""

from pathlib import Path

import numpy as np
import pytest

from salnet.data import Dataset, load_dataset
from salnet.numerics import Prng

REPO_ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = REPO_ROOT / "data"


def load_or_skip(name: str):
    try:
        return load_dataset(name, DATA_DIR)
    except FileNotFoundError as err:
        pytest.skip(f"dataset files not present: {err}")


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def digits():
    """(train, test) digits splits; materialized from scikit-learn on first use."""
    return load_or_skip("digits")


def make_toy_dataset(seed: int = 5, samples_per_class: int = 30, dim: int = 8,
                     classes: int = 3, spread: float = 0.5) -> Dataset:
    """Linearly separable Gaussian blobs, one per class."""
    rng = Prng(seed)
    centers = rng.child(0).normal(classes, dim, std=2.0)
    features, labels = [], []
    for c in range(classes):
        pts = centers[c] + rng.child(1, c).normal(samples_per_class, dim, std=spread)
        features.append(pts)
        labels.extend([c] * samples_per_class)
    return Dataset("toy", np.vstack(features), np.array(labels), classes,
                   pixel_range=(-10.0, 10.0))


@pytest.fixture()
def toy_dataset() -> Dataset:
    return make_toy_dataset()


@pytest.fixture()
def toy_split():
    """Small separable (train, test) pair for end-to-end training smoke tests."""
    from salnet.data import stratified_split

    return stratified_split(make_toy_dataset(), 0.8, seed=3)
