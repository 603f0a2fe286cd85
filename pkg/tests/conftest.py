import os

import numpy as np
import pytest

from recpoison import InteractionDataset, ModelConfig, make_synthetic, split_dataset, train


@pytest.fixture(scope="session")
def tiny_ds():
    """Hand-built 6x8 dataset, everything in train."""
    pairs = [
        (0, 0), (0, 1), (0, 2),
        (1, 0), (1, 1),
        (2, 1), (2, 2), (2, 3),
        (3, 4), (3, 5),
        (4, 0), (4, 5), (4, 6),
        (5, 2), (5, 7),
    ]
    return InteractionDataset(
        user_ids=[f"u{k}" for k in range(6)],
        item_ids=[f"i{k}" for k in range(8)],
        train=pairs,
        valid=[],
        test=[],
        tag="tiny",
    )


@pytest.fixture(scope="session")
def small_ds():
    """40x30 synthetic with real valid/test splits; big enough to train on."""
    raw = make_synthetic(40, 30, seed=7, mean_degree=9.0, min_degree=5, max_degree=16)
    return split_dataset(raw, seed=1)


@pytest.fixture(scope="session")
def small_state(small_ds):
    cfg = ModelConfig(encoder="lightgcn", cl="none", dim=8, layers=2,
                      lr=0.05, batch_size=64, epochs=15, seed=3)
    return train(small_ds, cfg)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def accept_cache():
    """Persistent experiment cache shared across acceptance runs."""
    path = os.path.join(os.path.dirname(__file__), ".acceptance_cache")
    os.makedirs(path, exist_ok=True)
    return path
