import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from gatehash.data import make_embedding_set


def random_embedding_set(rng, count=8, dims=(3, 2), categories=4):
    """Small random set with float32-representable features and valid labels."""
    features = [
        rng.standard_normal((count, d)).astype(np.float32).astype(np.float64)
        for d in dims
    ]
    labels = rng.integers(0, 2, size=(count, categories)).astype(np.uint8)
    for row in range(count):
        if categories and not labels[row].any():
            labels[row, int(rng.integers(categories))] = 1
    ids = np.arange(count, dtype=np.uint64)
    return make_embedding_set(features, labels, ids)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
