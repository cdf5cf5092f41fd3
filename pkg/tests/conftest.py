import os
from pathlib import Path

import pytest

DATA_ENV = "FEDSPARSIFY_DATA"
IDX_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


def fashion_mnist_dir():
    """Directory holding the four IDX files, or None when unavailable."""
    candidates = []
    if os.environ.get(DATA_ENV):
        candidates.append(Path(os.environ[DATA_ENV]))
    candidates.append(Path(__file__).resolve().parents[1] / "data" / "fashion-mnist")
    for root in candidates:
        if all((root / name).exists() for name in IDX_FILES):
            return root
    return None


requires_fashion_mnist = pytest.mark.skipif(
    fashion_mnist_dir() is None,
    reason=(
        "FashionMNIST IDX files not found; fetch them with "
        "scripts/fetch_fashion_mnist.py and point FEDSPARSIFY_DATA at the directory"
    ),
)
