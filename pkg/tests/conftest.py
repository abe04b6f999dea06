import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from labelqc.data import make_blobs
from labelqc.models import ClassifierSpec


@pytest.fixture(scope="session")
def blobs4():
    """The standard 4-class benchmark blobs used across detector tests."""
    return make_blobs(2000, 2, 4, 8.0, 42)


@pytest.fixture(scope="session")
def small_blobs():
    return make_blobs(300, 2, 3, 8.0, 42)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fast_spec():
    return ClassifierSpec(epochs=20)
