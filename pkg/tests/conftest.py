import numpy as np
import pytest

from pm25map.data import Dataset, FeatureSchema
from pm25map.synth import make_benchmark, sample_features


@pytest.fixture(scope="session")
def small_benchmark():
    """2k-row slice of the synthetic benchmark for quick model tests."""
    ds, clean = make_benchmark(n=2000, seed=7)
    return ds, clean


@pytest.fixture(scope="session")
def feature_rows():
    rng = np.random.default_rng(123)
    return sample_features(200, rng)


@pytest.fixture()
def tiny_dataset():
    rng = np.random.default_rng(5)
    X = sample_features(40, rng)
    y = rng.uniform(5.0, 60.0, 40)
    return Dataset(X, y, schema=FeatureSchema())
