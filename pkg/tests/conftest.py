import numpy as np
import pytest

from tcm_al import EmbeddingDataset, MixtureSpec, gaussian_mixture


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_mixture():
    return gaussian_mixture(MixtureSpec(class_count=4, samples_per_class=30, dimension=6,
                                        center_separation=8.0, noise_sigma=1.0, seed=7))


def line_points(*xs):
    return np.asarray(xs, dtype=float).reshape(-1, 1)


def dataset_from(points, labels=None, class_count=2):
    points = np.asarray(points, dtype=float)
    if labels is None:
        labels = np.arange(points.shape[0]) % class_count
    return EmbeddingDataset(points, labels, class_count)
