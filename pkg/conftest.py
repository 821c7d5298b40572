import numpy as np
import pytest

from core.pcgeom import VoxelCloud, morton_decode


def random_cloud(n, depth, channels=3, seed=0, low=0.0, high=255.0):
    """n distinct voxels in Morton order with uniform attributes."""
    rng = np.random.default_rng(seed)
    codes = np.sort(rng.choice(1 << (3 * depth), size=n, replace=False))
    coords = morton_decode(codes, depth)
    attrs = rng.uniform(low, high, size=(n, channels))
    return VoxelCloud(coords, attrs, depth)


@pytest.fixture
def make_cloud():
    return random_cloud


def line_cloud(values, depth=2):
    """Points at x = 0, 1, ... with one attribute channel."""
    values = np.asarray(values, dtype=np.float64)
    coords = np.zeros((len(values), 3), dtype=np.int64)
    coords[:, 0] = np.arange(len(values))
    return VoxelCloud(coords, values, depth)
