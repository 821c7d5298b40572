import numpy as np
import pytest

from core.errors import BlockSizeError, CloudInvariantError, LayoutMismatchError
from core.pcgeom import VoxelCloud, morton_decode
from core.ragft import (
    resolve_block_sizes, build_hierarchy, block_gft, LevelTransform, RagftTransform,
    forward_level, inverse_level, forward_full, inverse_full, zero_pad_closed_form
)
from conftest import random_cloud

SQRT2 = np.sqrt(2.0)


def full_cube(depth):
    codes = np.arange(1 << (3 * depth))
    return VoxelCloud(morton_decode(codes, depth), np.zeros((len(codes), 1)), depth)


class TestBlockSizes:
    def test_int_means_every_level(self):
        assert resolve_block_sizes(2, 3) == (2, 2, 2)
        assert resolve_block_sizes(4, 4) == (4, 4)

    def test_finest_first_sequence(self):
        assert resolve_block_sizes([16, 2, 2], 6) == (2, 2, 16)

    def test_repeat_marker(self):
        assert resolve_block_sizes((16, 2, ...), 6) == (2, 2, 16)
        assert resolve_block_sizes((16, 2, ...), 5) == (2, 16)

    @pytest.mark.parametrize("sizes,depth", [(3, 3), ([2, 2], 3), (16, 6), ([0, 2], 2), ((32, ...), 4)])
    def test_invalid(self, sizes, depth):
        with pytest.raises(BlockSizeError):
            resolve_block_sizes(sizes, depth)


class TestHierarchy:
    def test_full_cube_block(self):
        hier = build_hierarchy(full_cube(1), 2)
        assert hier.counts == [1, 8]
        assert hier.levels[0].weights.tolist() == [8.0]
        assert hier.levels[0].children_of(0).tolist() == list(range(8))

    def test_single_point(self):
        cloud = VoxelCloud([[5, 3, 1]], [[1.0]], 3)
        hier = build_hierarchy(cloud, 2)
        assert hier.counts == [1, 1, 1, 1]
        assert all(lvl.weights.tolist() == [1.0] for lvl in hier.levels)

    def test_weight_conservation(self):
        for seed in range(5):
            cloud = random_cloud(500, 6, seed=seed)
            hier = build_hierarchy(cloud, [4, 2, 2, 2, 2])
            assert all(lvl.weights.sum() == 500 for lvl in hier.levels)
            assert hier.levels[-1].weights.tolist() == [1.0] * 500
            for l in range(hier.L):
                child = hier.levels[l + 1]
                sums = np.bincount(child.parent_of, weights=child.weights)
                assert np.array_equal(sums, hier.levels[l].weights)

    def test_parents_are_quotients(self):
        cloud = random_cloud(300, 5, seed=4)
        hier = build_hierarchy(cloud, 2)
        for l in range(hier.L):
            child = hier.levels[l + 1]
            expected = np.unique(child.points >> 1, axis=0)
            assert len(expected) == hier.levels[l].n
            assert np.array_equal(child.points >> 1, hier.levels[l].points[child.parent_of])
        assert np.all(np.diff(hier.counts) >= 0)

    def test_requires_morton_order(self):
        cloud = VoxelCloud([[1, 0, 0], [0, 0, 0]], [[0.0], [0.0]], 1)
        with pytest.raises(CloudInvariantError):
            build_hierarchy(cloud, 2)


class TestBlockGft:
    def test_singleton(self):
        assert block_gft([[0, 0, 0]], [1.0]).tolist() == [[1.0]]

    def test_equal_pair(self):
        U = block_gft([[0, 0, 0], [1, 0, 0]], [1.0, 1.0])
        np.testing.assert_allclose(U, [[1 / SQRT2, 1 / SQRT2], [1 / SQRT2, -1 / SQRT2]], atol=1e-12)

    def test_weighted_dc(self):
        U = block_gft([[0, 0, 0], [0, 1, 0]], [1.0, 3.0])
        np.testing.assert_allclose(U[:, 0], [0.5, np.sqrt(3) / 2], atol=1e-12)
        np.testing.assert_allclose(U.T @ U, np.eye(2), atol=1e-10)

    def test_random_blocks_orthonormal(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            m = rng.integers(2, 9)
            codes = rng.choice(8, size=m, replace=False)
            coords = morton_decode(np.sort(codes), 1)
            weights = rng.integers(1, 9, size=m).astype(float)
            U = block_gft(coords, weights)
            assert np.max(np.abs(U.T @ U - np.eye(m))) < 1e-10
            np.testing.assert_allclose(U[:, 0], np.sqrt(weights) / np.sqrt(weights.sum()), atol=1e-12)
            pivots = np.argmax(np.round(np.abs(U), 12), axis=0)
            assert np.all(U[pivots, np.arange(m)] > 0)

    def test_deterministic_on_symmetric_block(self):
        coords = morton_decode(np.arange(8), 1)
        a = block_gft(coords, np.ones(8))
        b = block_gft(coords, np.ones(8))
        assert np.array_equal(a, b)


class TestLevelTransform:
    def test_constant_block(self):
        cloud = VoxelCloud([[0, 0, 0], [1, 0, 0], [1, 1, 0]], np.zeros((3, 1)), 1)
        hier = build_hierarchy(cloud, 2)
        approx, detail = forward_level(hier, 0, np.full(3, 2.5))
        assert approx[0] == pytest.approx(2.5 * np.sqrt(3))
        assert np.max(np.abs(detail)) < 1e-12

    def test_singleton_blocks_are_identity(self):
        cloud = VoxelCloud([[0, 0, 0], [2, 0, 0], [0, 2, 2]], np.zeros((3, 1)), 2)
        hier = build_hierarchy(cloud, 2)
        a = np.array([1.0, -2.0, 5.0])
        approx, detail = forward_level(hier, 1, a)
        assert np.array_equal(approx, a)
        assert detail.shape == (0,)

    def test_random_block_round_trip(self):
        cloud = full_cube(1)
        hier = build_hierarchy(cloud, 2)
        a = np.random.default_rng(2).normal(size=8)
        approx, detail = forward_level(hier, 0, a)
        assert np.max(np.abs(inverse_level(hier, 0, approx, detail) - a)) < 1e-10

    def test_basis_vector_synthesis(self):
        cloud = VoxelCloud([[0, 0, 0], [1, 0, 0], [0, 1, 1]], np.zeros((3, 1)), 1)
        hier = build_hierarchy(cloud, 2)
        out = inverse_level(hier, 0, [0.0], [1.0, 0.0])
        U = block_gft(cloud.coords, np.ones(3))
        np.testing.assert_allclose(out, U[:, 1], atol=1e-12)

    def test_inverse_then_forward_identity(self):
        cloud = random_cloud(400, 5, seed=6)
        hier = build_hierarchy(cloud, 2)
        rng = np.random.default_rng(7)
        for level in range(hier.L):
            a = rng.normal(size=(hier.levels[level].n, 3))
            d = rng.normal(size=(hier.detail_count(level), 3))
            a2, d2 = forward_level(hier, level, inverse_level(hier, level, a, d))
            assert np.max(np.abs(a2 - a)) < 1e-10
            assert np.max(np.abs(d2 - d)) < 1e-10

    def test_layout_mismatch(self):
        hier = build_hierarchy(full_cube(1), 2)
        with pytest.raises(LayoutMismatchError):
            forward_level(hier, 0, np.zeros(7))

    def test_zero_pad_closed_form(self):
        rng = np.random.default_rng(9)
        for seed in range(100):
            cloud = random_cloud(int(rng.integers(2, 60)), 4, seed=seed)
            hier = build_hierarchy(cloud, 2)
            transform = RagftTransform(hier)
            level = int(rng.integers(0, hier.L))
            a = rng.normal(size=hier.levels[level].n)
            zeros = np.zeros(hier.detail_count(level))
            generic = transform.inverse_level(level, a, zeros)
            assert np.max(np.abs(generic - zero_pad_closed_form(hier, level, a))) < 1e-12

    def test_zero_pad_is_piecewise_constant(self):
        cloud = random_cloud(300, 5, seed=10)
        hier = build_hierarchy(cloud, [2, 4, 4])
        rng = np.random.default_rng(10)
        for level in range(hier.L):
            a = rng.normal(size=hier.levels[level].n)
            b = inverse_level(hier, level, a, np.zeros(hier.detail_count(level)))
            child = hier.levels[level + 1]
            normalized = b / np.sqrt(child.weights)
            for p in range(hier.levels[level].n):
                assert np.var(normalized[child.parent_of == p]) < 1e-20


class TestFullTransform:
    @pytest.mark.parametrize("n", [1, 2, 100, 10000])
    def test_perfect_reconstruction(self, n):
        cloud = random_cloud(n, 6, seed=n)
        hier = build_hierarchy(cloud, 2)
        layout = forward_full(hier, cloud.attrs)
        back = inverse_full(hier, layout)
        rms = np.sqrt(np.mean((back - cloud.attrs) ** 2) / np.mean(cloud.attrs ** 2))
        assert rms < 1e-9
        energy = np.sum(layout.values ** 2)
        assert energy == pytest.approx(np.sum(cloud.attrs ** 2), rel=1e-9)

    def test_mixed_block_sizes(self):
        cloud = random_cloud(800, 6, seed=3)
        hier = build_hierarchy(cloud, (16, 2, ...))
        layout = forward_full(hier, cloud.attrs)
        assert np.max(np.abs(inverse_full(hier, layout) - cloud.attrs)) < 1e-8

    def test_single_point_layout(self):
        cloud = VoxelCloud([[3, 1, 2]], [[10.0, 20.0, 30.0]], 2)
        hier = build_hierarchy(cloud, 2)
        layout = forward_full(hier, cloud.attrs)
        assert layout.values.tolist() == [[10.0, 20.0, 30.0]]
        assert layout.n_segments == 3

    def test_constant_attributes_have_no_detail(self):
        cloud = random_cloud(500, 6, seed=12)
        hier = build_hierarchy(cloud, 2)
        layout = forward_full(hier, np.full(500, 7.0))
        assert np.max(np.abs(layout.values[1:])) < 1e-9
        assert layout.approx[0] == pytest.approx(7.0 * np.sqrt(500))

    def test_segments(self):
        cloud = random_cloud(200, 5, seed=13)
        hier = build_hierarchy(cloud, 2)
        layout = forward_full(hier, cloud.attrs[:, 0])
        assert len(layout.approx) == hier.levels[0].n
        for level in range(hier.L):
            assert len(layout.detail(level)) == hier.detail_count(level)

    def test_level_transform_blocks(self):
        hier = build_hierarchy(random_cloud(100, 4, seed=14), 2)
        lt = LevelTransform(hier, hier.L - 1)
        for idx, U in lt.blocks:
            assert np.max(np.abs(U.T @ U - np.eye(len(idx)))) < 1e-10
