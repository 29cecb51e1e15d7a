import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lateralis import dataset, pipeline
from lateralis.encoder import KMeansEncoder
from lateralis.errors import MapTooSmallError
from lateralis.inhibition import init_inhibitory
from lateralis.pipeline import (
    extract_feature_map,
    extract_features,
    fit_standardizer,
    grid_side,
    image_patches,
    quadrant_pool,
)

from oracles import scalar_quadrant_pool
from test_dataset import random_image_set


def fitted_preprocessor(rng, p=6):
    raw = rng.uniform(0, 255, size=(500, 3 * p * p))
    return dataset.fit_preprocessor(raw, 10.0, 0.1)


def random_encoder(rng, k, d):
    return KMeansEncoder(centroids=rng.normal(size=(k, d)))


class TestGrid:
    def test_dense_grid(self):
        assert grid_side(6, 1) == 27

    def test_strided_grid(self):
        assert grid_side(6, 13) == 3  # positions 0, 13, 26

    def test_patch_grid_positions(self, rng):
        imgs = random_image_set(rng, 1)
        p, stride = 6, 13
        patches = image_patches(imgs.pixels[0], p, stride)
        assert patches.shape == (9, 108)
        planes = imgs.planes()[0]
        # last patch: corner (26, 26)
        expected = planes[:, 26 : 26 + p, 26 : 26 + p].ravel().astype(np.float64)
        npt.assert_array_equal(patches[-1], expected)

    def test_patch_rows_are_channel_major(self, rng):
        imgs = random_image_set(rng, 1)
        patches = image_patches(imgs.pixels[0], 5, 1)
        planes = imgs.planes()[0]
        # row index r*28 + c for corner (r, c) on the 28-wide grid
        r, c = 3, 11
        expected = planes[:, r : r + 5, c : c + 5].ravel().astype(np.float64)
        npt.assert_array_equal(patches[r * 28 + c], expected)


class TestFeatureMap:
    def test_dense_map_shape(self, rng):
        pp = fitted_preprocessor(rng)
        enc = random_encoder(rng, 4, pp.dim)
        imgs = random_image_set(rng, 1)
        fmap = extract_feature_map(imgs.pixels[0], pp, enc, None, stride=1)
        assert fmap.shape == (27, 27, 4)

    def test_strided_map_shape(self, rng):
        pp = fitted_preprocessor(rng)
        enc = random_encoder(rng, 4, pp.dim)
        imgs = random_image_set(rng, 1)
        assert extract_feature_map(imgs.pixels[0], pp, enc, None, 13).shape == (3, 3, 4)

    def test_uniform_inhibition_equals_mean_subtraction(self, rng):
        pp = fitted_preprocessor(rng)
        enc = random_encoder(rng, 5, pp.dim)
        imgs = random_image_set(rng, 1)
        base = extract_feature_map(imgs.pixels[0], pp, enc, None, stride=4)
        inh = extract_feature_map(
            imgs.pixels[0], pp, enc, init_inhibitory(5), stride=4
        )
        z = base.reshape(-1, 5)
        mean_others = (z.sum(axis=1, keepdims=True) - z) / 4.0
        expected = np.maximum(z - mean_others, 0.0).reshape(inh.shape)
        npt.assert_allclose(inh, expected, atol=1e-12)


class TestQuadrantPool:
    def test_two_by_two_cells(self):
        fmap = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1)
        npt.assert_array_equal(quadrant_pool(fmap), [1.0, 2.0, 3.0, 4.0])

    def test_constant_map(self):
        fmap = np.full((5, 7, 3), 2.5)
        npt.assert_array_equal(quadrant_pool(fmap), np.full(12, 2.5))

    def test_odd_split_sizes_via_area_weights(self, rng):
        # 27x27 splits into 13x13, 13x14, 14x13, 14x14 blocks; the pooled
        # means weighted by those areas must reassemble the full sum
        fmap = rng.normal(size=(27, 27, 2))
        pooled = quadrant_pool(fmap)
        areas = np.array([13 * 13, 13 * 14, 14 * 13, 14 * 14])
        total = (pooled.reshape(4, 2) * areas[:, None]).sum(axis=0)
        npt.assert_allclose(total, fmap.sum(axis=(0, 1)), rtol=1e-9)

    def test_matches_scalar_oracle(self, rng):
        for h, w, k in [(2, 2, 1), (3, 5, 2), (6, 4, 3)]:
            fmap = rng.normal(size=(h, w, k))
            npt.assert_allclose(
                quadrant_pool(fmap), scalar_quadrant_pool(fmap), atol=1e-12
            )

    def test_channel_permutation_equivariance(self, rng):
        fmap = rng.normal(size=(5, 5, 4))
        perm = np.array([2, 0, 3, 1])
        pooled = quadrant_pool(fmap).reshape(4, 4)
        permuted = quadrant_pool(fmap[:, :, perm]).reshape(4, 4)
        # fancy indexing changes the memory layout and with it the
        # summation order, so exact equality is not on the table
        npt.assert_allclose(permuted, pooled[:, perm], rtol=0, atol=1e-12)

    @pytest.mark.parametrize("shape", [(1, 5, 2), (4, 1, 2)])
    def test_too_small(self, shape):
        with pytest.raises(MapTooSmallError):
            quadrant_pool(np.zeros(shape))


class TestExtractFeatures:
    def test_shapes_and_labels(self, rng):
        pp = fitted_preprocessor(rng)
        enc = random_encoder(rng, 6, pp.dim)
        imgs = random_image_set(rng, 9)
        feats, labels = extract_features(imgs, pp, enc, None, stride=4)
        assert feats.shape == (9, 24)
        assert labels.dtype == np.int64
        npt.assert_array_equal(labels, imgs.labels)

    def test_inhibited_features_bounded_by_baseline(self, rng):
        pp = fitted_preprocessor(rng)
        enc = random_encoder(rng, 6, pp.dim)
        imgs = random_image_set(rng, 4)
        base, _ = extract_features(imgs, pp, enc, None, stride=4)
        inh, _ = extract_features(imgs, pp, enc, init_inhibitory(6), stride=4)
        assert (inh <= base + 1e-12).all()
        assert (inh >= 0).all()


class TestStandardizer:
    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_standardized_moments(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(3.0, 2.0, size=(200, 6))
        std = fit_standardizer(x)
        out = std.apply(x)
        npt.assert_allclose(out.mean(axis=0), 0.0, atol=1e-10)
        npt.assert_allclose(out.std(axis=0), 1.0, rtol=1e-9)

    def test_constant_column_floored(self):
        x = np.ones((30, 2))
        x[:, 1] = np.arange(30)
        std = fit_standardizer(x)
        out = std.apply(x)
        assert np.isfinite(out).all()
        npt.assert_array_equal(out[:, 0], 0.0)
