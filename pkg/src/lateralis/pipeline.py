"""Dense per-image feature extraction and four-region average pooling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataset import IMAGE_SIDE, Preprocessor
from .errors import MapTooSmallError
from .inhibition import InhibitoryMatrix, inhibit_forward


def grid_side(patch_size: int, stride: int) -> int:
    """Patch positions per axis: 0, stride, ... <= 32 - patch_size."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return (IMAGE_SIDE - patch_size) // stride + 1


def image_patches(pixels: np.ndarray, patch_size: int, stride: int) -> np.ndarray:
    """All patches of one image on the stride grid, row-major positions.

    Rows are channel-major to match `sample_patches`.
    """
    p = patch_size
    side = grid_side(p, stride)
    img = np.asarray(pixels).reshape(3, IMAGE_SIDE, IMAGE_SIDE)
    windows = sliding_window_view(img, (p, p), axis=(1, 2))[:, ::stride, ::stride]
    patches = windows.transpose(1, 2, 0, 3, 4).reshape(side * side, 3 * p * p)
    return patches.astype(np.float64)


def image_activations(
    pixels: np.ndarray,
    pp: Preprocessor,
    encoder,
    inhibitory: InhibitoryMatrix | None,
    stride: int = 1,
):
    """Encodings for every patch position of one image.

    Returns:
        (z, h): each (positions, K); h is None without an inhibitory matrix.
    """
    patches = image_patches(pixels, pp.patch_size, stride)
    z = encoder.encode(pp.apply(patches))
    h = None if inhibitory is None else inhibit_forward(inhibitory, z)
    return z, h


def extract_feature_map(
    pixels: np.ndarray,
    pp: Preprocessor,
    encoder,
    inhibitory: InhibitoryMatrix | None = None,
    stride: int = 1,
) -> np.ndarray:
    """Encode every patch position; returns an (H', W', K) map.

    H' = W' = (32 - patch_size) // stride + 1. With an inhibitory matrix
    the map holds the suppressed rates h, otherwise the raw encodings z.
    """
    z, h = image_activations(pixels, pp, encoder, inhibitory, stride)
    side = grid_side(pp.patch_size, stride)
    out = z if h is None else h
    return out.reshape(side, side, -1)


def quadrant_pool(feature_map: np.ndarray) -> np.ndarray:
    """Average each channel over the four spatial quadrants.

    Rows split at floor(H'/2) and columns at floor(W'/2). Output is the
    concatenation (top-left, top-right, bottom-left, bottom-right), each
    block of length K, so 4K in total.

    Raises:
        MapTooSmallError: map smaller than 2x2.
    """
    fmap = np.asarray(feature_map, dtype=np.float64)
    h, w = fmap.shape[0], fmap.shape[1]
    if h < 2 or w < 2:
        raise MapTooSmallError(f"feature map {h}x{w} is smaller than 2x2")
    rs, cs = h // 2, w // 2
    quadrants = (
        fmap[:rs, :cs],
        fmap[:rs, cs:],
        fmap[rs:, :cs],
        fmap[rs:, cs:],
    )
    return np.concatenate([q.mean(axis=(0, 1)) for q in quadrants])


def pool_positions(activations: np.ndarray, side: int) -> np.ndarray:
    """Quadrant-pool a flat (side*side, K) activation block."""
    return quadrant_pool(activations.reshape(side, side, -1))


def extract_features(
    images,
    pp: Preprocessor,
    encoder,
    inhibitory: InhibitoryMatrix | None = None,
    stride: int = 1,
):
    """Pooled descriptors for a whole image set.

    Images are processed one at a time in index order, so the result does
    not depend on any outer scheduling.

    Returns:
        (features, labels): (N, 4K) float64 and (N,) int64.
    """
    n = len(images)
    k = encoder.n_features
    feats = np.empty((n, 4 * k))
    for i in range(n):
        fmap = extract_feature_map(images.pixels[i], pp, encoder, inhibitory, stride)
        feats[i] = quadrant_pool(fmap)
    return feats, images.labels.astype(np.int64)


@dataclass
class Standardizer:
    """Per-dimension mean/std transform fitted on training descriptors."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std


def fit_standardizer(features: np.ndarray, std_floor: float = 1e-8) -> Standardizer:
    x = np.asarray(features, dtype=np.float64)
    return Standardizer(mean=x.mean(axis=0), std=np.maximum(x.std(axis=0), std_floor))
