"""CIFAR-10 binary ingestion, patch sampling, and patch preprocessing.

Preprocessing is per-patch contrast normalization followed by ZCA
whitening, the standard recipe for single-layer patch encoders.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptySourceError,
    InvalidLabelError,
    InvalidPatchSizeError,
    MalformedFileError,
)

IMAGE_SIDE = 32
IMAGE_PIXELS = 3 * IMAGE_SIDE * IMAGE_SIDE  # 3072, plane order: R, G, B
RECORD_BYTES = 1 + IMAGE_PIXELS  # label byte + pixels
NUM_CLASSES = 10

DEFAULT_NORM_EPS = 10.0  # variance floor on the 0-255 pixel scale
DEFAULT_ZCA_EPS = 0.1


@dataclass
class LabeledImageSet:
    """Raw 32x32x3 images with class labels.

    Attributes:
        pixels: (N, 3072) uint8, CIFAR-10 plane order (1024 R, 1024 G,
            1024 B, each row-major 32x32).
        labels: (N,) uint8 class ids in [0, 9].
    """

    pixels: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if self.pixels.ndim != 2 or self.pixels.shape[1] != IMAGE_PIXELS:
            raise DimensionMismatchError(
                f"pixels must be (N, {IMAGE_PIXELS}), got {self.pixels.shape}"
            )
        if self.labels.shape != (self.pixels.shape[0],):
            raise DimensionMismatchError("labels must be one per image")
        if self.labels.size and self.labels.max() >= NUM_CLASSES:
            raise InvalidLabelError(f"label {int(self.labels.max())} out of range")

    def __len__(self):
        return self.pixels.shape[0]

    def subset(self, n: int) -> "LabeledImageSet":
        """First n images (n=0 means all)."""
        if n <= 0 or n >= len(self):
            return self
        return LabeledImageSet(self.pixels[:n].copy(), self.labels[:n].copy())

    def planes(self) -> np.ndarray:
        """View of pixels as (N, 3, 32, 32)."""
        return self.pixels.reshape(-1, 3, IMAGE_SIDE, IMAGE_SIDE)

    def to_bytes(self) -> bytes:
        """Serialize back to the binary batch layout, byte for byte."""
        out = np.empty((len(self), RECORD_BYTES), dtype=np.uint8)
        out[:, 0] = self.labels
        out[:, 1:] = self.pixels
        return out.tobytes()


def load_cifar10_batch(path) -> LabeledImageSet:
    """Read one CIFAR-10 binary batch.

    Each record is 3073 bytes: a label byte followed by 3072 pixel bytes
    in plane order.

    Raises:
        MalformedFileError: file size is not a positive multiple of 3073.
        InvalidLabelError: some label byte exceeds 9.
    """
    data = Path(path).read_bytes()
    if len(data) == 0 or len(data) % RECORD_BYTES != 0:
        raise MalformedFileError(
            f"{path}: {len(data)} bytes is not a positive multiple of {RECORD_BYTES}"
        )
    records = np.frombuffer(data, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = records[:, 0]
    if labels.max() >= NUM_CLASSES:
        raise InvalidLabelError(
            f"{path}: label byte {int(labels.max())} exceeds {NUM_CLASSES - 1}"
        )
    return LabeledImageSet(records[:, 1:].copy(), labels.copy())


def save_cifar10_batch(images: LabeledImageSet, path) -> None:
    Path(path).write_bytes(images.to_bytes())


def concat_image_sets(sets) -> LabeledImageSet:
    sets = list(sets)
    if not sets:
        raise EmptySourceError("no image sets to concatenate")
    return LabeledImageSet(
        np.concatenate([s.pixels for s in sets], axis=0),
        np.concatenate([s.labels for s in sets], axis=0),
    )


def sample_patches(images: LabeledImageSet, n: int, patch_size: int, seed: int) -> np.ndarray:
    """Draw n random patches, uniform over (image, corner) pairs.

    Uses a counter-based Philox stream so identical seeds give identical
    patches regardless of thread count. Pixel bytes are cast directly to
    float64 on the 0-255 scale.

    Returns:
        (n, 3 * patch_size**2) float64 matrix; rows are channel-major
        (all R values row-major, then G, then B).
    """
    p = int(patch_size)
    if p < 1 or p > IMAGE_SIDE:
        raise InvalidPatchSizeError(f"patch_size {p} outside [1, {IMAGE_SIDE}]")
    if n < 0:
        raise ValueError("n must be >= 0")
    dim = 3 * p * p
    if n == 0:
        return np.empty((0, dim), dtype=np.float64)
    if len(images) == 0:
        raise EmptySourceError("cannot sample patches from an empty image set")

    rng = np.random.Generator(np.random.Philox(key=seed))
    idx = rng.integers(0, len(images), size=n)
    corners = rng.integers(0, IMAGE_SIDE - p + 1, size=(n, 2))
    planes = images.planes()
    out = np.empty((n, dim), dtype=np.float64)
    for t in range(n):
        r, c = corners[t]
        out[t] = planes[idx[t], :, r : r + p, c : c + p].ravel()
    return out


def normalize_patches(patches: np.ndarray, norm_eps: float = DEFAULT_NORM_EPS) -> np.ndarray:
    """Per-patch contrast normalization: (x - mean(x)) / sqrt(var(x) + norm_eps).

    The variance floor keeps constant patches finite (they map to zero).
    """
    if norm_eps <= 0:
        raise ValueError("norm_eps must be > 0")
    x = np.asarray(patches, dtype=np.float64)
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    return (x - mean) / np.sqrt(var + norm_eps)


def fit_zca(patches: np.ndarray, eps: float):
    """Fit a ZCA whitening transform on already-normalized patches.

    Returns:
        (mean, whitener): mean is the column mean; whitener is
        E diag(1/sqrt(lambda + eps)) E^T from the eigendecomposition of
        the (population) covariance of the centered rows.
    """
    if eps <= 0:
        raise ValueError("zca_eps must be > 0")
    x = np.asarray(patches, dtype=np.float64)
    if x.shape[0] == 0:
        raise EmptySourceError("cannot fit ZCA on an empty patch set")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / x.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.maximum(eigvals, 0.0)
    whitener = (eigvecs / np.sqrt(eigvals + eps)) @ eigvecs.T
    return mean, whitener


@dataclass
class Preprocessor:
    """Fitted patch transform: contrast normalization followed by ZCA.

    Attributes:
        patch_size: patch side length p; rows are 3*p*p wide.
        norm_eps: variance floor of the per-patch normalization.
        zca_eps: eigenvalue regularizer of the whitener.
        zca_mean: (D,) mean of the normalized fitting patches.
        zca_whitener: (D, D) symmetric whitening matrix.
    """

    patch_size: int
    norm_eps: float
    zca_eps: float
    zca_mean: np.ndarray
    zca_whitener: np.ndarray

    @property
    def dim(self) -> int:
        return self.zca_mean.shape[0]

    def apply(self, patches: np.ndarray) -> np.ndarray:
        """Normalize then whiten patch rows. Pure; the input is untouched."""
        x = np.asarray(patches, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"patch dim {x.shape[1]} does not match preprocessor dim {self.dim}"
            )
        out = (normalize_patches(x, self.norm_eps) - self.zca_mean) @ self.zca_whitener
        return out[0] if single else out


def fit_preprocessor(
    patches: np.ndarray,
    norm_eps: float = DEFAULT_NORM_EPS,
    zca_eps: float = DEFAULT_ZCA_EPS,
) -> Preprocessor:
    """Fit the patch preprocessor on raw (unnormalized) patches.

    Raises:
        EmptySourceError: no patches.
    """
    x = np.asarray(patches, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptySourceError("cannot fit preprocessor on an empty patch set")
    dim = x.shape[1]
    p = round((dim / 3) ** 0.5)
    if 3 * p * p != dim:
        raise DimensionMismatchError(f"patch dim {dim} is not 3*p*p for integer p")
    normalized = normalize_patches(x, norm_eps)
    mean, whitener = fit_zca(normalized, zca_eps)
    return Preprocessor(
        patch_size=p,
        norm_eps=float(norm_eps),
        zca_eps=float(zca_eps),
        zca_mean=mean,
        zca_whitener=whitener,
    )


def apply_preprocessor(pp: Preprocessor, patches: np.ndarray) -> np.ndarray:
    return pp.apply(patches)
