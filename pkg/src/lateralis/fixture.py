"""Deterministic synthetic 10-class image corpus in the CIFAR-10 binary layout.

Each class is a colored triangle-wave grating with a class-specific hue,
orientation, and spatial frequency, over a random linear brightness ramp,
plus pixel noise. The construction uses only IEEE arithmetic (no
transcendentals), so byte output is reproducible across platforms; the
Philox counter RNG keeps it reproducible across runs.

Run ``python -m lateralis.fixture --out DIR`` to materialize train/test
batch files.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .dataset import IMAGE_SIDE, NUM_CLASSES, LabeledImageSet, save_cifar10_batch

DEFAULT_SEED = 7
DEFAULT_TRAIN = 500
DEFAULT_TEST = 100

# Class hue, one row per label, channel weights in [0, 1].
_PALETTE = np.array(
    [
        [1.0, 0.2, 0.2],
        [0.2, 1.0, 0.2],
        [0.2, 0.2, 1.0],
        [1.0, 1.0, 0.2],
        [1.0, 0.2, 1.0],
        [0.2, 1.0, 1.0],
        [1.0, 0.6, 0.2],
        [0.6, 0.2, 1.0],
        [0.2, 1.0, 0.6],
        [0.9, 0.9, 0.9],
    ]
)

# Ten distinct grating orientations as integer direction vectors (unique
# modulo 180 degrees), normalized at use. Rational inputs keep this exact.
_DIRECTIONS = np.array(
    [
        [4, 0],
        [4, 1],
        [3, 2],
        [2, 3],
        [1, 4],
        [0, 4],
        [-1, 4],
        [-2, 3],
        [-3, 2],
        [-4, 1],
    ],
    dtype=np.float64,
)

# Cycles across the image, per class.
_FREQS = 2.0 + np.arange(NUM_CLASSES) % 3


def _triangle_wave(t: np.ndarray) -> np.ndarray:
    """Periodic triangle wave with period 1 mapping onto [-1, 1]."""
    frac = np.mod(t, 1.0)
    return 4.0 * np.abs(frac - 0.5) - 1.0


def _class_batch(label: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """n images of one class as (n, 3, 32, 32) uint8 planes."""
    side = IMAGE_SIDE
    yy, xx = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    d = _DIRECTIONS[label]
    d = d / np.sqrt(d @ d)
    proj = (xx * d[0] + yy * d[1]) / side  # (32, 32)

    phase = rng.uniform(0.0, 1.0, size=(n, 1, 1))
    amp = rng.uniform(40.0, 70.0, size=(n, 1, 1))
    grating = amp * _triangle_wave(_FREQS[label] * proj + phase)

    gdir = rng.uniform(-1.0, 1.0, size=(n, 2, 1, 1))
    center = (side - 1) / 2.0
    ramp = 20.0 * (
        gdir[:, 0] * (xx - center) / side + gdir[:, 1] * (yy - center) / side
    )

    base = 128.0 + grating + ramp  # (n, 32, 32)
    planes = base[:, None, :, :] * _PALETTE[label][None, :, None, None]
    planes = planes + rng.normal(0.0, 8.0, size=(n, 3, side, side))
    return np.clip(np.rint(planes), 0, 255).astype(np.uint8)


def make_image_set(n_images: int, seed: int) -> LabeledImageSet:
    """Balanced labeled corpus of n_images, shuffled into mixed label order.

    Class counts differ by at most one when n_images is not a multiple of
    ten. The same (n_images, seed) pair always yields identical bytes.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    counts = np.full(NUM_CLASSES, n_images // NUM_CLASSES)
    counts[: n_images % NUM_CLASSES] += 1

    chunks = []
    labels = []
    for label in range(NUM_CLASSES):
        if counts[label] == 0:
            continue
        chunks.append(_class_batch(label, int(counts[label]), rng))
        labels.append(np.full(int(counts[label]), label, dtype=np.uint8))
    planes = np.concatenate(chunks)
    label_arr = np.concatenate(labels)

    order = rng.permutation(n_images)
    pixels = planes.reshape(n_images, -1)[order]
    return LabeledImageSet(pixels=pixels, labels=label_arr[order])


def write_corpus(
    out_dir,
    n_train: int = DEFAULT_TRAIN,
    n_test: int = DEFAULT_TEST,
    seed: int = DEFAULT_SEED,
):
    """Writes train.bin and test.bin under out_dir; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_seed, test_seed = np.random.SeedSequence(seed).spawn(2)
    train = make_image_set(n_train, train_seed)
    test = make_image_set(n_test, test_seed)
    train_path = out / "train.bin"
    test_path = out / "test.bin"
    save_cifar10_batch(train, train_path)
    save_cifar10_batch(test, test_path)
    return train_path, test_path


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="python -m lateralis.fixture",
        description="Generate a synthetic labeled image corpus in CIFAR-10 "
        "binary layout.",
    )
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--n-train", type=int, default=DEFAULT_TRAIN)
    ap.add_argument("--n-test", type=int, default=DEFAULT_TEST)
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    args = ap.parse_args(argv)
    train_path, test_path = write_corpus(
        args.out, args.n_train, args.n_test, args.seed
    )
    print(train_path)
    print(test_path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
