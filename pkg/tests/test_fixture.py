import collections
import hashlib

import numpy as np
import pytest

from lateralis import fixture
from lateralis.dataset import NUM_CLASSES, RECORD_BYTES, load_cifar10_batch

# Regression digests for the default 500/100 corpus at seed 7. The
# generator avoids transcendental functions precisely so these stay
# stable across platforms; a change here means the corpus changed.
TRAIN_SHA = "ff487676a2d960458b3698b56c4df3d4ecee0273f477cb03e754653de6cfce63"
TEST_SHA = "60c68281691b61162f8fb91a95269eba7b9a234f34dcc6fbf9772d070551153f"


class TestDeterminism:
    def test_same_arguments_same_bytes(self, tmp_path):
        a = fixture.write_corpus(tmp_path / "a", 40, 10, seed=11)
        b = fixture.write_corpus(tmp_path / "b", 40, 10, seed=11)
        assert a[0].read_bytes() == b[0].read_bytes()
        assert a[1].read_bytes() == b[1].read_bytes()

    def test_seed_changes_bytes(self, tmp_path):
        a = fixture.write_corpus(tmp_path / "a", 40, 10, seed=11)
        b = fixture.write_corpus(tmp_path / "b", 40, 10, seed=12)
        assert a[0].read_bytes() != b[0].read_bytes()

    def test_train_and_test_draw_different_streams(self, desk_corpus):
        train = desk_corpus["train"].read_bytes()
        test = desk_corpus["test"].read_bytes()
        assert train[: len(test)] != test

    def test_pinned_corpus_digests(self, desk_corpus):
        assert (
            hashlib.sha256(desk_corpus["train"].read_bytes()).hexdigest()
            == TRAIN_SHA
        )
        assert (
            hashlib.sha256(desk_corpus["test"].read_bytes()).hexdigest()
            == TEST_SHA
        )


class TestLayout:
    def test_file_size_is_record_multiple(self, desk_corpus):
        assert desk_corpus["train"].stat().st_size == 500 * RECORD_BYTES
        assert desk_corpus["test"].stat().st_size == 100 * RECORD_BYTES

    def test_loads_as_labeled_batch(self, desk_corpus):
        images = load_cifar10_batch(desk_corpus["train"])
        assert len(images) == 500
        assert images.pixels.dtype == np.uint8
        assert set(np.unique(images.labels)) <= set(range(NUM_CLASSES))


class TestBalance:
    @pytest.mark.parametrize("n", [100, 105, 37, 10])
    def test_class_counts_within_one(self, n):
        images = fixture.make_image_set(n, seed=2)
        counts = collections.Counter(int(v) for v in images.labels)
        assert sum(counts.values()) == n
        assert max(counts.values()) - min(counts.values()) <= 1
        # the remainder goes to the lowest labels
        if n % NUM_CLASSES:
            big = {label for label, c in counts.items() if c == max(counts.values())}
            assert big == set(range(n % NUM_CLASSES))

    def test_labels_are_shuffled(self):
        labels = fixture.make_image_set(200, seed=2).labels
        assert not np.all(labels[:-1] <= labels[1:])


class TestSeparability:
    def test_class_hues_are_distinct(self, desk_corpus):
        """Per-class mean channel intensity separates every pair of classes."""
        images = load_cifar10_batch(desk_corpus["train"])
        planes = images.planes()  # (n, 3, 32, 32)
        means = np.zeros((NUM_CLASSES, 3))
        for label in range(NUM_CLASSES):
            means[label] = planes[images.labels == label].mean(axis=(0, 2, 3))
        gaps = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=-1)
        gaps[np.diag_indices(NUM_CLASSES)] = np.inf
        assert gaps.min() > 5.0

    def test_images_are_not_flat(self, desk_corpus):
        images = load_cifar10_batch(desk_corpus["test"])
        per_image_std = images.pixels.astype(np.float64).std(axis=1)
        assert per_image_std.min() > 10.0
