import numpy as np
import pytest

from lateralis import fixture


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    """The 500-train / 100-test synthetic corpus, written once per session."""
    root = tmp_path_factory.mktemp("desk")
    train, test = fixture.write_corpus(root, 500, 100, seed=7)
    return {"dir": root, "train": train, "test": test}


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """A small corpus for fast pipeline-level tests."""
    root = tmp_path_factory.mktemp("mini")
    train, test = fixture.write_corpus(root, 150, 50, seed=3)
    return {"dir": root, "train": train, "test": test}


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def make_config_file(path, train, test, out, **overrides):
    """Write a key = value config for the given corpus; returns the path."""
    lines = {
        "train_data": str(train),
        "test_data": str(test),
        "out_dir": str(out),
        "n_patches": 3000,
        "n_features": 12,
        "kmeans_iters": 4,
        "hebbian_epochs": 2,
        "neighborhood": 4,
        "stride": 4,
        "lambda_grid": "1e-3,1e-2",
        "folds": 3,
        "clf_epochs": 40,
        "seed": 5,
    }
    lines.update(overrides)
    text = "\n".join(f"{k} = {v}" for k, v in lines.items() if v is not None)
    path.write_text(text + "\n")
    return path
