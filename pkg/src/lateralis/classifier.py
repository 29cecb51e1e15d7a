"""L2-regularized softmax regression with stratified cross-validation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, DivergenceError, FoldInfeasibleError

DEFAULT_LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 1e-1)


@dataclass
class SoftmaxConfig:
    learning_rate: float = 0.2
    epochs: int = 150
    batch_size: int = 200
    seed: int = 0


@dataclass
class SoftmaxModel:
    """Linear softmax classifier.

    Attributes:
        weights: (C, F+1); the last column is the bias and is exempt from
            the L2 penalty.
        l2: regularization strength.
    """

    weights: np.ndarray
    l2: float = 0.0

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1] - 1


def _augment(x):
    x = np.asarray(x, dtype=np.float64)
    return np.hstack([x, np.ones((x.shape[0], 1))])


def _check_labels(y, n_classes):
    y = np.asarray(y)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return y.astype(np.int64)


def softmax_loss_grad(model: SoftmaxModel, x: np.ndarray, y):
    """Mean cross-entropy with log-sum-exp stabilization, plus L2 on weights.

    Returns:
        (loss, grad) with grad shaped like model.weights.
    """
    xa = _augment(x)
    if xa.shape[1] != model.weights.shape[1]:
        raise DimensionMismatchError(
            f"feature dim {xa.shape[1] - 1} != model dim {model.n_features}"
        )
    y = _check_labels(y, model.n_classes)
    n = xa.shape[0]
    logits = xa @ model.weights.T
    logits -= logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(logits).sum(axis=1, keepdims=True))
    log_probs = logits - log_z
    w_nobias = model.weights[:, :-1]
    loss = -float(log_probs[np.arange(n), y].mean()) + 0.5 * model.l2 * float(
        (w_nobias**2).sum()
    )
    probs = np.exp(log_probs)
    probs[np.arange(n), y] -= 1.0
    grad = probs.T @ xa / n
    grad[:, :-1] += model.l2 * w_nobias
    return loss, grad


def train_softmax(
    x: np.ndarray, y, l2: float, config: SoftmaxConfig, n_classes: int = 10
) -> SoftmaxModel:
    """Seeded minibatch gradient descent from zero initialization.

    Raises:
        DivergenceError: non-finite loss, naming the epoch.
    """
    x = np.asarray(x, dtype=np.float64)
    y = _check_labels(y, n_classes)
    model = SoftmaxModel(weights=np.zeros((n_classes, x.shape[1] + 1)), l2=float(l2))
    n = x.shape[0]
    bs = max(1, min(config.batch_size, n))
    rng = np.random.default_rng(config.seed)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            loss, grad = softmax_loss_grad(model, x[idx], y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            model.weights -= config.learning_rate * grad
    return model


def predict(model: SoftmaxModel, x: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties break toward the smallest class index."""
    logits = _augment(x) @ model.weights.T
    return np.argmax(logits, axis=1)


def accuracy(model: SoftmaxModel, x: np.ndarray, y) -> float:
    y = _check_labels(y, model.n_classes)
    return float((predict(model, x) == y).mean())


def stratified_folds(y, folds: int, seed: int) -> np.ndarray:
    """Seeded stratified fold ids: per class, shuffle then deal round-robin.

    Keeps every fold's class proportions within one sample of the global
    proportions.

    Raises:
        FoldInfeasibleError: some class has fewer samples than folds.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.shape[0], dtype=np.int64)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if idx.size < folds:
            raise FoldInfeasibleError(
                f"class {int(cls)} has {idx.size} samples, fewer than {folds} folds"
            )
        rng.shuffle(idx)
        fold_of[idx] = np.arange(idx.size) % folds
    return fold_of


@dataclass
class CrossValResult:
    best_lambda: float
    fold_accuracies: dict
    model: SoftmaxModel


def cross_validate(
    x: np.ndarray,
    y,
    lambda_grid,
    folds: int,
    config: SoftmaxConfig,
    seed: int,
    n_classes: int = 10,
) -> CrossValResult:
    """Pick the L2 strength with the best mean held-out accuracy.

    The grid is deduplicated; ties go to the smallest lambda. The returned
    model is retrained on all rows at the winning strength.
    """
    grid = sorted(set(float(l) for l in lambda_grid))
    if not grid:
        raise ValueError("lambda_grid must be nonempty")
    x = np.asarray(x, dtype=np.float64)
    y = _check_labels(y, n_classes)
    fold_of = stratified_folds(y, folds, seed)
    fold_accuracies = {}
    best_lambda, best_mean = None, -1.0
    for l2 in grid:
        accs = []
        for f in range(folds):
            held = fold_of == f
            model = train_softmax(x[~held], y[~held], l2, config, n_classes)
            accs.append(accuracy(model, x[held], y[held]))
        fold_accuracies[l2] = accs
        mean_acc = float(np.mean(accs))
        if mean_acc > best_mean:
            best_lambda, best_mean = l2, mean_acc
    final = train_softmax(x, y, best_lambda, config, n_classes)
    return CrossValResult(best_lambda=best_lambda, fold_accuracies=fold_accuracies, model=final)
