"""Encoding layers: triangle K-means and a KL-penalized sparse autoencoder.

Both map a preprocessed patch to a K-vector of nonnegative firing rates.
Training is seeded and bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, DivergenceError, InsufficientDataError

KL_CLAMP = 1e-8  # keeps the sparsity penalty gradient finite at saturation


def _as_batch(x, dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != dim:
        raise DimensionMismatchError(f"input dim {x.shape[1]} does not match encoder dim {dim}")
    return x, single


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Triangle K-means


@dataclass
class KMeansEncoder:
    """Centroid dictionary with triangle activation.

    Attributes:
        centroids: (K, D) centroid rows on whitened patches.
    """

    centroids: np.ndarray

    @property
    def n_features(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def encode(self, patches) -> np.ndarray:
        """Triangle activation: z_k = max(0, mu - d_k).

        d_k is the Euclidean distance to centroid k and mu the mean of
        the K distances, so at least one coordinate is always zero for
        K >= 2 unless all distances are equal.
        """
        x, single = _as_batch(patches, self.dim)
        d = _distances(x, self.centroids)
        z = np.maximum(d.mean(axis=1, keepdims=True) - d, 0.0)
        return z[0] if single else z


def _distances(x, centroids):
    sq = (
        np.einsum("nd,nd->n", x, x)[:, None]
        - 2.0 * (x @ centroids.T)
        + np.einsum("kd,kd->k", centroids, centroids)[None, :]
    )
    return np.sqrt(np.maximum(sq, 0.0))


def train_kmeans(patches: np.ndarray, k: int, iters: int = 10, seed: int = 0) -> KMeansEncoder:
    """Plain Lloyd iterations from seeded data-row initialization.

    Initial centroids are k distinct rows drawn without replacement; a
    cluster that empties is re-seeded from a random data row. Identical
    seeds give bit-identical centroids.

    Raises:
        InsufficientDataError: k exceeds the number of patch rows.
    """
    x = np.asarray(patches, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    n = x.shape[0]
    if n == 0 or k > n:
        raise InsufficientDataError(f"need at least k={k} rows, have {n}")
    rng = np.random.default_rng(seed)
    centroids = x[rng.choice(n, size=k, replace=False)].copy()
    dim = x.shape[1]
    for _ in range(iters):
        d = _distances(x, centroids)
        assign = np.argmin(d, axis=1)
        counts = np.bincount(assign, minlength=k)
        sums = np.empty((k, dim))
        for j in range(dim):
            sums[:, j] = np.bincount(assign, weights=x[:, j], minlength=k)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        for c in np.flatnonzero(~nonempty):
            centroids[c] = x[rng.integers(0, n)]
    return KMeansEncoder(centroids=centroids)


def encode_triangle(enc: KMeansEncoder, patch) -> np.ndarray:
    return enc.encode(patch)


def kmeans_objective(enc: KMeansEncoder, patches: np.ndarray) -> float:
    """Sum of squared distances to assigned centroids."""
    x = np.asarray(patches, dtype=np.float64)
    d = _distances(x, enc.centroids)
    return float((d.min(axis=1) ** 2).sum())


# ---------------------------------------------------------------------------
# Sparse autoencoder


@dataclass
class AutoencoderConfig:
    rho: float = 0.05  # target mean activation
    beta: float = 3.0  # sparsity penalty weight
    weight_decay: float = 3e-3
    learning_rate: float = 0.01
    epochs: int = 20
    batch_size: int = 100
    seed: int = 0


@dataclass
class SparseAutoencoder:
    """Untied logistic autoencoder with a KL sparsity penalty.

    Attributes:
        w_enc: (K, D) encoding weights.
        b_enc: (K,) encoding biases.
        w_dec: (D, K) decoding weights.
        b_dec: (D,) decoding biases.
        rho: sparsity target in (0, 1).
        beta: sparsity penalty weight.
        weight_decay: L2 penalty on both weight matrices.
    """

    w_enc: np.ndarray
    b_enc: np.ndarray
    w_dec: np.ndarray
    b_dec: np.ndarray
    rho: float = 0.05
    beta: float = 3.0
    weight_decay: float = 3e-3

    @property
    def n_features(self) -> int:
        return self.w_enc.shape[0]

    @property
    def dim(self) -> int:
        return self.w_enc.shape[1]

    def encode(self, patches) -> np.ndarray:
        """Hidden firing rates: logistic(W_enc x + b_enc), in (0, 1)."""
        x, single = _as_batch(patches, self.dim)
        z = _sigmoid(x @ self.w_enc.T + self.b_enc)
        return z[0] if single else z

    def reconstruct(self, patches) -> np.ndarray:
        x, single = _as_batch(patches, self.dim)
        out = self.encode(x) @ self.w_dec.T + self.b_dec
        return out[0] if single else out


def encode_ae(ae: SparseAutoencoder, patch) -> np.ndarray:
    return ae.encode(patch)


def init_autoencoder(k: int, dim: int, config: AutoencoderConfig) -> SparseAutoencoder:
    """Seeded initialization: weights uniform in +-sqrt(6/(K+D)), zero biases."""
    rng = np.random.default_rng(config.seed)
    return _init_autoencoder(k, dim, config, rng)


def _init_autoencoder(k, dim, config, rng):
    bound = np.sqrt(6.0 / (k + dim))
    return SparseAutoencoder(
        w_enc=rng.uniform(-bound, bound, size=(k, dim)),
        b_enc=np.zeros(k),
        w_dec=rng.uniform(-bound, bound, size=(dim, k)),
        b_dec=np.zeros(dim),
        rho=config.rho,
        beta=config.beta,
        weight_decay=config.weight_decay,
    )


def ae_loss_grad(ae: SparseAutoencoder, batch: np.ndarray):
    """Loss and exact gradient on one batch.

    loss = mean_n ||x_n - xhat_n||^2
         + weight_decay/2 * (||W_enc||^2 + ||W_dec||^2)
         + beta * sum_i KL(rho || rho_hat_i)

    rho_hat_i is the batch-mean activation of hidden unit i, clamped to
    [1e-8, 1 - 1e-8] before the KL term.

    Returns:
        (loss, grads) with grads keyed like the parameter fields.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be a nonempty 2-d array")
    if x.shape[1] != ae.dim:
        raise DimensionMismatchError(f"batch dim {x.shape[1]} != encoder dim {ae.dim}")
    n = x.shape[0]
    rho, beta, decay = ae.rho, ae.beta, ae.weight_decay

    a = _sigmoid(x @ ae.w_enc.T + ae.b_enc)  # (n, K)
    xhat = a @ ae.w_dec.T + ae.b_dec  # (n, D)
    resid = xhat - x

    rho_hat = np.clip(a.mean(axis=0), KL_CLAMP, 1.0 - KL_CLAMP)
    kl = rho * np.log(rho / rho_hat) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - rho_hat))
    loss = (
        float(np.einsum("nd,nd->", resid, resid)) / n
        + 0.5 * decay * (float((ae.w_enc**2).sum()) + float((ae.w_dec**2).sum()))
        + beta * float(kl.sum())
    )

    g_out = (2.0 / n) * resid
    g_w_dec = g_out.T @ a + decay * ae.w_dec
    g_b_dec = g_out.sum(axis=0)

    g_a = g_out @ ae.w_dec
    g_a += (beta / n) * (-rho / rho_hat + (1.0 - rho) / (1.0 - rho_hat))
    g_pre = g_a * a * (1.0 - a)
    g_w_enc = g_pre.T @ x + decay * ae.w_enc
    g_b_enc = g_pre.sum(axis=0)

    grads = {"w_enc": g_w_enc, "b_enc": g_b_enc, "w_dec": g_w_dec, "b_dec": g_b_dec}
    return loss, grads


def train_sparse_autoencoder(
    patches: np.ndarray, k: int, config: AutoencoderConfig
) -> SparseAutoencoder:
    """Minibatch gradient descent on the penalized reconstruction loss.

    One generator drives initialization and the per-epoch shuffles, so a
    run with fewer epochs is an exact prefix of a longer run with the
    same seed.

    Raises:
        DivergenceError: a minibatch loss went non-finite (names the epoch).
    """
    x = np.asarray(patches, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("patches must be a nonempty 2-d array")
    rng = np.random.default_rng(config.seed)
    ae = _init_autoencoder(k, x.shape[1], config, rng)
    n = x.shape[0]
    bs = max(1, min(config.batch_size, n))
    lr = config.learning_rate
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            batch = x[order[start : start + bs]]
            loss, grads = ae_loss_grad(ae, batch)
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            ae.w_enc -= lr * grads["w_enc"]
            ae.b_enc -= lr * grads["b_enc"]
            ae.w_dec -= lr * grads["w_dec"]
            ae.b_dec -= lr * grads["b_dec"]
    return ae
