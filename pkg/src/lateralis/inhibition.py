"""Feed-forward lateral inhibition with normalized Hebbian learning.

Each encoding neuron's firing rate z_i is suppressed by a learned linear
combination of the other rates and clamped at zero:

    h_i = max(0, z_i - sum_{j != i} I[j, i] * z_j)

The lateral weights are nonnegative, carry no self-connections, and every
neuron's incoming weights sum to one. They are trained online: after each
sample the weight of link j -> i grows by alpha * z_i * h_j and the
column is renormalized back to unit sum. Weak links can be pruned so each
neuron ends up inhibited only by a small neighborhood of donors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    InsufficientSampleError,
    InvalidNeighborhoodError,
    InvalidSizeError,
)

HEBBIAN_VARIANTS = ("literal", "transposed")
PRUNE_MODES = ("fixed", "threshold")


@dataclass
class InhibitoryMatrix:
    """Lateral weights and the surviving-link mask.

    Attributes:
        weights: (K, K) nonnegative float64; weights[j, i] is the strength
            of the link from encoding neuron j to inhibitory neuron i. The
            diagonal is zero and each column with surviving links sums to 1.
        mask: (K, K) bool; True marks surviving links. Pruned entries are
            exactly zero in `weights`.
    """

    weights: np.ndarray
    mask: np.ndarray

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "InhibitoryMatrix":
        return InhibitoryMatrix(self.weights.copy(), self.mask.copy())


@dataclass
class HebbianConfig:
    """Training schedule for the inhibitory layer.

    Attributes:
        alpha: Hebbian learning rate, > 0.
        epochs: full passes over the sample stream.
        neighborhood_size: donors kept per neuron when pruning (None keeps
            all links).
        prune_after_epoch: epoch after which the one-shot prune runs
            (fixed mode only).
        seed: shuffle seed.
        variant: "literal" updates link j->i with alpha*z_i*h_j as printed;
            "transposed" uses alpha*z_j*h_i instead.
        prune_mode: "fixed" prunes once to neighborhood_size; "threshold"
            drops links below threshold_frac of the column mean after
            every epoch.
        threshold_frac: fraction of the column-mean weight below which a
            link is dropped in threshold mode.
    """

    alpha: float = 0.05
    epochs: int = 5
    neighborhood_size: int | None = 40
    prune_after_epoch: int = 2
    seed: int = 0
    variant: str = "literal"
    prune_mode: str = "fixed"
    threshold_frac: float = 0.1

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.variant not in HEBBIAN_VARIANTS:
            raise ValueError(f"variant must be one of {HEBBIAN_VARIANTS}")
        if self.prune_mode not in PRUNE_MODES:
            raise ValueError(f"prune_mode must be one of {PRUNE_MODES}")


def init_inhibitory(k: int) -> InhibitoryMatrix:
    """Uniform initialization: every off-diagonal weight is 1/(K-1).

    Columns then sum to one, and the layer reproduces mean-of-others
    subtraction (the triangle-K-means-like regime). K = 1 yields an empty
    weight matrix, so the layer reduces to a ReLU.

    Raises:
        InvalidSizeError: k < 1.
    """
    if k < 1:
        raise InvalidSizeError(f"k must be >= 1, got {k}")
    mask = ~np.eye(k, dtype=bool)
    if k == 1:
        return InhibitoryMatrix(np.zeros((1, 1)), mask)
    weights = np.full((k, k), 1.0 / (k - 1))
    np.fill_diagonal(weights, 0.0)
    return InhibitoryMatrix(weights, mask)


def inhibit_forward(mat: InhibitoryMatrix, z) -> np.ndarray:
    """Suppress each rate by the weighted sum of the others and clamp at 0.

    Accepts a single K-vector or an (N, K) batch. Pruned links are exact
    zeros in the weight matrix, so the dense product sums over surviving
    links only.
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    batch = np.atleast_2d(z)
    if batch.shape[1] != mat.k:
        raise DimensionMismatchError(f"z has length {batch.shape[1]}, expected {mat.k}")
    if not np.isfinite(batch).all():
        raise ValueError("z must be finite")
    h = np.maximum(batch - batch @ mat.weights, 0.0)
    return h[0] if single else h


def _hebbian_step(weights, mask, z, h, alpha, variant):
    """In-place normalized Hebbian update shared by the pure op and trainer."""
    if variant == "literal":
        update = np.outer(h, z)  # update[j, i] = h_j * z_i
    else:
        update = np.outer(z, h)  # update[j, i] = z_j * h_i
    raw = weights + alpha * update
    raw *= mask
    colsum = raw.sum(axis=0)
    stuck = colsum <= 0.0
    raw[:, ~stuck] /= colsum[~stuck]
    if stuck.any():
        raw[:, stuck] = weights[:, stuck]
    weights[...] = raw


def hebbian_update(mat: InhibitoryMatrix, z, h, alpha: float, variant: str = "literal") -> InhibitoryMatrix:
    """One normalized Hebbian update; returns a new matrix.

    Two-phase: grow every surviving link j -> i by alpha * z_i * h_j,
    then divide each column by its new sum so incoming weights sum to one
    again. A column whose raw sum is zero is left unchanged. Pruned links
    stay exactly zero.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if variant not in HEBBIAN_VARIANTS:
        raise ValueError(f"variant must be one of {HEBBIAN_VARIANTS}")
    z = np.asarray(z, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if z.shape != (mat.k,) or h.shape != (mat.k,):
        raise DimensionMismatchError("z and h must both have length K")
    out = mat.copy()
    _hebbian_step(out.weights, out.mask, z, h, alpha, variant)
    return out


def prune_to_neighborhood(mat: InhibitoryMatrix, m: int) -> InhibitoryMatrix:
    """Keep the m strongest incoming links per neuron; renormalize survivors.

    Ties go to the smaller donor index. Columns already at or below m
    surviving links are untouched.

    Raises:
        InvalidNeighborhoodError: m outside [1, K-1].
    """
    if m < 1 or m > mat.k - 1:
        raise InvalidNeighborhoodError(f"m={m} outside [1, {mat.k - 1}]")
    out = mat.copy()
    weights, mask = out.weights, out.mask
    for i in range(mat.k):
        donors = np.flatnonzero(mask[:, i])
        if donors.size <= m:
            continue
        order = np.argsort(-weights[donors, i], kind="stable")
        dropped = donors[order[m:]]
        weights[dropped, i] = 0.0
        mask[dropped, i] = False
        total = weights[:, i].sum()
        if total > 0:
            weights[:, i] /= total
    return out


def _prune_weak_links(weights, mask, frac):
    """Drop surviving links below frac * column mean; renormalize. In place."""
    for i in range(weights.shape[0]):
        donors = np.flatnonzero(mask[:, i])
        if donors.size <= 1:
            continue
        col = weights[donors, i]
        weak = col < frac * col.mean()
        if not weak.any():
            continue
        dropped = donors[weak]
        weights[dropped, i] = 0.0
        mask[dropped, i] = False
        total = weights[:, i].sum()
        if total > 0:
            weights[:, i] /= total


def train_inhibitory(encoder, patches: np.ndarray, cfg: HebbianConfig) -> InhibitoryMatrix:
    """Train lateral weights over encoded patches, one sample at a time.

    Encodings are precomputed in one vectorized pass (the only parallelism
    the update order allows); the Hebbian sweep itself is sequential since
    every update depends on the current weights. Samples are visited in a
    seeded shuffled order, reshuffled each epoch.
    """
    k = encoder.n_features
    if cfg.prune_mode == "fixed" and cfg.neighborhood_size is not None:
        if cfg.neighborhood_size < 1 or cfg.neighborhood_size > k - 1:
            raise InvalidNeighborhoodError(
                f"neighborhood_size={cfg.neighborhood_size} outside [1, {k - 1}]"
            )
    mat = init_inhibitory(k)
    if cfg.epochs == 0:
        return mat
    z_all = np.asarray(encoder.encode(patches), dtype=np.float64)
    if z_all.ndim != 2 or z_all.shape[1] != k:
        raise DimensionMismatchError("encoder output must be (N, K)")
    n = z_all.shape[0]
    rng = np.random.default_rng(cfg.seed)
    weights, mask = mat.weights, mat.mask
    for epoch in range(1, cfg.epochs + 1):
        for t in rng.permutation(n):
            z = z_all[t]
            h = np.maximum(z - z @ weights, 0.0)
            _hebbian_step(weights, mask, z, h, cfg.alpha, cfg.variant)
        if cfg.prune_mode == "threshold":
            _prune_weak_links(weights, mask, cfg.threshold_frac)
        elif cfg.neighborhood_size is not None and epoch == cfg.prune_after_epoch:
            mat = prune_to_neighborhood(InhibitoryMatrix(weights, mask), cfg.neighborhood_size)
            weights, mask = mat.weights, mat.mask
    return InhibitoryMatrix(weights, mask)


# ---------------------------------------------------------------------------
# Activation statistics


@dataclass
class ActivationStats:
    mean_abs_offdiag_correlation: float
    population_sparsity: float


class ActivationAccumulator:
    """Streaming first/second moments for Pearson correlations and sparsity.

    Feed batches of activation row-vectors with `update`; `finalize`
    returns the summary. Neurons with zero variance contribute zero
    correlation by convention.
    """

    def __init__(self, k: int):
        if k < 2:
            raise InsufficientSampleError("need at least 2 neurons")
        self.k = k
        self.count = 0
        self._sum = np.zeros(k)
        self._outer = np.zeros((k, k))
        self._zeros = 0

    def update(self, batch) -> None:
        batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        if batch.shape[1] != self.k:
            raise DimensionMismatchError(f"batch width {batch.shape[1]}, expected {self.k}")
        self.count += batch.shape[0]
        self._sum += batch.sum(axis=0)
        self._outer += batch.T @ batch
        self._zeros += int(np.count_nonzero(batch == 0.0))

    def finalize(self) -> ActivationStats:
        if self.count < 2:
            raise InsufficientSampleError(f"need at least 2 vectors, saw {self.count}")
        mean = self._sum / self.count
        cov = self._outer / self.count - np.outer(mean, mean)
        std = np.sqrt(np.maximum(np.diag(cov), 0.0))
        denom = np.outer(std, std)
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = np.where(denom > 0.0, cov / denom, 0.0)
        off = ~np.eye(self.k, dtype=bool)
        return ActivationStats(
            mean_abs_offdiag_correlation=float(np.abs(corr[off]).mean()),
            population_sparsity=self._zeros / (self.count * self.k),
        )


def compute_activation_stats(vectors) -> ActivationStats:
    """Correlation and sparsity summary of a sample of K-vectors.

    Raises:
        InsufficientSampleError: fewer than 2 vectors or fewer than 2 neurons.
    """
    arr = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if arr.shape[0] < 2:
        raise InsufficientSampleError(f"need at least 2 vectors, got {arr.shape[0]}")
    acc = ActivationAccumulator(arr.shape[1])
    acc.update(arr)
    return acc.finalize()
