"""Run configuration: a flat ``key = value`` file with a strict schema.

Lines are ``key = value``; blank lines and ``#`` comments are ignored.
Unknown keys, duplicate keys, type errors, and out-of-range values all
raise ConfigError. The parsed config canonicalizes to sorted key order,
and its SHA-256 identifies the run in every artifact fragment.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .encoder import AutoencoderConfig
from .errors import ConfigError
from .inhibition import HEBBIAN_VARIANTS, PRUNE_MODES, HebbianConfig
from .classifier import DEFAULT_LAMBDA_GRID, SoftmaxConfig

ENCODERS = ("kmeans", "sparse_ae")
INHIBITION_MODES = ("off", "on", "both")


def _parse_int(key, raw):
    try:
        return int(raw, 10)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _parse_float(key, raw):
    try:
        val = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if val != val or val in (float("inf"), float("-inf")):
        raise ConfigError(f"{key}: must be finite, got {raw!r}")
    return val


def _parse_grid(key, raw):
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {raw!r}")
    vals = tuple(_parse_float(key, p) for p in parts)
    if any(v <= 0 for v in vals):
        raise ConfigError(f"{key}: regularization strengths must be positive")
    return tuple(sorted(set(vals)))


@dataclass
class RunConfig:
    """Validated settings for one experiment run."""

    train_data: str
    test_data: str
    out_dir: str
    n_train_images: int = 0  # 0 means every record in the file
    n_test_images: int = 0
    patch_size: int = 6
    norm_eps: float = 10.0
    zca_eps: float = 0.1
    n_patches: int = 50000
    encoder: str = "kmeans"
    n_features: int = 100
    kmeans_iters: int = 10
    ae_rho: float = 0.05
    ae_beta: float = 3.0
    ae_weight_decay: float = 3e-3
    ae_learning_rate: float = 0.01
    ae_epochs: int = 20
    ae_batch_size: int = 100
    inhibition: str = "both"
    hebbian_alpha: float = 0.05
    hebbian_epochs: int = 5
    neighborhood: int = 40  # 0 disables pruning
    prune_after_epoch: int = 2
    hebbian_variant: str = "literal"
    prune_mode: str = "fixed"
    threshold_frac: float = 0.1
    stride: int = 1
    lambda_grid: tuple = field(default_factory=lambda: DEFAULT_LAMBDA_GRID)
    folds: int = 5
    clf_learning_rate: float = 0.2
    clf_epochs: int = 150
    clf_batch_size: int = 200
    seed: int = 0

    def validate(self) -> None:
        c = self
        if not (1 <= c.patch_size <= 32):
            raise ConfigError("patch_size must be in [1, 32]")
        if c.norm_eps <= 0 or c.zca_eps <= 0:
            raise ConfigError("norm_eps and zca_eps must be positive")
        if c.n_patches < 1:
            raise ConfigError("n_patches must be positive")
        if c.encoder not in ENCODERS:
            raise ConfigError(f"encoder must be one of {ENCODERS}")
        if c.n_features < 2:
            raise ConfigError("n_features must be at least 2")
        if c.kmeans_iters < 0:
            raise ConfigError("kmeans_iters must be non-negative")
        if not (0.0 < c.ae_rho < 1.0):
            raise ConfigError("ae_rho must lie strictly between 0 and 1")
        if c.ae_beta < 0 or c.ae_weight_decay < 0:
            raise ConfigError("ae_beta and ae_weight_decay must be non-negative")
        if c.ae_learning_rate <= 0 or c.clf_learning_rate <= 0:
            raise ConfigError("learning rates must be positive")
        if c.ae_epochs < 0 or c.hebbian_epochs < 0 or c.clf_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if c.ae_batch_size < 1 or c.clf_batch_size < 1:
            raise ConfigError("batch sizes must be positive")
        if c.inhibition not in INHIBITION_MODES:
            raise ConfigError(f"inhibition must be one of {INHIBITION_MODES}")
        if c.hebbian_alpha <= 0:
            raise ConfigError("hebbian_alpha must be positive")
        if c.neighborhood < 0:
            raise ConfigError("neighborhood must be non-negative (0 disables)")
        if c.neighborhood >= c.n_features and c.prune_mode == "fixed":
            raise ConfigError("neighborhood must be smaller than n_features")
        if c.prune_after_epoch < 1:
            raise ConfigError("prune_after_epoch must be at least 1")
        if c.hebbian_variant not in HEBBIAN_VARIANTS:
            raise ConfigError(f"hebbian_variant must be one of {HEBBIAN_VARIANTS}")
        if c.prune_mode not in PRUNE_MODES:
            raise ConfigError(f"prune_mode must be one of {PRUNE_MODES}")
        if not (0.0 < c.threshold_frac < 1.0):
            raise ConfigError("threshold_frac must lie strictly between 0 and 1")
        if c.stride < 1:
            raise ConfigError("stride must be at least 1")
        if c.patch_size + c.stride > 33:
            raise ConfigError("patch grid is empty: reduce patch_size or stride")
        if c.folds < 2:
            raise ConfigError("folds must be at least 2")
        if c.n_train_images < 0 or c.n_test_images < 0:
            raise ConfigError("image counts must be non-negative (0 means all)")
        if c.seed < 0:
            raise ConfigError("seed must be non-negative")

    # -- canonical form ----------------------------------------------------

    def canonical_text(self) -> str:
        """Sorted key = value rendering; omits out_dir, which names where a
        run lands rather than what it computes."""
        lines = []
        for key in sorted(_SCHEMA):
            if key == "out_dir":
                continue
            val = getattr(self, key)
            if key == "lambda_grid":
                rendered = ",".join(repr(v) for v in val)
            elif isinstance(val, float):
                rendered = repr(val)
            else:
                rendered = str(val)
            lines.append(f"{key} = {rendered}")
        return "\n".join(lines) + "\n"

    @property
    def sha(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    # -- stage-config adapters ---------------------------------------------

    def autoencoder_config(self, seed: int) -> AutoencoderConfig:
        return AutoencoderConfig(
            rho=self.ae_rho,
            beta=self.ae_beta,
            weight_decay=self.ae_weight_decay,
            learning_rate=self.ae_learning_rate,
            epochs=self.ae_epochs,
            batch_size=self.ae_batch_size,
            seed=seed,
        )

    def hebbian_config(self, seed: int) -> HebbianConfig:
        return HebbianConfig(
            alpha=self.hebbian_alpha,
            epochs=self.hebbian_epochs,
            neighborhood_size=self.neighborhood if self.neighborhood else None,
            prune_after_epoch=self.prune_after_epoch,
            seed=seed,
            variant=self.hebbian_variant,
            prune_mode=self.prune_mode,
            threshold_frac=self.threshold_frac,
        )

    def softmax_config(self, seed: int) -> SoftmaxConfig:
        return SoftmaxConfig(
            learning_rate=self.clf_learning_rate,
            epochs=self.clf_epochs,
            batch_size=self.clf_batch_size,
            seed=seed,
        )


_SCHEMA = {
    "train_data": str,
    "test_data": str,
    "out_dir": str,
    "n_train_images": _parse_int,
    "n_test_images": _parse_int,
    "patch_size": _parse_int,
    "norm_eps": _parse_float,
    "zca_eps": _parse_float,
    "n_patches": _parse_int,
    "encoder": str,
    "n_features": _parse_int,
    "kmeans_iters": _parse_int,
    "ae_rho": _parse_float,
    "ae_beta": _parse_float,
    "ae_weight_decay": _parse_float,
    "ae_learning_rate": _parse_float,
    "ae_epochs": _parse_int,
    "ae_batch_size": _parse_int,
    "inhibition": str,
    "hebbian_alpha": _parse_float,
    "hebbian_epochs": _parse_int,
    "neighborhood": _parse_int,
    "prune_after_epoch": _parse_int,
    "hebbian_variant": str,
    "prune_mode": str,
    "threshold_frac": _parse_float,
    "stride": _parse_int,
    "lambda_grid": _parse_grid,
    "folds": _parse_int,
    "clf_learning_rate": _parse_float,
    "clf_epochs": _parse_int,
    "clf_batch_size": _parse_int,
    "seed": _parse_int,
}

_REQUIRED = ("train_data", "test_data", "out_dir")


def parse_config_text(text: str) -> dict:
    """Raw text to a {key: typed value} dict, enforcing the schema."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not raw:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        parser = _SCHEMA[key]
        if parser is str:
            values[key] = raw
        elif parser is _parse_grid:
            values[key] = _parse_grid(key, raw)
        else:
            values[key] = parser(key, raw)
    return values


def load_config(
    path,
    seed_override: Optional[int] = None,
    out_override: Optional[str] = None,
) -> RunConfig:
    """Parses and validates a config file, applying CLI overrides.

    Raises ConfigError for any schema violation or if an input data file
    does not exist.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {p}: {e}") from None
    values = parse_config_text(text)
    missing = [k for k in _REQUIRED if k not in values and k != "out_dir"]
    if out_override is None and "out_dir" not in values:
        missing.append("out_dir")
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(sorted(missing))}")
    if seed_override is not None:
        if seed_override < 0:
            raise ConfigError("seed must be non-negative")
        values["seed"] = seed_override
    if out_override is not None:
        values["out_dir"] = out_override
    cfg = RunConfig(**values)
    cfg.validate()
    for key in ("train_data", "test_data"):
        if not Path(getattr(cfg, key)).is_file():
            raise ConfigError(f"{key}: no such file {getattr(cfg, key)!r}")
    return cfg
