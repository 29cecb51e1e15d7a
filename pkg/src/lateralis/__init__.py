"""Unsupervised single-layer image features with a feed-forward lateral
inhibition layer trained by a normalized Hebbian rule.

Submodules are imported lazily so that the CLI can configure BLAS thread
counts before numpy loads.
"""

__version__ = "0.1.0"

__all__ = [
    "classifier",
    "cli",
    "config",
    "dataset",
    "encoder",
    "errors",
    "fixture",
    "inhibition",
    "pipeline",
    "serialization",
    "stages",
]
