"""Command-line entry point.

``lateralis <stage|all> --config PATH [--seed N] [--out DIR]``

Exit codes: 0 on success, 2 for configuration problems (including bad
input data), 3 when a required upstream artifact is missing or stale.

The LATERALIS_THREADS environment variable caps BLAS thread pools; it is
applied before numpy is imported, which is why the heavy modules are
imported lazily inside main().
"""

from __future__ import annotations

import argparse
import os
import sys

# Mirrors stages.STAGES; kept literal here so parsing --help does not pull
# in numpy before the thread environment is pinned.
STAGE_CHOICES = (
    "ingest",
    "train-encoder",
    "train-inhibition",
    "extract",
    "train-classifier",
    "evaluate",
    "all",
)

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _apply_thread_env() -> None:
    raw = os.environ.get("LATERALIS_THREADS")
    if raw is None:
        return
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        print(f"LATERALIS_THREADS must be a positive integer, got {raw!r}", file=sys.stderr)
        raise SystemExit(2) from None
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lateralis",
        description="Unsupervised visual feature learning with lateral inhibition.",
    )
    ap.add_argument("stage", choices=STAGE_CHOICES, help="pipeline stage, or 'all'")
    ap.add_argument("--config", required=True, help="path to a key = value config file")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--out", default=None, help="override the config out_dir")
    return ap


def main(argv=None) -> int:
    _apply_thread_env()
    args = _build_parser().parse_args(argv)

    from .config import load_config
    from .errors import DependencyError, LateralisError
    from .stages import run_pipeline, run_stage

    try:
        cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
        if args.stage == "all":
            report = run_pipeline(cfg)
        else:
            report = run_stage(cfg, args.stage)
    except DependencyError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except LateralisError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    if report is not None:
        for name, vm in report.variants.items():
            print(
                f"{name}: test_accuracy={vm.test_accuracy:.4f} "
                f"best_lambda={vm.best_lambda:g} "
                f"corr={vm.stats.mean_abs_offdiag_correlation:.4f} "
                f"sparsity={vm.stats.population_sparsity:.4f}"
            )
    else:
        print(f"stage {args.stage} complete")
    return 0


if __name__ == "__main__":
    sys.exit(main())
