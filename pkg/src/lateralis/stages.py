"""Pipeline stages over an artifact directory.

Each stage reads fixed input artifacts, writes fixed output artifacts, and
records a fragment (fragments/<stage>.json) holding the config identity
and SHA-256 of everything it touched. Downstream stages verify those
checksums before running and raise DependencyError naming the stage to
rerun when an artifact is missing or stale.

Everything a stage writes is byte-deterministic given the config; the two
volatile files (the lock file and timings.csv) are not artifacts and are
never checksummed.
"""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from . import classifier as clf
from . import dataset, pipeline, serialization
from .config import RunConfig
from .encoder import train_kmeans, train_sparse_autoencoder
from .errors import ConfigError, DependencyError
from .inhibition import ActivationAccumulator, ActivationStats, train_inhibitory

STAGES = (
    "ingest",
    "train-encoder",
    "train-inhibition",
    "extract",
    "train-classifier",
    "evaluate",
)

LOCK_FILE = ".lateralis.lock"
TIMINGS_FILE = "timings.csv"
CONFIG_ECHO = "config.txt"

# Which stage writes each artifact. Consulted to name the stage a user has
# to rerun when a dependency check fails.
PRODUCERS = {
    "train_images.bin": "ingest",
    "test_images.bin": "ingest",
    "preprocessor.bin": "ingest",
    "patches.bin": "ingest",
    "encoder.bin": "train-encoder",
    "inhibitory.bin": "train-inhibition",
    "features_train_baseline.bin": "extract",
    "features_test_baseline.bin": "extract",
    "features_train_inhibited.bin": "extract",
    "features_test_inhibited.bin": "extract",
    "stats.json": "extract",
    "classifier_baseline.bin": "train-classifier",
    "standardizer_baseline.bin": "train-classifier",
    "classifier_inhibited.bin": "train-classifier",
    "standardizer_inhibited.bin": "train-classifier",
    "classifier_meta.json": "train-classifier",
    "report.json": "evaluate",
    "report.csv": "evaluate",
}

_SEED_SLOT = {"patches": 0, "encoder": 1, "inhibition": 2, "classifier": 3}


def stage_seed(cfg: RunConfig, name: str) -> int:
    """Independent integer seed for one randomized stage of a run."""
    child = np.random.SeedSequence(cfg.seed).spawn(len(_SEED_SLOT))[_SEED_SLOT[name]]
    return int(child.generate_state(1, np.uint64)[0])


def active_variants(cfg: RunConfig):
    if cfg.inhibition == "off":
        return ("baseline",)
    if cfg.inhibition == "on":
        return ("inhibited",)
    return ("baseline", "inhibited")


@dataclass
class VariantMetrics:
    test_accuracy: float
    train_accuracy: float
    best_lambda: float
    stats: ActivationStats


@dataclass
class MetricsReport:
    """Evaluation summary.

    The config echo plus the seed it contains are enough to reproduce
    every listed artifact checksum. wall_clock_seconds is volatile and
    excluded from the serialized report files so reruns stay
    byte-identical.
    """

    config_sha: str
    config_echo: str
    encoder: str
    n_features: int
    inhibition: str
    variants: dict
    artifact_checksums: dict
    wall_clock_seconds: dict

    def to_json_dict(self) -> dict:
        return {
            "config_sha": self.config_sha,
            "config_echo": self.config_echo,
            "encoder": self.encoder,
            "n_features": self.n_features,
            "inhibition": self.inhibition,
            "artifacts": self.artifact_checksums,
            "variants": {
                name: {
                    "test_accuracy": vm.test_accuracy,
                    "train_accuracy": vm.train_accuracy,
                    "best_lambda": vm.best_lambda,
                    "mean_abs_offdiag_correlation": (
                        vm.stats.mean_abs_offdiag_correlation
                    ),
                    "population_sparsity": vm.stats.population_sparsity,
                }
                for name, vm in self.variants.items()
            },
        }


# ---------------------------------------------------------------------------
# Run context: lock, config echo, fragments, dependency checks


class RunContext:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.timings = {}

    def path(self, name: str) -> Path:
        return self.out / name

    def check_config_echo(self) -> None:
        """Refuse to mix artifacts from two different configurations."""
        echo = self.path(CONFIG_ECHO)
        text = self.cfg.canonical_text()
        if echo.exists() and echo.read_text() != text:
            raise ConfigError(
                f"{self.out} already holds a run with a different "
                "configuration; use a fresh output directory"
            )
        echo.write_text(text)

    def fragment_path(self, stage: str) -> Path:
        return self.out / "fragments" / f"{stage}.json"

    def write_fragment(self, stage: str, inputs: dict, outputs: dict) -> None:
        frag = {
            "stage": stage,
            "config_sha": self.cfg.sha,
            "inputs": inputs,
            "outputs": outputs,
        }
        path = self.fragment_path(stage)
        path.parent.mkdir(exist_ok=True)
        path.write_text(json.dumps(frag, sort_keys=True, indent=2) + "\n")

    def read_fragment(self, stage: str) -> dict:
        path = self.fragment_path(stage)
        if not path.exists():
            raise DependencyError(
                stage, f"stage '{stage}' has not produced its artifacts yet; run it first"
            )
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError:
            raise DependencyError(stage, f"fragment for stage '{stage}' is corrupt; rerun it") from None

    def require(self, names) -> dict:
        """Verify artifacts exist, match their producer's recorded checksums,
        and belong to this config. Returns {name: sha} for fragment input
        records."""
        shas = {}
        for name in names:
            producer = PRODUCERS[name]
            frag = self.read_fragment(producer)
            if frag.get("config_sha") != self.cfg.sha:
                raise DependencyError(
                    producer,
                    f"artifacts from stage '{producer}' were built under a "
                    f"different configuration; rerun stage '{producer}'",
                )
            path = self.path(name)
            if not path.exists():
                raise DependencyError(
                    producer, f"missing artifact {name}; rerun stage '{producer}'"
                )
            sha = serialization.sha256_file(path)
            if frag.get("outputs", {}).get(name) != sha:
                raise DependencyError(
                    producer,
                    f"artifact {name} does not match the checksum recorded by "
                    f"stage '{producer}'; rerun stage '{producer}'",
                )
            shas[name] = sha
        return shas

    def record_outputs(self, names) -> dict:
        return {name: serialization.sha256_file(self.path(name)) for name in names}

    def record_timing(self, stage: str, seconds: float) -> None:
        self.timings[stage] = seconds
        rows = {}
        tpath = self.path(TIMINGS_FILE)
        if tpath.exists():
            for line in tpath.read_text().splitlines()[1:]:
                name, _, val = line.partition(",")
                if name:
                    rows[name] = val
        rows[stage] = repr(seconds)
        lines = ["stage,seconds"] + [f"{k},{rows[k]}" for k in sorted(rows)]
        tpath.write_text("\n".join(lines) + "\n")


@contextmanager
def _locked(ctx: RunContext):
    ctx.out.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(ctx.path(LOCK_FILE)))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise ConfigError(
            f"output directory {ctx.out} is locked by another run"
        ) from None
    try:
        yield
    finally:
        lock.release()


# ---------------------------------------------------------------------------
# Stage bodies


def _stage_ingest(ctx: RunContext):
    cfg = ctx.cfg
    train = dataset.load_cifar10_batch(cfg.train_data).subset(cfg.n_train_images)
    test = dataset.load_cifar10_batch(cfg.test_data).subset(cfg.n_test_images)
    dataset.save_cifar10_batch(train, ctx.path("train_images.bin"))
    dataset.save_cifar10_batch(test, ctx.path("test_images.bin"))

    raw = dataset.sample_patches(
        train, cfg.n_patches, cfg.patch_size, stage_seed(cfg, "patches")
    )
    pp = dataset.fit_preprocessor(raw, cfg.norm_eps, cfg.zca_eps)
    serialization.save_preprocessor(pp, ctx.path("preprocessor.bin"))
    serialization.save_patches(pp.apply(raw), ctx.path("patches.bin"))

    inputs = {
        "train_data": serialization.sha256_file(cfg.train_data),
        "test_data": serialization.sha256_file(cfg.test_data),
    }
    outputs = ctx.record_outputs(
        ["train_images.bin", "test_images.bin", "preprocessor.bin", "patches.bin"]
    )
    ctx.write_fragment("ingest", inputs, outputs)


def _stage_train_encoder(ctx: RunContext):
    cfg = ctx.cfg
    inputs = ctx.require(["patches.bin"])
    patches = serialization.load_patches(ctx.path("patches.bin"))
    seed = stage_seed(cfg, "encoder")
    if cfg.encoder == "kmeans":
        enc = train_kmeans(patches, cfg.n_features, cfg.kmeans_iters, seed)
    else:
        enc = train_sparse_autoencoder(
            patches, cfg.n_features, cfg.autoencoder_config(seed)
        )
    serialization.save_encoder(enc, ctx.path("encoder.bin"))
    ctx.write_fragment("train-encoder", inputs, ctx.record_outputs(["encoder.bin"]))


def _stage_train_inhibition(ctx: RunContext):
    cfg = ctx.cfg
    if cfg.inhibition == "off":
        ctx.write_fragment("train-inhibition", {}, {})
        return
    inputs = ctx.require(["patches.bin", "encoder.bin"])
    patches = serialization.load_patches(ctx.path("patches.bin"))
    enc = serialization.load_encoder(ctx.path("encoder.bin"))
    mat = train_inhibitory(
        enc, patches, cfg.hebbian_config(stage_seed(cfg, "inhibition"))
    )
    serialization.save_inhibitory(mat, ctx.path("inhibitory.bin"))
    ctx.write_fragment(
        "train-inhibition", inputs, ctx.record_outputs(["inhibitory.bin"])
    )


def _extract_split(ctx, images, pp, enc, mat, variants, split, accumulate):
    """Extract pooled descriptors for one image split, one file per variant.

    With accumulate=True also streams per-position activations into
    correlation/sparsity accumulators; returns {"z": acc, "h": acc|None}.
    """
    cfg = ctx.cfg
    side = pipeline.grid_side(cfg.patch_size, cfg.stride)
    k = enc.n_features
    acc_z = ActivationAccumulator(k) if accumulate else None
    acc_h = ActivationAccumulator(k) if accumulate and mat is not None else None
    writers = {
        v: serialization.FeatureWriter(ctx.path(f"features_{split}_{v}.bin"), 4 * k)
        for v in variants
    }
    try:
        for i in range(len(images)):
            z, h = pipeline.image_activations(
                images.pixels[i], pp, enc, mat, cfg.stride
            )
            if acc_z is not None:
                acc_z.update(z)
            if acc_h is not None:
                acc_h.update(h)
            label = int(images.labels[i])
            if "baseline" in writers:
                writers["baseline"].append(label, pipeline.pool_positions(z, side))
            if "inhibited" in writers:
                writers["inhibited"].append(label, pipeline.pool_positions(h, side))
    finally:
        for w in writers.values():
            w.close()
    return {"z": acc_z, "h": acc_h}


def _stage_extract(ctx: RunContext):
    cfg = ctx.cfg
    variants = active_variants(cfg)
    needed = ["preprocessor.bin", "encoder.bin", "train_images.bin", "test_images.bin"]
    if cfg.inhibition != "off":
        needed.append("inhibitory.bin")
    inputs = ctx.require(needed)

    pp = serialization.load_preprocessor(ctx.path("preprocessor.bin"))
    enc = serialization.load_encoder(ctx.path("encoder.bin"))
    mat = None
    if cfg.inhibition != "off":
        mat = serialization.load_inhibitory(ctx.path("inhibitory.bin"))
    train = dataset.load_cifar10_batch(ctx.path("train_images.bin"))
    test = dataset.load_cifar10_batch(ctx.path("test_images.bin"))

    accs = _extract_split(ctx, train, pp, enc, mat, variants, "train", True)
    _extract_split(ctx, test, pp, enc, mat, variants, "test", False)

    stats = {"z": _stats_dict(accs["z"].finalize())}
    stats["h"] = _stats_dict(accs["h"].finalize()) if accs["h"] is not None else None
    ctx.path("stats.json").write_text(
        json.dumps(stats, sort_keys=True, indent=2) + "\n"
    )

    outputs = ["stats.json"]
    for split in ("train", "test"):
        outputs += [f"features_{split}_{v}.bin" for v in variants]
    ctx.write_fragment("extract", inputs, ctx.record_outputs(outputs))


def _stats_dict(stats: ActivationStats) -> dict:
    return {
        "mean_abs_offdiag_correlation": stats.mean_abs_offdiag_correlation,
        "population_sparsity": stats.population_sparsity,
    }


def _stage_train_classifier(ctx: RunContext):
    cfg = ctx.cfg
    variants = active_variants(cfg)
    needed = [f"features_train_{v}.bin" for v in variants]
    inputs = ctx.require(needed)

    seed = stage_seed(cfg, "classifier")  # shared across variants: paired folds
    meta = {"variants": {}}
    outputs = []
    for v in variants:
        feats, labels = serialization.load_features(ctx.path(f"features_train_{v}.bin"))
        std = pipeline.fit_standardizer(feats)
        scaled = std.apply(feats)
        result = clf.cross_validate(
            scaled, labels, cfg.lambda_grid, cfg.folds, cfg.softmax_config(seed), seed
        )
        serialization.save_softmax(result.model, ctx.path(f"classifier_{v}.bin"))
        serialization.save_standardizer(std, ctx.path(f"standardizer_{v}.bin"))
        meta["variants"][v] = {
            "best_lambda": result.best_lambda,
            "fold_accuracies": {repr(l): a for l, a in result.fold_accuracies.items()},
            "train_accuracy": clf.accuracy(result.model, scaled, labels),
        }
        outputs += [f"classifier_{v}.bin", f"standardizer_{v}.bin"]
    ctx.path("classifier_meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n"
    )
    outputs.append("classifier_meta.json")
    ctx.write_fragment("train-classifier", inputs, ctx.record_outputs(outputs))


def _stage_evaluate(ctx: RunContext) -> MetricsReport:
    cfg = ctx.cfg
    variants = active_variants(cfg)
    needed = ["stats.json", "classifier_meta.json"]
    for v in variants:
        needed += [f"features_test_{v}.bin", f"classifier_{v}.bin", f"standardizer_{v}.bin"]
    inputs = ctx.require(needed)

    stats = json.loads(ctx.path("stats.json").read_text())
    meta = json.loads(ctx.path("classifier_meta.json").read_text())
    report_variants = {}
    for v in variants:
        feats, labels = serialization.load_features(ctx.path(f"features_test_{v}.bin"))
        std = serialization.load_standardizer(ctx.path(f"standardizer_{v}.bin"))
        model = serialization.load_softmax(ctx.path(f"classifier_{v}.bin"))
        s = stats["z"] if v == "baseline" else stats["h"]
        report_variants[v] = VariantMetrics(
            test_accuracy=clf.accuracy(model, std.apply(feats), labels),
            train_accuracy=meta["variants"][v]["train_accuracy"],
            best_lambda=meta["variants"][v]["best_lambda"],
            stats=ActivationStats(
                mean_abs_offdiag_correlation=s["mean_abs_offdiag_correlation"],
                population_sparsity=s["population_sparsity"],
            ),
        )

    # every upstream artifact the run produced, keyed by file name
    checksums = {}
    for stage in STAGES[:-1]:
        checksums.update(ctx.read_fragment(stage).get("outputs", {}))

    report = MetricsReport(
        config_sha=cfg.sha,
        config_echo=cfg.canonical_text(),
        encoder=cfg.encoder,
        n_features=cfg.n_features,
        inhibition=cfg.inhibition,
        variants=report_variants,
        artifact_checksums=checksums,
        wall_clock_seconds=dict(ctx.timings),
    )
    ctx.path("report.json").write_text(
        json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"
    )
    header = (
        "variant,test_accuracy,train_accuracy,best_lambda,"
        "mean_abs_offdiag_correlation,population_sparsity"
    )
    rows = [header]
    for v in variants:
        vm = report_variants[v]
        rows.append(
            f"{v},{vm.test_accuracy!r},{vm.train_accuracy!r},{vm.best_lambda!r},"
            f"{vm.stats.mean_abs_offdiag_correlation!r},"
            f"{vm.stats.population_sparsity!r}"
        )
    ctx.path("report.csv").write_text("\n".join(rows) + "\n")
    ctx.write_fragment(
        "evaluate", inputs, ctx.record_outputs(["report.json", "report.csv"])
    )
    return report


_BODIES = {
    "ingest": _stage_ingest,
    "train-encoder": _stage_train_encoder,
    "train-inhibition": _stage_train_inhibition,
    "extract": _stage_extract,
    "train-classifier": _stage_train_classifier,
    "evaluate": _stage_evaluate,
}


def _run_locked(ctx: RunContext, stage: str):
    ctx.check_config_echo()
    start = time.perf_counter()
    result = _BODIES[stage](ctx)
    ctx.record_timing(stage, time.perf_counter() - start)
    if isinstance(result, MetricsReport):
        # evaluate's own timing only lands after the body returns
        result.wall_clock_seconds = dict(ctx.timings)
    return result


def run_stage(cfg: RunConfig, stage: str):
    """Run one stage under the output-directory lock.

    Returns the MetricsReport for the evaluate stage, otherwise None.
    """
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; expected one of {STAGES}")
    ctx = RunContext(cfg)
    with _locked(ctx):
        return _run_locked(ctx, stage)


def run_pipeline(cfg: RunConfig) -> MetricsReport:
    """All six stages in order under one lock; returns the final report."""
    ctx = RunContext(cfg)
    with _locked(ctx):
        report = None
        for stage in STAGES:
            report = _run_locked(ctx, stage)
        return report
