import json
import os
import subprocess
import sys

import pytest

from lateralis import cli, stages

from conftest import make_config_file


def run_cli(args, **env_extra):
    env = dict(os.environ)
    env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "lateralis", *args],
        capture_output=True, text=True, env=env,
    )


@pytest.fixture(scope="module")
def cli_setup(mini_corpus, tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = make_config_file(
        root / "run.cfg", mini_corpus["train"], mini_corpus["test"],
        root / "out",
        # keep the subprocess round cheap
        n_patches=800, n_features=6, neighborhood=3, kmeans_iters=2,
        clf_epochs=15,
    )
    return {"cfg": cfg, "root": root}


def test_stage_choices_stay_in_sync():
    assert cli.STAGE_CHOICES == stages.STAGES + ("all",)


def test_help_runs_without_config():
    proc = run_cli(["--help"])
    assert proc.returncode == 0
    assert "lateralis" in proc.stdout


class TestEndToEnd:
    def test_all_stages_exit_zero(self, cli_setup):
        proc = run_cli(["all", "--config", str(cli_setup["cfg"])])
        assert proc.returncode == 0, proc.stderr
        assert "baseline: test_accuracy=" in proc.stdout
        assert "inhibited: test_accuracy=" in proc.stdout
        assert (cli_setup["root"] / "out" / "report.json").is_file()

    def test_single_stage_message(self, cli_setup):
        proc = run_cli(["ingest", "--config", str(cli_setup["cfg"])])
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.strip() == "stage ingest complete"

    def test_out_override(self, cli_setup):
        out2 = cli_setup["root"] / "out2"
        proc = run_cli(
            ["ingest", "--config", str(cli_setup["cfg"]), "--out", str(out2)]
        )
        assert proc.returncode == 0, proc.stderr
        assert (out2 / "patches.bin").is_file()

    def test_seed_override_changes_artifacts(self, cli_setup):
        a = cli_setup["root"] / "seed_a"
        b = cli_setup["root"] / "seed_b"
        for out, seed in ((a, "21"), (b, "22")):
            proc = run_cli(
                ["ingest", "--config", str(cli_setup["cfg"]),
                 "--out", str(out), "--seed", seed]
            )
            assert proc.returncode == 0, proc.stderr
        assert (a / "patches.bin").read_bytes() != (b / "patches.bin").read_bytes()
        echo_a = (a / "config.txt").read_text()
        assert "seed = 21" in echo_a


class TestExitCodes:
    def test_bad_config_is_2(self, cli_setup, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("nonsense = 1\n")
        proc = run_cli(["all", "--config", str(bad)])
        assert proc.returncode == 2
        assert "unknown key" in proc.stderr

    def test_missing_config_is_2(self, tmp_path):
        proc = run_cli(["all", "--config", str(tmp_path / "absent.cfg")])
        assert proc.returncode == 2
        assert "error:" in proc.stderr

    def test_missing_dependency_is_3(self, cli_setup, mini_corpus, tmp_path):
        cfg = make_config_file(
            tmp_path / "run.cfg", mini_corpus["train"], mini_corpus["test"],
            tmp_path / "fresh",
        )
        proc = run_cli(["evaluate", "--config", str(cfg)])
        assert proc.returncode == 3
        assert "extract" in proc.stderr

    def test_unknown_stage_is_usage_error(self, cli_setup):
        proc = run_cli(["deploy", "--config", str(cli_setup["cfg"])])
        assert proc.returncode == 2  # argparse rejects it before we run


class TestThreadEnv:
    def test_invalid_value_is_2(self, cli_setup):
        proc = run_cli(
            ["ingest", "--config", str(cli_setup["cfg"])],
            LATERALIS_THREADS="many",
        )
        assert proc.returncode == 2
        assert "LATERALIS_THREADS" in proc.stderr

    def test_pins_blas_pools(self, monkeypatch):
        monkeypatch.setenv("LATERALIS_THREADS", "2")
        for var in cli._THREAD_VARS:
            monkeypatch.delenv(var, raising=False)
        cli._apply_thread_env()
        for var in cli._THREAD_VARS:
            assert os.environ[var] == "2"

    def test_absent_leaves_env_alone(self, monkeypatch):
        monkeypatch.delenv("LATERALIS_THREADS", raising=False)
        monkeypatch.delenv("OMP_NUM_THREADS", raising=False)
        cli._apply_thread_env()
        assert "OMP_NUM_THREADS" not in os.environ

    def test_respected_end_to_end(self, cli_setup, mini_corpus, tmp_path):
        cfg = make_config_file(
            tmp_path / "run.cfg", mini_corpus["train"], mini_corpus["test"],
            tmp_path / "out", n_patches=800, n_features=6, neighborhood=3,
            kmeans_iters=2,
        )
        proc = run_cli(
            ["ingest", "--config", str(cfg)], LATERALIS_THREADS="1"
        )
        assert proc.returncode == 0, proc.stderr


def test_report_json_matches_cli_summary(cli_setup):
    """The printed accuracies come from the same report that lands on disk."""
    report_path = cli_setup["root"] / "out" / "report.json"
    if not report_path.exists():  # ordering guard: rerun the pipeline
        proc = run_cli(["all", "--config", str(cli_setup["cfg"])])
        assert proc.returncode == 0, proc.stderr
    proc = run_cli(["evaluate", "--config", str(cli_setup["cfg"])])
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(report_path.read_text())
    for name, metrics in doc["variants"].items():
        assert f"{name}: test_accuracy={metrics['test_accuracy']:.4f}" in proc.stdout
