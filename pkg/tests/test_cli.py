import filecmp
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from lsfanim.vqvae import MotionSequence, read_motion, write_motion

TINY_CONFIG = {
    "seed": 5,
    "dims": {
        "d": 16,
        "latent_dim": 16,
        "codebook_size": 32,
        "n_f": 4,
        "layers": 2,
        "heads": 4,
        "d_id": 8,
        "d_m": 16,
        "d_e": 16,
    },
    "stage1": {"max_epochs": 2, "batch_size": 4, "patience": None},
    "stage2": {"max_epochs": 1, "batch_size": 4, "patience": None, "lr": 1e-4},
    "sampler": {"n_samples": 2},
    "corpus": {
        "n_subjects": 4,
        "sentences_per_cell": 1,
        "neutral_sentences": 1,
        "t_min": 25,
        "t_max": 30,
        "vertices": 15,
        "split_ratios": [0.5, 0.25, 0.25],
    },
}


def run_lsf(*args, env_extra=None):
    env = dict(os.environ)
    env["LSF_THREADS"] = "1"
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "lsfanim._entry", *map(str, args)],
        capture_output=True,
        text=True,
        env=env,
    )


def dir_snapshot(root: Path) -> dict:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = path.read_bytes()
    return out


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Config, corpus, and both checkpoints built once through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    config = root / "config.json"
    config.write_text(json.dumps(TINY_CONFIG, indent=2))
    corpus = root / "corpus"
    r = run_lsf("synth-corpus", "--config", config, "--out", corpus)
    assert r.returncode == 0, r.stderr
    vq = root / "vq.lsfc"
    r = run_lsf("train-vqvae", "--config", config, "--corpus", corpus, "--out", vq)
    assert r.returncode == 0, r.stderr
    enc = root / "enc.lsfc"
    r = run_lsf("train-encoder", "--config", config, "--corpus", corpus, "--vqvae", vq, "--out", enc)
    assert r.returncode == 0, r.stderr
    return {"root": root, "config": config, "corpus": corpus, "vq": vq, "enc": enc}


class TestSynthCorpus:
    def test_produces_valid_manifest_and_blendshape(self, workspace):
        corpus = workspace["corpus"]
        manifest = json.loads((corpus / "manifest.json").read_text())
        assert manifest["format"] == "lsf-corpus"
        assert len(manifest["subjects"]) == 4
        assert (corpus / "blendshape.lsfb").exists()
        assert (corpus / "masks" / "lip.json").exists()
        assert (corpus / "masks" / "upper_face.json").exists()

    def test_rerun_is_byte_identical(self, workspace, tmp_path):
        again = tmp_path / "corpus2"
        r = run_lsf("synth-corpus", "--config", workspace["config"], "--out", again)
        assert r.returncode == 0, r.stderr
        a = dir_snapshot(workspace["corpus"])
        b = dir_snapshot(again)
        assert a == b

    def test_malformed_json_exits_2_with_position(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"seed": 1,,}')
        r = run_lsf("synth-corpus", "--config", bad, "--out", tmp_path / "x")
        assert r.returncode == 2
        assert "line" in r.stderr and "column" in r.stderr

    def test_unknown_config_key_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"seed": 1, "turbo": True}))
        r = run_lsf("synth-corpus", "--config", bad, "--out", tmp_path / "x")
        assert r.returncode == 2
        assert "turbo" in r.stderr


class TestTraining:
    def test_stage1_log_is_monotone_and_marks_best(self, workspace):
        log = json.loads((workspace["root"] / "vq.lsfc.log.json").read_text())
        epochs = [e["epoch"] for e in log["epochs"]]
        assert epochs == sorted(epochs)
        assert log["best_epoch"] in epochs

    def test_stage1_rerun_reproduces_log_and_checkpoint(self, workspace, tmp_path):
        out = tmp_path / "vq2.lsfc"
        r = run_lsf("train-vqvae", "--config", workspace["config"], "--corpus", workspace["corpus"], "--out", out)
        assert r.returncode == 0, r.stderr
        assert out.read_bytes() == workspace["vq"].read_bytes()
        assert (
            out.with_suffix(".lsfc.log.json").read_bytes()
            == (workspace["root"] / "vq.lsfc.log.json").read_bytes()
        )

    def test_stage2_refuses_corrupted_stage1(self, workspace, tmp_path):
        bad = tmp_path / "bad.lsfc"
        bad.write_bytes(b"XXXX" + workspace["vq"].read_bytes()[4:])
        r = run_lsf(
            "train-encoder", "--config", workspace["config"], "--corpus", workspace["corpus"],
            "--vqvae", bad, "--out", tmp_path / "enc.lsfc",
        )
        assert r.returncode == 3
        assert "magic" in r.stderr

    def test_missing_corpus_exits_3(self, workspace, tmp_path):
        r = run_lsf("train-vqvae", "--config", workspace["config"], "--corpus", tmp_path / "nope", "--out", tmp_path / "x.lsfc")
        assert r.returncode == 3


class TestGenerate:
    def _any_item_key(self, workspace):
        manifest = json.loads((workspace["corpus"] / "manifest.json").read_text())
        test_subjects = set(manifest["split"]["test"])
        return next(r["key"] for r in manifest["items"] if r["subject"] in test_subjects)

    def test_zero_temperature_writes_identical_samples(self, workspace, tmp_path):
        key = self._any_item_key(workspace)
        out = tmp_path / "gen"
        r = run_lsf(
            "generate", "--config", workspace["config"], "--ckpt", workspace["enc"],
            "--corpus", workspace["corpus"], "--item", key,
            "--samples", 3, "--temp", 0.0, "--seed", 1, "--out", out,
        )
        assert r.returncode == 0, r.stderr
        files = sorted(out.glob("*.lsfm"))
        assert len(files) == 3
        assert files[0].read_bytes() == files[1].read_bytes() == files[2].read_bytes()

    def test_generation_is_reproducible(self, workspace, tmp_path):
        key = self._any_item_key(workspace)
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            r = run_lsf(
                "generate", "--config", workspace["config"], "--ckpt", workspace["enc"],
                "--corpus", workspace["corpus"], "--item", key,
                "--samples", 2, "--temp", 1.0, "--seed", 3, "--out", out,
            )
            assert r.returncode == 0, r.stderr
            outs.append(dir_snapshot(out))
        assert outs[0] == outs[1]

    def test_unknown_item_exits_2(self, workspace, tmp_path):
        r = run_lsf(
            "generate", "--config", workspace["config"], "--ckpt", workspace["enc"],
            "--corpus", workspace["corpus"], "--item", "smissing",
            "--out", tmp_path / "x",
        )
        assert r.returncode == 2


class TestEval:
    def test_ground_truth_scores_zero(self, workspace, tmp_path):
        corpus = workspace["corpus"]
        manifest = json.loads((corpus / "manifest.json").read_text())
        pred = tmp_path / "pred"
        pred.mkdir()
        for row in manifest["items"][:3]:
            motion = read_motion(corpus / "items" / f"{row['key']}.lsfm")
            write_motion(pred / f"{row['key']}_s0.lsfm", motion)
        report_path = tmp_path / "report.json"
        r = run_lsf(
            "eval", "--pred", pred, "--corpus", corpus,
            "--blendshape", corpus / "blendshape.lsfb", "--report", report_path,
        )
        assert r.returncode == 0, r.stderr
        report = json.loads(report_path.read_text())
        for key in ("mve", "lve", "fdd", "mee", "ce", "diversity"):
            assert report[key] == 0.0
        assert len(report["per_item"]) == 3

    def test_frame_count_mismatch_reports_file_name(self, workspace, tmp_path):
        corpus = workspace["corpus"]
        manifest = json.loads((corpus / "manifest.json").read_text())
        row = manifest["items"][0]
        motion = read_motion(corpus / "items" / f"{row['key']}.lsfm")
        pred = tmp_path / "pred"
        pred.mkdir()
        bad = MotionSequence(fps=motion.fps, frames=motion.frames[:-1])
        write_motion(pred / f"{row['key']}_s0.lsfm", bad)
        r = run_lsf(
            "eval", "--pred", pred, "--corpus", corpus,
            "--blendshape", corpus / "blendshape.lsfb", "--report", tmp_path / "r.json",
        )
        assert r.returncode == 3
        assert row["key"] in r.stderr

    def test_explicit_mask_flags(self, workspace, tmp_path):
        corpus = workspace["corpus"]
        manifest = json.loads((corpus / "manifest.json").read_text())
        pred = tmp_path / "pred"
        pred.mkdir()
        row = manifest["items"][0]
        write_motion(pred / f"{row['key']}_s0.lsfm", read_motion(corpus / "items" / f"{row['key']}.lsfm"))
        r = run_lsf(
            "eval", "--pred", pred, "--corpus", corpus,
            "--blendshape", corpus / "blendshape.lsfb",
            "--lip-mask", corpus / "masks" / "lip.json",
            "--upper-mask", corpus / "masks" / "upper_face.json",
            "--report", tmp_path / "r.json",
        )
        assert r.returncode == 0, r.stderr
        assert json.loads((tmp_path / "r.json").read_text())["mve"] == 0.0

    def test_eval_is_reproducible(self, workspace, tmp_path):
        corpus = workspace["corpus"]
        manifest = json.loads((corpus / "manifest.json").read_text())
        pred = tmp_path / "pred"
        pred.mkdir()
        row = manifest["items"][0]
        write_motion(pred / f"{row['key']}_s0.lsfm", read_motion(corpus / "items" / f"{row['key']}.lsfm"))
        reports = []
        for name in ("r1.json", "r2.json"):
            path = tmp_path / name
            r = run_lsf(
                "eval", "--pred", pred, "--corpus", corpus,
                "--blendshape", corpus / "blendshape.lsfb", "--report", path,
            )
            assert r.returncode == 0, r.stderr
            reports.append(path.read_bytes())
        assert reports[0] == reports[1]


class TestHeatmap:
    def test_static_sequence_gives_zero_body(self, workspace, tmp_path):
        corpus = workspace["corpus"]
        static = MotionSequence(fps=25, frames=np.tile(np.linspace(-0.5, 0.5, 53), (6, 1)).astype(np.float32))
        seq_path = tmp_path / "static.lsfm"
        write_motion(seq_path, static)
        shape_path = next((corpus / "subjects").glob("*.lsfs"))
        out = tmp_path / "h.csv"
        r = run_lsf(
            "heatmap", "--seq", seq_path, "--blendshape", corpus / "blendshape.lsfb",
            "--shape", shape_path, "--out", out,
        )
        assert r.returncode == 0, r.stderr
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "vertex_index,mean_mm,std_mm"
        for line in lines[1:]:
            _, mean, std = line.split(",")
            assert float(mean) == 0.0 and float(std) == 0.0


class TestUsage:
    def test_unknown_flag_is_an_error(self, workspace):
        r = run_lsf("synth-corpus", "--config", workspace["config"], "--out", "/tmp/x", "--frobnicate")
        assert r.returncode == 2

    def test_help_lists_every_flag(self):
        for command, flags in [
            ("synth-corpus", ["--config", "--out"]),
            ("generate", ["--config", "--ckpt", "--corpus", "--item", "--samples", "--temp", "--seed", "--out"]),
            ("eval", ["--pred", "--corpus", "--blendshape", "--lip-mask", "--upper-mask", "--report"]),
            ("heatmap", ["--seq", "--blendshape", "--shape", "--out"]),
        ]:
            r = run_lsf(command, "--help")
            assert r.returncode == 0
            for flag in flags:
                assert flag in r.stdout

    def test_dump_defaults_prints_valid_config(self):
        r = run_lsf("--dump-defaults")
        assert r.returncode == 0
        parsed = json.loads(r.stdout)
        assert parsed["rates"] == {"feature_hz": 50, "fps": 25}
