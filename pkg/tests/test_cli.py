import hashlib
import json
import os

import numpy as np
import pytest

from dgflow import cli, datasets, manifest, models
from dgflow.errors import VerificationError


def run(*argv):
    return cli.main([str(a) for a in argv])


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "gauss.csv"
    assert run("gen-data", "25gaussians", "--n", 12000, "--seed", 1, "--out", path) == 0
    return path


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, data_csv):
    out = tmp_path_factory.mktemp("train")
    code = run("train", "wgan_gp", "--data", data_csv, "--out-dir", out,
               "--gen-iters", 40, "--hidden", 32, "--depth", 2, "--batch", 64,
               "--seed", 5)
    assert code == 0
    return out


class TestGenData:
    def test_row_count_and_determinism(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        assert run("gen-data", "25gaussians", "--n", 500, "--seed", 9, "--out", a) == 0
        assert run("gen-data", "25gaussians", "--n", 500, "--seed", 9, "--out", b) == 0
        assert len(a.read_text().splitlines()) == 501
        assert sha(a) == sha(b)

    def test_round_trips_through_import(self, tmp_path):
        path = tmp_path / "sw.csv"
        run("gen-data", "swissroll", "--n", 300, "--seed", 2, "--out", path)
        pts = datasets.load_points_csv(path)
        assert np.array_equal(pts, datasets.gen_swissroll(300, 2).points)

    def test_manifest_written_and_verifies(self, tmp_path):
        path = tmp_path / "d.csv"
        run("gen-data", "25gaussians", "--n", 100, "--seed", 3, "--out", path)
        man_path = f"{path}.manifest.json"
        assert run("verify-manifest", man_path) == 0


class TestTrain:
    def test_outputs_exist(self, trained_dir):
        for name in ("generator.json", "discriminator.json", "loss_trace.csv",
                     "manifest.json"):
            assert os.path.exists(os.path.join(trained_dir, name))

    def test_zero_iters_emits_untrained_checkpoints(self, tmp_path, data_csv):
        out = tmp_path / "zero"
        assert run("train", "wgan_gp", "--data", data_csv, "--out-dir", out,
                   "--gen-iters", 0, "--hidden", 16, "--depth", 2) == 0
        gen = models.load_checkpoint(out / "generator.json")
        trace = (out / "loss_trace.csv").read_text().splitlines()
        assert len(trace) == 1  # header only
        assert isinstance(gen, models.GeneratorModel)

    def test_config_file_with_flag_override(self, tmp_path, data_csv):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(
            {"gen_iters": 3, "hidden": 16, "depth": 2, "batch": 32, "seed": 8,
             "loss": "non_saturating"}))
        out = tmp_path / "cfgrun"
        assert run("train", "non_saturating", "--data", data_csv, "--config", cfg_path,
                   "--out-dir", out, "--batch", 16) == 0
        man = json.load(open(out / "manifest.json"))
        assert man["config"]["batch"] == 16  # flag wins
        assert man["config"]["gen_iters"] == 3  # file survives

    def test_defaults_encode_training_protocol(self):
        cfg = cli._merge_config(__import__("dgflow.training", fromlist=["GanConfig"]).GanConfig,
                                None, {})
        assert (cfg.gen_iters, cfg.disc_iters_per_gen, cfg.batch) == (10000, 5, 256)
        assert (cfg.lr, cfg.betas, cfg.gp_lambda) == (1e-4, (0.5, 0.9), 10.0)

    def test_vae_training(self, tmp_path, data_csv):
        out = tmp_path / "vae"
        assert run("train", "vae", "--data", data_csv, "--out-dir", out,
                   "--epochs", 1, "--seed", 4) == 0
        vae = models.load_checkpoint(out / "vae.json")
        assert isinstance(vae, models.VaeModel)

    def test_resume_extends_trace_monotonically(self, tmp_path, data_csv, trained_dir):
        out = tmp_path / "resumed"
        assert run("train", "wgan_gp", "--data", data_csv, "--out-dir", out,
                   "--resume-from", trained_dir, "--gen-iters", 7,
                   "--hidden", 32, "--depth", 2, "--batch", 64, "--seed", 6) == 0
        rows = (out / "loss_trace.csv").read_text().strip().splitlines()[1:]
        iters = [int(r.split(",")[0]) for r in rows]
        assert len(iters) == 40 + 7
        assert iters == sorted(iters) and len(set(iters)) == len(iters)


class TestRefine:
    def test_zero_steps_copies_input_samples(self, tmp_path, trained_dir):
        out = tmp_path / "r0"
        assert run("refine", "--method", "dgflow",
                   "--generator", trained_dir / "generator.json",
                   "--discriminator", trained_dir / "discriminator.json",
                   "--steps", 0, "--n", 200, "--seed", 3, "--out-dir", out) == 0
        before = datasets.load_points_csv(out / "samples_before.csv")
        after = datasets.load_points_csv(out / "samples_after.csv")
        assert np.array_equal(before, after)

    def test_snapshots_and_manifest(self, tmp_path, trained_dir):
        out = tmp_path / "r1"
        assert run("refine", "--method", "dgflow", "--divergence", "js",
                   "--generator", trained_dir / "generator.json",
                   "--discriminator", trained_dir / "discriminator.json",
                   "--steps", 10, "--n", 150, "--seed", 3, "--out-dir", out) == 0
        assert os.path.exists(out / "snapshots" / "step_0000.csv")
        assert os.path.exists(out / "snapshots" / "step_0010.csv")
        assert os.path.exists(out / "refinement.svg")
        man = json.load(open(out / "manifest.json"))
        assert "generator" in man["inputs"]
        assert run("verify-manifest", out / "manifest.json") == 0

    def test_deterministic_outputs(self, tmp_path, trained_dir):
        hashes = []
        for sub in ("da", "db"):
            out = tmp_path / sub
            run("refine", "--method", "ddls",
                "--generator", trained_dir / "generator.json",
                "--discriminator", trained_dir / "discriminator.json",
                "--steps", 5, "--n", 100, "--seed", 11, "--out-dir", out)
            hashes.append(sha(out / "samples_after.csv"))
        assert hashes[0] == hashes[1]

    def test_threads_flag_does_not_change_bytes(self, tmp_path, trained_dir):
        hashes = []
        for threads, sub in ((1, "t1"), (4, "t4")):
            out = tmp_path / sub
            run("--threads", threads, "refine", "--method", "dgflow",
                "--generator", trained_dir / "generator.json",
                "--discriminator", trained_dir / "discriminator.json",
                "--steps", 8, "--n", 2100, "--seed", 2, "--out-dir", out)
            hashes.append(sha(out / "samples_after.csv"))
        assert hashes[0] == hashes[1]

    def test_missing_checkpoint_is_config_error(self, tmp_path):
        assert run("refine", "--generator", tmp_path / "nope.json",
                   "--discriminator", tmp_path / "nope2.json",
                   "--out-dir", tmp_path / "x") == 2


class TestEvalAndField:
    def test_eval_report(self, tmp_path, trained_dir, data_csv):
        samples_dir = tmp_path / "samples"
        run("refine", "--method", "dgflow",
            "--generator", trained_dir / "generator.json",
            "--discriminator", trained_dir / "discriminator.json",
            "--steps", 5, "--n", 1000, "--seed", 3, "--out-dir", samples_dir)
        report = tmp_path / "report.json"
        assert run("eval", "--samples", samples_dir / "samples_after.csv",
                   "--data", data_csv, "--runs", 2, "--per-run", 500,
                   "--out", report) == 0
        doc = json.load(open(report))
        assert 0.0 <= doc["pct_high_quality"]["mean"] <= 100.0
        assert len(doc["runs"]) == 2

    def test_field_schema_and_kl_identity(self, tmp_path, trained_dir):
        out = tmp_path / "field"
        assert run("field", "--discriminator", trained_dir / "discriminator.json",
                   "--divergence", "kl", "--grid-n", 5, "--out-dir", out) == 0
        lines = (out / "field.csv").read_text().splitlines()
        assert lines[0] == "x0,x1,v0,v1"
        assert len(lines) == 26
        # KL drift equals the raw logit gradient
        from dgflow import nn
        disc = models.load_checkpoint(trained_dir / "discriminator.json")
        rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        grad = nn.input_gradient(disc.net, rows[:, :2])
        assert np.allclose(rows[:, 2:], grad, rtol=1e-12)

    def test_zero_discriminator_gives_zero_field(self, tmp_path):
        from dgflow import nn
        disc = models.DiscriminatorModel(
            net=nn.Mlp([nn.Layer(np.zeros((2, 1)), np.zeros(1), "identity")]))
        ck = tmp_path / "zero_disc.json"
        models.save_checkpoint(disc, ck)
        out = tmp_path / "zfield"
        assert run("field", "--discriminator", ck, "--grid-n", 4, "--out-dir", out) == 0
        rows = np.loadtxt(out / "field.csv", delimiter=",", skiprows=1)
        assert np.all(rows[:, 2:] == 0.0)


class TestOracleCmd:
    def test_gaussian_case_passes(self, tmp_path):
        out = tmp_path / "oracle"
        assert run("oracle", "--case", "gaussian", "--particles", 4000,
                   "--eta", "2e-3", "--out-dir", out) == 0
        doc = json.load(open(out / "oracle_report.json"))
        assert doc["pass"] is True
        assert all(c["mean_rel_err"] < 0.05 for c in doc["moment_checks"])

    def test_bimodal_case_reports_ks(self, tmp_path):
        out = tmp_path / "oracle2"
        assert run("oracle", "--case", "bimodal", "--divergence", "kl",
                   "--gamma", "0.0", "--particles", 20000, "--eta", "4e-3",
                   "--out-dir", out) == 0
        doc = json.load(open(out / "oracle_report.json"))
        assert doc["ks_distance"] < 0.03
        assert doc["mass_pass"] and doc["lyapunov_monotone"]
        lines = (out / "grid_rho.csv").read_text().splitlines()
        assert lines[0] == "t,x,rho"


class TestVerifyManifest:
    def test_tamper_detected(self, tmp_path):
        path = tmp_path / "d.csv"
        run("gen-data", "25gaussians", "--n", 50, "--seed", 1, "--out", path)
        man_path = f"{path}.manifest.json"
        path.write_text(path.read_text() + "tampered\n")
        assert run("verify-manifest", man_path) == 4
        with pytest.raises(VerificationError):
            manifest.verify_manifest(man_path)

    def test_missing_output_detected(self, tmp_path):
        path = tmp_path / "d.csv"
        run("gen-data", "25gaussians", "--n", 50, "--seed", 1, "--out", path)
        os.remove(path)
        assert run("verify-manifest", f"{path}.manifest.json") == 4


class TestCompare:
    def test_small_compare_schema(self, tmp_path, data_csv, trained_dir):
        out = tmp_path / "cmp"
        assert run("compare", "--data", data_csv, "--out-dir", out,
                   "--load-dir", trained_dir, "--runs", 2, "--per-run", 250) == 0
        lines = (out / "results_table.csv").read_text().splitlines()
        assert lines[0].startswith("method,pct_high_quality_mean")
        methods = [ln.split(",")[0] for ln in lines[1:]]
        assert methods == ["gan", "dot", "ddls", "dgflow_kl", "dgflow_js", "dgflow_logd"]
        for m in methods[1:]:
            assert os.path.exists(out / f"scatter_{m}.svg")
        assert run("verify-manifest", out / "manifest.json") == 0

    def test_compare_rerun_identical_csv(self, tmp_path, data_csv, trained_dir):
        hashes = []
        for sub in ("c1", "c2"):
            out = tmp_path / sub
            run("compare", "--data", data_csv, "--out-dir", out,
                "--load-dir", trained_dir, "--runs", 1, "--per-run", 200)
            hashes.append(sha(out / "results_table.csv"))
        assert hashes[0] == hashes[1]
