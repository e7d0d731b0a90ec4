"""Experiment runner tests: config validation, manifests, determinism, and
the CLI surface."""

import json
import os
from dataclasses import replace

import numpy as np
import pytest

from contrastlab.cli import main as cli_main
from contrastlab.errors import ConfigValidationError
from contrastlab.experiments import (
    EXPERIMENT_IDS,
    config_from_dict,
    config_hash,
    config_to_dict,
    default_config,
    run_experiment,
    validate_config,
)


def write_config(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)


def small_e4(outdir, seed=3):
    cfg = default_config("E4_concentration", seed=seed, output_dir=str(outdir))
    return replace(
        cfg,
        params=replace(cfg.params, n_rep=4, pool_sizes=(32, 128), reference_batches=512),
    )


def small_e1(outdir, seed=3):
    cfg = default_config("E1_temp_margin", seed=seed, output_dir=str(outdir))
    return replace(
        cfg,
        train=replace(cfg.train, iterations_T=60, pool_batches_n=64),
        eval=replace(cfg.eval, margin_batches=8),
    )


class TestValidation:
    def test_default_configs_valid(self):
        for eid in EXPERIMENT_IDS:
            cfg = default_config(eid, seed=1, output_dir="runs/x")
            # round-trips through the dict form unchanged
            assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_e2_margin_precondition_named(self, tmp_path):
        payload = config_to_dict(default_config("E2_clip_vs_square", 1, "runs/x"))
        payload["model"]["gamma"] = 0.4
        path = tmp_path / "bad.json"
        write_config(path, payload)
        with pytest.raises(ConfigValidationError) as exc:
            validate_config(path)
        assert any("gamma" in p and "1/3" in p for p in exc.value.problems)

    def test_missing_seed_listed(self, tmp_path):
        payload = config_to_dict(default_config("E1_temp_margin", 1, "runs/x"))
        del payload["seed"]
        path = tmp_path / "noseed.json"
        write_config(path, payload)
        with pytest.raises(ConfigValidationError) as exc:
            validate_config(path)
        assert any(p.startswith("seed:") for p in exc.value.problems)

    def test_all_problems_reported_at_once(self, tmp_path):
        payload = config_to_dict(default_config("E1_temp_margin", 1, "runs/x"))
        del payload["seed"]
        payload["model"]["gamma"] = -1.0
        payload["train"]["batch_size_B"] = 1
        path = tmp_path / "multi.json"
        write_config(path, payload)
        with pytest.raises(ConfigValidationError) as exc:
            validate_config(path)
        joined = "\n".join(exc.value.problems)
        assert "seed:" in joined and "model.gamma" in joined and "train.batch_size_B" in joined

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "experiment_id": "E1_temp_margin",\n  "seed": oops\n}\n')
        with pytest.raises(ConfigValidationError) as exc:
            validate_config(path)
        assert "line 3" in exc.value.problems[0]

    def test_unknown_field_reported(self, tmp_path):
        payload = config_to_dict(default_config("E4_concentration", 1, "runs/x"))
        payload["train"]["learning_rate"] = 0.1
        path = tmp_path / "unknown.json"
        write_config(path, payload)
        with pytest.raises(ConfigValidationError) as exc:
            validate_config(path)
        assert any("train.learning_rate" in p for p in exc.value.problems)

    def test_valid_file_roundtrip(self, tmp_path):
        cfg = default_config("E4_concentration", 5, str(tmp_path / "out"))
        path = tmp_path / "ok.json"
        write_config(path, config_to_dict(cfg))
        parsed = validate_config(path)
        assert parsed == cfg

    def test_hash_stable_under_key_reordering(self):
        cfg = default_config("E4_concentration", 5, "runs/x")
        d = config_to_dict(cfg)
        reordered = json.loads(json.dumps(d, sort_keys=True))
        assert config_hash(config_from_dict(reordered)) == config_hash(cfg)


class TestRunExperiments:
    def test_e4_outputs_and_manifest(self, tmp_path):
        cfg = small_e4(tmp_path / "e4")
        manifest = run_experiment(cfg)
        assert set(manifest.files) >= {"concentration.csv", "deviations.csv", "config.json"}
        for name in manifest.files:
            assert os.path.exists(tmp_path / "e4" / name)
        assert os.path.exists(tmp_path / "e4" / "manifest.json")
        rows = (tmp_path / "e4" / "concentration.csv").read_text().strip().split("\n")
        assert rows[0] == "n,mean_abs_dev,se,rms_dev,n_rep"
        assert len(rows) == 3

    def test_e4_rerun_is_byte_identical(self, tmp_path):
        m1 = run_experiment(small_e4(tmp_path / "a"))
        m2 = run_experiment(small_e4(tmp_path / "b"))
        assert m1.config_hash != ""
        for name in m1.files:
            if name.endswith(".csv"):
                assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_e1_outputs(self, tmp_path):
        cfg = small_e1(tmp_path / "e1")
        manifest = run_experiment(cfg)
        assert "margins_untrained.csv" in manifest.files
        assert "margins_tau_0.07.csv" in manifest.files
        assert "margins_tau_0.01.csv" in manifest.files
        summary = (tmp_path / "e1" / "summary.csv").read_text().strip().split("\n")
        assert summary[0] == "label,median_margin,mean_margin,n_values"
        assert len(summary) == 4

    def test_e1_rerun_is_byte_identical(self, tmp_path):
        m1 = run_experiment(small_e1(tmp_path / "a1"))
        run_experiment(small_e1(tmp_path / "b1"))
        for name in m1.files:
            if name.endswith(".csv"):
                assert (tmp_path / "a1" / name).read_bytes() == (tmp_path / "b1" / name).read_bytes()

    def test_different_seed_changes_outputs(self, tmp_path):
        run_experiment(small_e4(tmp_path / "s3", seed=3))
        run_experiment(small_e4(tmp_path / "s4", seed=4))
        a = (tmp_path / "s3" / "deviations.csv").read_bytes()
        b = (tmp_path / "s4" / "deviations.csv").read_bytes()
        assert a != b

    def test_e2_small_schemas(self, tmp_path):
        cfg = default_config("E2_clip_vs_square", seed=3, output_dir=str(tmp_path / "e2"))
        cfg = replace(
            cfg,
            train=replace(cfg.train, iterations_T=50, pool_batches_n=32),
            eval=replace(cfg.eval, n_trials=2000),
        )
        manifest = run_experiment(cfg)
        assert "weights_clip.bin" in manifest.files
        for name in ("zeroshot_clip.csv", "zeroshot_square.csv"):
            rows = (tmp_path / "e2" / name).read_text().strip().split("\n")
            assert rows[0] == "similarity,r,error,se,n_trials"
            assert len(rows) == 4
        summary = (tmp_path / "e2" / "summary.csv").read_text().strip().split("\n")
        assert summary[0] == "model,similarity,error,se,failure_bound"

    def test_e3_small_schemas(self, tmp_path):
        cfg = default_config("E3_regularization", seed=3, output_dir=str(tmp_path / "e3"))
        cfg = replace(
            cfg,
            train=replace(cfg.train, iterations_T=80, pool_batches_n=32),
            eval=replace(cfg.eval, n_trials=1000),
        )
        manifest = run_experiment(cfg)
        assert "margin_fraction_lambda_0.csv" in manifest.files
        assert "margin_fraction_lambda_0.1.csv" in manifest.files
        assert "margin_fraction_negative_ablation.csv" in manifest.files
        rows = (tmp_path / "e3" / "margin_fraction_lambda_0.csv").read_text().strip().split("\n")
        assert rows[0] == "threshold,fraction"
        summary = (tmp_path / "e3" / "summary.csv").read_text().strip().split("\n")
        assert summary[0] == "label,lambda,reg_kind,fraction_at_half_gamma,top1_error"

    def test_e5_small(self, tmp_path):
        cfg = default_config("E5_shifted_prompts", seed=3, output_dir=str(tmp_path / "e5"))
        cfg = replace(
            cfg,
            train=replace(cfg.train, iterations_T=40, pool_batches_n=32),
            eval=replace(cfg.eval, n_trials=2000),
            params=replace(cfg.params, shift_scales=(0.0, 2.0)),
        )
        manifest = run_experiment(cfg)
        assert "shifted.csv" in manifest.files
        rows = (tmp_path / "e5" / "shifted.csv").read_text().strip().split("\n")
        assert rows[0] == "shift,prompt_radius,error,se,n_trials"
        assert len(rows) == 3

    def test_partial_output_cleanup_on_failure(self, tmp_path, monkeypatch):
        cfg = small_e4(tmp_path / "boom")

        import contrastlab.experiments as exp

        def explode(*args, **kwargs):
            raise RuntimeError("synthetic failure")

        monkeypatch.setitem(exp._RUNNERS, "E4_concentration", explode)
        with pytest.raises(RuntimeError, match="synthetic failure"):
            run_experiment(cfg)
        leftovers = [p for p in os.listdir(tmp_path / "boom")] if os.path.exists(tmp_path / "boom") else []
        assert leftovers == []


class TestCli:
    def test_list_experiments(self, capsys):
        assert cli_main(["list-experiments"]) == 0
        out = capsys.readouterr().out
        for eid in EXPERIMENT_IDS:
            assert eid in out

    def test_validate_ok(self, tmp_path, capsys):
        path = tmp_path / "ok.json"
        write_config(path, config_to_dict(default_config("E4_concentration", 1, "runs/x")))
        assert cli_main(["validate", str(path)]) == 0
        assert "valid" in capsys.readouterr().out

    def test_validate_bad_exit_2(self, tmp_path, capsys):
        payload = config_to_dict(default_config("E2_clip_vs_square", 1, "runs/x"))
        payload["model"]["gamma"] = 0.9
        path = tmp_path / "bad.json"
        write_config(path, payload)
        assert cli_main(["validate", str(path)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_file_exit_2(self):
        assert cli_main(["validate", "/nonexistent/nope.json"]) == 2

    def test_run_with_overrides(self, tmp_path, capsys):
        cfg = small_e4(tmp_path / "orig")
        path = tmp_path / "cfg.json"
        write_config(path, config_to_dict(cfg))
        out = tmp_path / "override"
        assert cli_main(["run", str(path), "--out", str(out), "--seed", "9"]) == 0
        assert os.path.exists(out / "manifest.json")
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 9
