import csv
import json
from pathlib import Path

import pytest

from vigil.cli import main

TINY_CONFIG = {
    "seed": 5,
    "synth": {"n_participants": 2, "n_trials": 40},
    "lags": [0, 2],
    "forest": {"n_estimators": 12, "max_features": 0.3, "min_samples_leaf": 4, "max_depth": 10},
    "cv": {"k": 5},
    "train_lag": 0,
    "explain_lag": 0,
    "tpe": {"n_trials": 8, "n_startup": 4, "n_estimators": 8},
}


def write_config(tmp_path, out_name="run", **overrides):
    cfg = dict(TINY_CONFIG)
    cfg.update(overrides)
    cfg["out_dir"] = str(tmp_path / out_name)
    path = tmp_path / f"cfg_{out_name}.json"
    path.write_text(json.dumps(cfg))
    return path, Path(cfg["out_dir"])


def run(cmd, config):
    return main([cmd, "--config", str(config)])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("cli")
    config, out = write_config(tmp_path)
    for cmd in ("synth", "extract", "train", "eval", "explain", "stats", "report"):
        assert run(cmd, config) == 0, f"{cmd} failed"
    return config, out


class TestPipeline:
    def test_synth_outputs(self, pipeline):
        _, out = pipeline
        sessions = out / "sessions"
        for pid in ("synth00", "synth01"):
            assert (sessions / f"{pid}.json").exists()
            assert (sessions / f"{pid}.f32").exists()
            assert (sessions / f"{pid}_events.csv").exists()
            assert (sessions / f"{pid}_truth.csv").exists()

    def test_feature_and_target_files(self, pipeline):
        _, out = pipeline
        for pid in ("synth00", "synth01"):
            for lag in (0, 2):
                path = out / "features" / f"{pid}_lag{lag}.csv"
                assert path.exists()
                header = path.read_text().splitlines()[0].split(",")
                assert header[:2] == ["trial", "lag_s"]
                assert len(header) == 2 + 435
            assert (out / "targets" / f"{pid}.csv").exists()

    def test_eval_table_shape(self, pipeline):
        _, out = pipeline
        with open(out / "eval" / "metrics.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["lag_s", "rmse_mean", "rmse_sd", "r_mean", "r_sd"]
        assert [r[0] for r in rows[1:]] == ["0", "2"]
        for row in rows[1:]:
            assert float(row[1]) > 0
            assert -1.0 <= float(row[3]) <= 1.0
        assert (out / "eval" / "folds_lag0.json").exists()

    def test_model_and_shap_outputs(self, pipeline):
        _, out = pipeline
        model = json.loads((out / "models" / "forest_lag0.json").read_text())
        assert len(model["trees"]) == 12
        assert (out / "shap" / "values_lag0.csv").exists()
        summary = (out / "shap" / "summary_lag0.csv").read_text().splitlines()
        assert len(summary) == 436
        top = json.loads((out / "shap" / "top5_lag0.json").read_text())
        assert len(top) == 5
        assert {e["rank"] for e in top} == {1, 2, 3, 4, 5}

    def test_stats_output(self, pipeline):
        _, out = pipeline
        with open(out / "stats" / "lme_lag0.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["lag_s", "region_pair", "emm", "se", "p", "p_fdr", "stars"]
        assert len(rows) == 16  # 15 region pairs
        pairs = {r[1] for r in rows[1:]}
        assert len(pairs) == 15

    def test_report_cites_artifacts(self, pipeline):
        _, out = pipeline
        report = (out / "report.md").read_text()
        assert "## Cross-validated forecasting performance" in report
        assert "## Artifacts" in report
        assert "eval/metrics.csv" in report
        assert "shap/values_lag0.csv" in report

    def test_manifests_have_hash_and_versions(self, pipeline):
        _, out = pipeline
        manifest = json.loads((out / "manifest_eval.json").read_text())
        assert len(manifest["config_hash"]) == 64
        assert manifest["seed"] == 5
        assert "numpy" in manifest["versions"]


class TestPreprocess:
    def test_filter_downsample_car_chain(self, tmp_path):
        config, out = write_config(
            tmp_path,
            out_name="prep",
            synth={"n_participants": 1, "n_trials": 12},
            preprocess={"low_hz": 0.5, "high_hz": 40.0, "order": 300, "downsample_factor": 1},
            lags=[0],
        )
        assert run("synth", config) == 0
        assert run("preprocess", config) == 0
        import numpy as np

        from vigil.ingest import load_recording

        rec = load_recording(out / "preprocessed" / "synth00.json")
        assert np.abs(np.asarray(rec.samples, dtype=np.float64).mean(axis=0)).max() < 1e-6
        assert (out / "preprocessed" / "synth00_events.csv").exists()


class TestErrors:
    def test_missing_config_is_validation_error(self, tmp_path):
        assert main(["synth", "--config", str(tmp_path / "nope.json")]) == 1

    def test_invalid_json_is_validation_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        assert main(["synth", "--config", str(bad)]) == 1

    def test_missing_out_dir(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 1}))
        assert main(["synth", "--config", str(cfg)]) == 1

    def test_bad_lags_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"out_dir": str(tmp_path / "x"), "lags": [0, 25]}))
        assert main(["extract", "--config", str(cfg)]) == 1

    def test_extract_without_sessions(self, tmp_path):
        config, _ = write_config(tmp_path, out_name="empty")
        assert run("extract", config) == 1

    def test_unknown_subcommand_usage_error(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["frobnicate", "--config", "x.json"])

    def test_seed_and_out_overrides(self, tmp_path):
        config, out = write_config(
            tmp_path, out_name="base", synth={"n_participants": 1, "n_trials": 12}, lags=[0]
        )
        other = tmp_path / "elsewhere"
        assert main(["synth", "--config", str(config), "--seed", "99", "--out", str(other)]) == 0
        manifest = json.loads((other / "manifest_synth.json").read_text())
        assert manifest["seed"] == 99
        assert (other / "sessions" / "synth00.json").exists()
        assert not out.exists()
