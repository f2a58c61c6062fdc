"""Command-line pipeline: synth -> preprocess -> extract -> train/tune ->
eval -> explain -> stats -> report.

Every subcommand reads one JSON config; structured options live there and
only the subcommand, config path, seed override and output override are
flags. All randomness flows from config seeds, so reruns with identical
config produce byte-identical outputs. Logs go to stderr; each invocation
writes a manifest recording the config hash and library versions.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, behavior, connectivity, dataset, explain, forest, stats, synth, tpe
from .ingest import (
    DEFAULT_MONTAGE,
    Montage,
    bandpass_fir,
    common_average_reference,
    downsample,
    load_events,
    load_montage,
    load_recording,
    save_events,
    save_recording,
)

logger = logging.getLogger("vigil")

SUBCOMMANDS = (
    "synth",
    "preprocess",
    "extract",
    "train",
    "tune",
    "eval",
    "explain",
    "stats",
    "report",
)


class ConfigError(ValueError):
    pass


def _load_config(path: str | Path, seed: int | None, out: str | None) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out_dir"] = out
    if "out_dir" not in cfg:
        raise ConfigError("config needs an out_dir (or pass --out)")
    cfg.setdefault("seed", 0)
    lags = cfg.setdefault("lags", list(range(21)))
    if not all(isinstance(l, int) and 0 <= l <= 20 for l in lags):
        raise ConfigError(f"lags must be integers in [0, 20], got {lags}")
    return cfg


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _window_spec(cfg: dict, lag: int) -> connectivity.WindowSpec:
    w = cfg.get("window", {})
    return connectivity.WindowSpec(
        lag_s=lag,
        window_len_s=w.get("window_len_s", 5),
        epoch_len_s=w.get("epoch_len_s", 1),
        n_bins=w.get("n_bins", 8),
    )


def _forest_params(cfg: dict) -> forest.HyperParams:
    f = cfg.get("forest")
    if f is None:
        return forest.PAPER_TUNED
    if isinstance(f, str):
        if f in ("paper-tuned", "paper_tuned"):
            return forest.PAPER_TUNED
        raise ConfigError(f"unknown forest preset {f!r}")
    mf = f.get("max_features", forest.PAPER_TUNED.max_features)
    return forest.HyperParams(
        n_estimators=f.get("n_estimators", 200),
        max_features=mf if isinstance(mf, str) else float(mf),
        min_samples_leaf=f.get("min_samples_leaf", forest.PAPER_TUNED.min_samples_leaf),
        max_depth=f.get("max_depth", forest.PAPER_TUNED.max_depth),
    )


def _montage(cfg: dict) -> Montage:
    path = cfg.get("montage")
    return load_montage(path) if path else DEFAULT_MONTAGE


def _synth_config(cfg: dict) -> synth.SynthConfig:
    overrides = dict(cfg.get("synth", {}))
    if "coupling" in overrides:
        overrides["coupling"] = tuple(
            synth.CoupledPair(**pair) for pair in overrides["coupling"]
        )
    if "channels" in overrides:
        overrides["channels"] = tuple(overrides["channels"])
    if "isi_range_s" in overrides:
        overrides["isi_range_s"] = tuple(overrides["isi_range_s"])
    overrides.setdefault("seed", cfg["seed"])
    try:
        return synth.SynthConfig(**overrides)
    except TypeError as e:
        raise ConfigError(f"bad synth config: {e}")


def _sessions_dir(cfg: dict) -> Path:
    override = cfg.get("recordings_dir")
    if override:
        return Path(override)
    return Path(cfg["out_dir"]) / "sessions"


def _list_recordings(cfg: dict) -> list[Path]:
    rec_dir = _sessions_dir(cfg)
    headers = sorted(rec_dir.glob("*.json"))
    if not headers:
        raise ConfigError(f"no recording headers (*.json) in {rec_dir}")
    return headers


def _derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)).generate_state(1)[0])


def _write_manifest(cfg: dict, command: str) -> None:
    canonical = json.dumps(cfg, sort_keys=True).encode()
    manifest = {
        "command": command,
        "config_hash": hashlib.sha256(canonical).hexdigest(),
        "seed": cfg["seed"],
        "out_dir": str(cfg["out_dir"]),
        "versions": {
            "vigil": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
    }
    path = _out_dir(cfg) / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(cfg: dict) -> None:
    out = _out_dir(cfg) / "sessions"
    out.mkdir(parents=True, exist_ok=True)
    scfg = _synth_config(cfg)
    for ordinal in range(scfg.n_participants):
        rec, events, truth = synth.generate_session(scfg, ordinal)
        save_recording(rec, out / f"{rec.participant_id}.json")
        save_events(events, out / f"{rec.participant_id}_events.csv")
        synth.write_truth_csv(truth, out / f"{rec.participant_id}_truth.csv")
        logger.info("wrote session %s (%d trials, %.0f s)",
                    rec.participant_id, len(events), rec.duration_s)


def cmd_preprocess(cfg: dict) -> None:
    out = _out_dir(cfg) / "preprocessed"
    out.mkdir(parents=True, exist_ok=True)
    p = cfg.get("preprocess", {})
    low = p.get("low_hz", 0.1)
    high = p.get("high_hz", 47.0)
    order = p.get("order", 3300)
    factor = p.get("downsample_factor", 1)
    for header in _list_recordings(cfg):
        rec = load_recording(header)
        rec = bandpass_fir(rec, low, high, order)
        rec = downsample(rec, factor)
        rec = common_average_reference(rec)
        save_recording(rec, out / header.name)
        events_src = header.parent / f"{header.stem}_events.csv"
        if events_src.exists():
            save_events(load_events(events_src), out / events_src.name)
        logger.info("preprocessed %s", header.stem)


def cmd_extract(cfg: dict) -> None:
    base = _out_dir(cfg)
    feat_dir = base / "features"
    targ_dir = base / "targets"
    feat_dir.mkdir(parents=True, exist_ok=True)
    targ_dir.mkdir(parents=True, exist_ok=True)
    for header in _list_recordings(cfg):
        rec = load_recording(header)
        events = load_events(header.parent / f"{header.stem}_events.csv")
        targets = behavior.build_targets(events)
        behavior.write_targets_csv(events, targets, targ_dir / f"{rec.participant_id}.csv")
        for lag in cfg["lags"]:
            spec = _window_spec(cfg, lag)
            vectors = connectivity.extract_lagged(rec, events, spec)
            connectivity.write_features_csv(
                feat_dir / f"{rec.participant_id}_lag{lag}.csv", vectors, rec.channel_labels
            )
        logger.info("extracted features for %s (%d lags)", rec.participant_id, len(cfg["lags"]))


def _assemble_lag(cfg: dict, lag: int) -> list[dataset.Sample]:
    base = Path(cfg["out_dir"])
    feat_dir = base / "features"
    targ_dir = base / "targets"
    per_participant = {}
    for feat_path in sorted(feat_dir.glob(f"*_lag{lag}.csv")):
        pid = feat_path.name[: -len(f"_lag{lag}.csv")]
        targets = behavior.read_targets_csv(targ_dir / f"{pid}.csv")
        vectors = connectivity.read_features_csv(feat_path)
        per_participant[pid] = (vectors, targets)
    if not per_participant:
        raise ConfigError(f"no feature files for lag {lag} under {feat_dir}")
    samples = dataset.assemble(per_participant, lag)
    if not samples:
        raise ConfigError(f"lag {lag}: feature/target join produced no samples")
    return samples


def cmd_train(cfg: dict) -> None:
    lag = cfg.get("train_lag", 0)
    samples = _assemble_lag(cfg, lag)
    X, y = dataset.to_matrices(samples)
    params = _forest_params(cfg)
    model = forest.fit_forest(
        X, y, params, seed=_derived_seed(cfg["seed"], 1, lag), compute_oob=True
    )
    out = _out_dir(cfg) / "models"
    out.mkdir(parents=True, exist_ok=True)
    forest.save_forest(model, out / f"forest_lag{lag}.json")
    logger.info("trained forest at lag %d on %d samples (OOB R2 %.4f)",
                lag, len(samples), model.oob_r2)


def cmd_tune(cfg: dict) -> None:
    lag = cfg.get("train_lag", 0)
    samples = _assemble_lag(cfg, lag)
    X, y = dataset.to_matrices(samples)
    t = cfg.get("tpe", {})
    config = tpe.TpeConfig(
        n_trials=t.get("n_trials", 50),
        gamma=t.get("gamma", 0.25),
        n_startup=t.get("n_startup", 10),
        n_candidates=t.get("n_candidates", 24),
        seed=_derived_seed(cfg["seed"], 2, lag),
    )
    n_estimators = t.get("n_estimators", 200)
    best, history = tpe.tune(X, y, config=config, n_estimators=n_estimators)
    out = _out_dir(cfg) / "models"
    out.mkdir(parents=True, exist_ok=True)
    (out / "tpe_best.json").write_text(
        json.dumps(
            {
                "n_estimators": best.n_estimators,
                "max_features": best.max_features,
                "min_samples_leaf": best.min_samples_leaf,
                "max_depth": best.max_depth,
                "score": max(trial.score for trial in history),
            },
            indent=2,
        )
        + "\n"
    )
    with open(out / "tpe_history.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "max_features", "min_samples_leaf", "max_depth", "oob_r2"])
        for i, trial in enumerate(history):
            writer.writerow(
                [
                    i,
                    trial.params.max_features,
                    trial.params.min_samples_leaf,
                    trial.params.max_depth,
                    repr(trial.score),
                ]
            )
    logger.info("tuning done: best %s", best)


def cmd_eval(cfg: dict) -> None:
    params = _forest_params(cfg)
    cv = cfg.get("cv", {})
    k = cv.get("k", 10)
    contiguous = cv.get("contiguous", False)
    out = _out_dir(cfg) / "eval"
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for lag in cfg["lags"]:
        samples = _assemble_lag(cfg, lag)
        plan = dataset.make_folds(
            samples, k=k, seed=_derived_seed(cfg["seed"], 3, lag), contiguous=contiguous
        )

        def train(X, y, fold, _lag=lag):
            return forest.fit_forest(
                X, y, params, seed=_derived_seed(cfg["seed"], 4, _lag, fold)
            )

        report = dataset.evaluate(samples, plan, train, lag_s=lag)
        dataset.write_folds_json(report, out / f"folds_lag{lag}.json")
        reports.append(report)
        logger.info(
            "lag %d: RMSE %.3f +/- %.3f, r %.3f +/- %.3f",
            lag, report.rmse_mean, report.rmse_sd, report.r_mean, report.r_sd,
        )
    dataset.write_eval_csv(reports, out / "metrics.csv")


def _explain_lags(cfg: dict) -> list[int]:
    if "explain_lags" in cfg:
        return list(cfg["explain_lags"])
    return [cfg.get("explain_lag", 0)]


def cmd_explain(cfg: dict) -> None:
    base = _out_dir(cfg)
    out = base / "shap"
    out.mkdir(parents=True, exist_ok=True)
    montage = _montage(cfg)
    for lag in _explain_lags(cfg):
        samples = _assemble_lag(cfg, lag)
        X, y = dataset.to_matrices(samples)
        model_path = base / "models" / f"forest_lag{lag}.json"
        if model_path.exists():
            model = forest.load_forest(model_path)
            logger.info("explain lag %d: loaded %s", lag, model_path)
        else:
            model = forest.fit_forest(
                X, y, _forest_params(cfg), seed=_derived_seed(cfg["seed"], 1, lag)
            )
            logger.info("explain lag %d: refitted forest on %d samples", lag, len(samples))
        shap = explain.forest_shap(model, X)
        # feature names come from the montage channel ordering of the run
        headers = _list_recordings(cfg)
        labels = load_recording(headers[0]).channel_labels
        names = connectivity.pair_labels(labels)
        explain.write_shap_csv(shap, names, out / f"values_lag{lag}.csv")
        observations = explain.regional_table(shap, montage, labels)
        explain.write_summary_csv(shap, X, names, observations, out / f"summary_lag{lag}.csv")
        k = cfg.get("top_k", 5)
        reports = explain.top_k(shap, X, names, k=k)
        explain.write_top_k_json(reports, out / f"top{k}_lag{lag}.json")
        logger.info("explain lag %d: %d samples, top feature %s",
                    lag, X.shape[0], reports[0].pair_label if reports else "n/a")


def _summary_observations(summary_path: Path) -> list[explain.RegionalObservation]:
    observations = []
    with open(summary_path, newline="") as fh:
        reader = csv.DictReader(fh)
        for i, row in enumerate(reader):
            chan_a, chan_b = row["pair"].split("-")
            observations.append(
                explain.RegionalObservation(
                    feature_index=i,
                    region_pair=row["region_pair"],
                    chan_a=chan_a,
                    chan_b=chan_b,
                    response=float(row["mean_abs_shap"]),
                )
            )
    return observations


def _per_sample_observations(
    values_path: Path, region_pair_of: dict[str, str]
) -> list[explain.RegionalObservation]:
    observations = []
    with open(values_path, newline="") as fh:
        reader = csv.reader(fh)
        pairs = next(reader)[1:]  # first column is the base value
        for row in reader:
            for i, (pair, value) in enumerate(zip(pairs, row[1:])):
                chan_a, chan_b = pair.split("-")
                observations.append(
                    explain.RegionalObservation(
                        feature_index=i,
                        region_pair=region_pair_of[pair],
                        chan_a=chan_a,
                        chan_b=chan_b,
                        response=abs(float(value)),
                    )
                )
    return observations


def cmd_stats(cfg: dict) -> None:
    base = _out_dir(cfg)
    out = base / "stats"
    out.mkdir(parents=True, exist_ok=True)
    for lag in _explain_lags(cfg):
        summary_path = base / "shap" / f"summary_lag{lag}.csv"
        if not summary_path.exists():
            raise ConfigError(f"missing {summary_path}; run explain first")
        observations = _summary_observations(summary_path)
        if cfg.get("lme_per_sample", False):
            region_pair_of = {
                f"{o.chan_a}-{o.chan_b}": o.region_pair for o in observations
            }
            observations = _per_sample_observations(
                base / "shap" / f"values_lag{lag}.csv", region_pair_of
            )
        fit = stats.fit_lme(observations, merge_slots=cfg.get("merge_channel_slots", False))
        table = stats.emm_table(fit)
        with open(out / f"lme_lag{lag}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lag_s", "region_pair", "emm", "se", "p", "p_fdr", "stars"])
            for row in table:
                writer.writerow(
                    [
                        lag,
                        row.region_pair,
                        repr(row.emm),
                        repr(row.se),
                        repr(row.p),
                        repr(row.p_fdr),
                        stats.significance_stars(row.p_fdr),
                    ]
                )
        payload = {
            "lag_s": lag,
            "n_obs": fit.n_obs,
            "converged": fit.converged,
            "reml_deviance": fit.reml_deviance,
            "var_chan1": fit.var_chan1,
            "var_chan2": fit.var_chan2,
            "sigma2_resid": fit.sigma2_resid,
            "emm": [
                {
                    "region_pair": row.region_pair,
                    "emm": row.emm,
                    "se": row.se,
                    "z": row.z,
                    "p": row.p,
                    "p_fdr": row.p_fdr,
                    "significant": row.significant,
                }
                for row in table
            ],
        }
        (out / f"lme_lag{lag}.json").write_text(json.dumps(payload, indent=2) + "\n")
        logger.info(
            "stats lag %d: var(chan1)=%.3g var(chan2)=%.3g resid=%.3g converged=%s",
            lag, fit.var_chan1, fit.var_chan2, fit.sigma2_resid, fit.converged,
        )


def cmd_report(cfg: dict) -> None:
    base = _out_dir(cfg)
    lines = ["# Run report", ""]
    metrics = base / "eval" / "metrics.csv"
    if metrics.exists():
        lines += ["## Cross-validated forecasting performance", ""]
        with open(metrics, newline="") as fh:
            rows = list(csv.reader(fh))
        lines.append("| " + " | ".join(rows[0]) + " |")
        lines.append("|" + "---|" * len(rows[0]))
        for row in rows[1:]:
            rounded = [row[0]] + [f"{float(v):.4f}" for v in row[1:]]
            lines.append("| " + " | ".join(rounded) + " |")
        lines.append("")
    k = cfg.get("top_k", 5)
    for lag in _explain_lags(cfg):
        top_path = base / "shap" / f"top{k}_lag{lag}.json"
        if top_path.exists():
            lines += [f"## Top {k} features (lag {lag} s)", ""]
            for entry in json.loads(top_path.read_text()):
                lines.append(
                    f"{entry['rank']}. `{entry['pair']}` mean |SHAP| = "
                    f"{entry['mean_abs_shap']:.5f}, direction r = {entry['direction_r']:.3f}"
                )
            lines.append("")
        lme_path = base / "stats" / f"lme_lag{lag}.csv"
        if lme_path.exists():
            lines += [f"## Regional mixed-model effects (lag {lag} s)", ""]
            with open(lme_path, newline="") as fh:
                rows = list(csv.reader(fh))
            lines.append("| " + " | ".join(rows[0]) + " |")
            lines.append("|" + "---|" * len(rows[0]))
            for row in rows[1:]:
                pretty = row[:2] + [f"{float(v):.5g}" for v in row[2:6]] + [row[6]]
                lines.append("| " + " | ".join(pretty) + " |")
            lines.append("")
    artifacts = sorted(
        str(p.relative_to(base))
        for p in base.rglob("*")
        if p.is_file() and p.name != "report.md"
    )
    lines += ["## Artifacts", ""]
    lines += [f"- `{a}`" for a in artifacts]
    lines.append("")
    (base / "report.md").write_text("\n".join(lines))
    logger.info("report written with %d artifacts", len(artifacts))


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "extract": cmd_extract,
    "train": cmd_train,
    "tune": cmd_tune,
    "eval": cmd_eval,
    "explain": cmd_explain,
    "stats": cmd_stats,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vigil",
        description="Reaction-time forecasting from MI functional connectivity",
    )
    parser.add_argument("command", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", default=None, help="override config out_dir")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _load_config(args.config, args.seed, args.out)
        COMMANDS[args.command](cfg)
        _write_manifest(cfg, args.command)
    except (ConfigError, ValueError, FileNotFoundError) as e:
        logger.error("%s", e)
        return 1
    except Exception:
        logger.exception("unexpected failure")
        return 2
    return 0


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
