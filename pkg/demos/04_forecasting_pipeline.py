"""Small end-to-end forecast: sessions -> lagged MI features -> smoothed
targets -> random forest -> participant-balanced 10-fold cross-validation.

Uses a 4-participant cohort and three horizons so the whole run stays
around a couple of minutes; the full 30-participant protocol is exercised
by the acceptance suite (and by the CLI on any larger config).
"""

from vigil.behavior import build_targets
from vigil.connectivity import WindowSpec, extract_lagged
from vigil.dataset import assemble, evaluate, make_folds
from vigil.forest import HyperParams, fit_forest
from vigil.synth import SynthConfig, generate_session

LAGS = (0, 10, 20)
config = SynthConfig(n_participants=4, n_trials=150)
forest_params = HyperParams(
    n_estimators=60, max_features="sqrt", min_samples_leaf=16, max_depth=20
)

print(f"generating {config.n_participants} sessions x {config.n_trials} trials ...")
per_lag = {lag: {} for lag in LAGS}
for ordinal in range(config.n_participants):
    recording, events, _ = generate_session(config, ordinal)
    targets = build_targets(events)
    for lag in LAGS:
        vectors = extract_lagged(recording, events, WindowSpec(lag_s=lag))
        per_lag[lag][recording.participant_id] = (vectors, targets)

print(f"\n{'lag':>4} {'n':>5} {'RMSE (ms)':>16} {'Pearson r':>16}")
for lag in LAGS:
    samples = assemble(per_lag[lag], lag)
    plan = make_folds(samples, k=10, seed=42)

    def train(X, y, fold, _lag=lag):
        return fit_forest(X, y, forest_params, seed=1000 + 10 * _lag + fold)

    report = evaluate(samples, plan, train)
    print(f"{lag:>4} {len(samples):>5} "
          f"{report.rmse_mean:>8.2f} ± {report.rmse_sd:<5.2f} "
          f"{report.r_mean:>8.3f} ± {report.r_sd:<5.3f}")

print("\nthe flat profile across horizons mirrors the slow (~minutes) drift of")
print("the latent arousal state: a window ending 20 s before the stimulus")
print("carries nearly the same information as one ending at the stimulus.")
