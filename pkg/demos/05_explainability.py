"""Attribution and regional statistics for a trained forecasting model.

TreeSHAP distributes every prediction exactly over the 435 connectivity
features (base value + contributions == prediction). Ranking features by
mean |SHAP| recovers the coupled pairs planted by the generator, with the
sign of the feature-vs-SHAP correlation giving the direction of impact.
Aggregating |SHAP| into the 15 region pairs and fitting the mixed model
with crossed channel intercepts then summarizes which regional
connections carry the predictive load.
"""

import numpy as np

from vigil.behavior import build_targets
from vigil.connectivity import WindowSpec, extract_lagged, pair_labels
from vigil.dataset import assemble, to_matrices
from vigil.explain import forest_shap, regional_table, top_k
from vigil.forest import HyperParams, fit_forest
from vigil.ingest import DEFAULT_MONTAGE
from vigil.stats import emm_table, fit_lme, significance_stars
from vigil.synth import SynthConfig, generate_session

config = SynthConfig(n_participants=2, n_trials=100)
print(f"generating {config.n_participants} sessions and extracting detection features ...")
per_participant = {}
for ordinal in range(config.n_participants):
    recording, events, _ = generate_session(config, ordinal)
    vectors = extract_lagged(recording, events, WindowSpec(lag_s=0))
    per_participant[recording.participant_id] = (vectors, build_targets(events))

samples = assemble(per_participant, 0)
X, y = to_matrices(samples)
model = fit_forest(
    X, y, HyperParams(n_estimators=40, max_features="sqrt", min_samples_leaf=8, max_depth=12),
    seed=3, compute_oob=True,
)
print(f"forest refitted on all {len(samples)} samples, OOB R2 = {model.oob_r2:.3f}")

shap = forest_shap(model, X)
residual = np.abs(shap.base_value + shap.phi.sum(axis=1) - model.predict(X)).max()
print(f"local accuracy: max |base + sum(phi) - prediction| = {residual:.2e}")

names = pair_labels(recording.channel_labels)
print("\ntop five features by mean |SHAP|:")
for rank, rep in enumerate(top_k(shap, X, names, k=5), start=1):
    direction = "faster RT" if rep.direction_r < 0 else "slower RT"
    print(f"  {rank}. {rep.pair_label:<9} mean|SHAP| {rep.mean_abs_shap:7.4f}   "
          f"direction r = {rep.direction_r:+.3f} (higher MI -> {direction})")

observations = regional_table(shap, DEFAULT_MONTAGE, recording.channel_labels)
fit = fit_lme(observations)
print(f"\nmixed model on 435 regional observations "
      f"(var chan1 {fit.var_chan1:.3g}, var chan2 {fit.var_chan2:.3g}, "
      f"resid {fit.sigma2_resid:.3g}):")
print(f"{'region pair':>12} {'EMM':>9} {'SE':>8} {'p (FDR)':>10}")
for row in sorted(emm_table(fit), key=lambda r: -r.emm)[:6]:
    stars = significance_stars(row.p_fdr)
    print(f"{row.region_pair:>12} {row.emm:9.4f} {row.se:8.4f} {row.p_fdr:10.4g} {stars}")
