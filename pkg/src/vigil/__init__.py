"""Reaction-time forecasting from mutual-information functional connectivity.

The pipeline: load or synthesize multichannel recordings, extract lagged
MI connectivity features, smooth reaction-time targets, fit random-forest
regressors (optionally TPE-tuned), evaluate with participant-balanced
cross-validation, attribute predictions with exact TreeSHAP, and summarize
regional contributions with a crossed-random-intercepts mixed model.
"""

from .behavior import build_targets, classify_trial, smooth_rt
from .connectivity import (
    ConnectivityVector,
    WindowSpec,
    epoch_mi,
    extract_lagged,
    mi_from_joint,
    pair_index,
    pair_labels,
    quantile_bins,
    unpair,
    window_features,
)
from .dataset import EvalReport, FoldPlan, Sample, assemble, evaluate, make_folds
from .explain import ShapMatrix, forest_shap, regional_table, top_k, tree_shap
from .forest import (
    PAPER_TUNED,
    Forest,
    HyperParams,
    Tree,
    fit_forest,
    fit_tree,
    load_forest,
    oob_score,
    save_forest,
)
from .ingest import (
    CHANNELS_30,
    DEFAULT_MONTAGE,
    EventLog,
    Montage,
    Recording,
    Trial,
    bandpass_fir,
    common_average_reference,
    downsample,
    load_events,
    load_recording,
    save_events,
    save_recording,
)
from .stats import bh_fdr, emm_table, fit_lme, paired_t, pearson
from .synth import (
    SynthConfig,
    brute_shapley,
    discrete_mi_oracle,
    gaussian_mi_oracle,
    generate_session,
)
from .tpe import SearchSpace, TpeConfig, TpeTrial, tpe_suggest, tune

__version__ = "0.1.0"
