"""Anatomy of one synthetic vigilance session.

A latent arousal trace declines over the session; reaction times track
(1 - arousal) plus noise, and designated channel pairs change their shared
coupling with arousal: O1-P7 tightens as fatigue builds while O1-Oz
loosens. That structure is exactly what the forecasting pipeline is later
expected to recover.
"""

import numpy as np

from vigil.behavior import build_targets, classify_trial
from vigil.connectivity import WindowSpec, pair_index, window_features
from vigil.dataset import pearson_r
from vigil.synth import SynthConfig, generate_session

config = SynthConfig(n_participants=1, n_trials=150)
recording, events, truth = generate_session(config, participant_ordinal=0)

print(f"participant {recording.participant_id}: {recording.n_channels} channels, "
      f"{recording.duration_s:.0f} s at {recording.sample_rate_hz:.0f} Hz")

outcomes = {}
for trial in events:
    outcomes[classify_trial(trial.rt_ms)] = outcomes.get(classify_trial(trial.rt_ms), 0) + 1
print(f"trial outcomes: {outcomes}")

valid = [(t.index, t.rt_ms, truth.trial_arousal[t.index - 1])
         for t in events if classify_trial(t.rt_ms) == "valid"]
idx, rts, arousal = map(np.array, zip(*valid))
print(f"arousal declines {truth.arousal[:30].mean():.2f} -> {truth.arousal[-30:].mean():.2f}; "
      f"corr(arousal, RT) = {pearson_r(arousal, rts):+.3f}")

targets = build_targets(events)
print(f"smoothed targets: {len(targets)} trials, "
      f"first {targets[idx[0]]:.1f} ms, last {targets[idx[-1]]:.1f} ms")

spec = WindowSpec(lag_s=0)
labels = recording.channel_labels
for name_a, name_b in (("O1", "P7"), ("O1", "Oz")):
    i, j = labels.index(name_a), labels.index(name_b)
    k = pair_index(min(i, j), max(i, j), len(labels))
    early = np.mean([window_features(recording, t.onset_s, spec).values[k]
                     for t in events if 9 <= t.index <= 38])
    late = np.mean([window_features(recording, t.onset_s, spec).values[k]
                    for t in events if t.index > 120])
    trend = "rises" if late > early else "falls"
    print(f"MI({name_a}, {name_b}) {trend} with fatigue: "
          f"early {early:.3f} -> late {late:.3f} nats")
