import math

import numpy as np
import pytest

from vigil.behavior import VALID, classify_trial
from vigil.connectivity import WindowSpec, pair_index, window_features
from vigil.dataset import pearson_r
from vigil.explain import tree_shap
from vigil.forest import HyperParams, fit_tree
from vigil.synth import (
    CoupledPair,
    SynthConfig,
    brute_shapley,
    discrete_mi_oracle,
    gaussian_mi_oracle,
    generate_session,
    write_truth_csv,
)

TINY = SynthConfig(n_participants=2, n_trials=50)


@pytest.fixture(scope="module")
def tiny_session():
    return generate_session(TINY, 0)


class TestOracles:
    def test_gaussian_zero(self):
        assert gaussian_mi_oracle(0.0) == 0.0

    def test_gaussian_closed_form(self):
        assert gaussian_mi_oracle(0.8) == pytest.approx(-0.5 * math.log(0.36), abs=1e-12)
        assert gaussian_mi_oracle(0.8) == pytest.approx(0.5108256, abs=1e-6)

    def test_gaussian_sign_symmetry(self):
        for rho in (0.1, 0.35, 0.9):
            assert gaussian_mi_oracle(rho) == gaussian_mi_oracle(-rho)

    def test_gaussian_domain(self):
        with pytest.raises(ValueError):
            gaussian_mi_oracle(1.0)

    def test_discrete_identity_table(self):
        n = 4
        table = np.eye(n) / n
        assert discrete_mi_oracle(table) == pytest.approx(math.log(n), abs=1e-12)

    def test_discrete_four_cell(self):
        assert discrete_mi_oracle([[0.4, 0.1], [0.1, 0.4]]) == pytest.approx(
            0.19274475702175753, abs=1e-12
        )

    def test_discrete_outer_product(self):
        px = np.array([0.3, 0.7])
        py = np.array([0.6, 0.4])
        assert discrete_mi_oracle(np.outer(px, py)) == pytest.approx(0.0, abs=1e-12)

    def test_discrete_requires_normalization(self):
        with pytest.raises(ValueError, match="sums"):
            discrete_mi_oracle([[0.5, 0.2], [0.1, 0.1]])
        with pytest.raises(ValueError, match="non-negative"):
            discrete_mi_oracle([[1.2, -0.2], [0.0, 0.0]])


class TestBruteShapley:
    def test_leaf_tree_no_players(self):
        from vigil.forest import Tree

        tree = Tree(
            feature=np.array([-1]),
            threshold=np.array([0.0]),
            left=np.array([-1]),
            right=np.array([-1]),
            value=np.array([2.0]),
            cover=np.array([5.0]),
        )
        phi = brute_shapley(tree, np.zeros(4))
        assert np.array_equal(phi, np.zeros(4))

    def test_single_player_is_prediction_minus_base(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((40, 1))
        y = (X[:, 0] > 0).astype(float)
        params = HyperParams(n_estimators=1, max_features=1.0, min_samples_leaf=5, max_depth=3)
        tree = fit_tree(X, y, np.arange(40), params, rng)
        x = X[0]
        phi = brute_shapley(tree, x)
        pred = tree.predict(x[None, :])[0]
        base = float((tree.value[tree.feature < 0] * tree.cover[tree.feature < 0]).sum() / tree.cover[0])
        assert phi[0] == pytest.approx(pred - base, abs=1e-12)

    def test_agrees_with_tree_shap(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((60, 3))
        y = rng.standard_normal(60)
        params = HyperParams(n_estimators=1, max_features=1.0, min_samples_leaf=3, max_depth=3)
        tree = fit_tree(X, y, np.arange(60), params, rng)
        for row in range(5):
            assert np.abs(brute_shapley(tree, X[row]) - tree_shap(tree, X[row])[0]).max() < 1e-9

    def test_player_guard(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((300, 20))
        y = rng.standard_normal(300)
        params = HyperParams(n_estimators=1, max_features=1.0, min_samples_leaf=2, max_depth=10)
        tree = fit_tree(X, y, np.arange(300), params, rng)
        if len({int(f) for f in tree.feature if f >= 0}) > 12:
            with pytest.raises(ValueError, match="guard"):
                brute_shapley(tree, X[0])


class TestGenerator:
    def test_deterministic_per_seed_and_participant(self):
        rec1, ev1, tr1 = generate_session(TINY, 1)
        rec2, ev2, tr2 = generate_session(TINY, 1)
        assert np.array_equal(rec1.samples, rec2.samples)
        assert ev1 == ev2
        assert np.array_equal(tr1.arousal, tr2.arousal)
        rec3, _, _ = generate_session(TINY, 0)
        assert not np.array_equal(rec1.samples, rec3.samples)

    def test_trial_structure(self, tiny_session):
        rec, events, truth = tiny_session
        assert len(events) == 50
        onsets = np.array([t.onset_s for t in events])
        gaps = np.diff(onsets)
        # next stimulus: >= 2 s ISI plus response display time (>= 1 s feedback)
        assert gaps.min() >= 2.0 + TINY.feedback_s
        assert (onsets > 0).all()
        assert truth.trial_arousal.shape == (50,)

    def test_recording_covers_all_trials(self, tiny_session):
        rec, events, _ = tiny_session
        assert rec.duration_s > events.trials[-1].onset_s + 2.0
        assert rec.n_channels == 30
        assert rec.sample_rate_hz == 500.0

    def test_degenerate_config_constant_rt(self):
        cfg = SynthConfig(
            n_participants=1,
            n_trials=20,
            rt_fatigue_gain_ms=0.0,
            rt_noise_sd_ms=0.0,
            false_alarm_rate=0.0,
            lapse_rate=0.0,
            timeout_rate=0.0,
        )
        _, events, _ = generate_session(cfg, 0)
        rts = {t.rt_ms for t in events}
        assert rts == {cfg.rt_base_ms}

    def test_contamination_fraction(self):
        cfg = SynthConfig(n_participants=1, n_trials=400)
        _, events, _ = generate_session(cfg, 3)
        n_valid = sum(1 for t in events if classify_trial(t.rt_ms) == VALID)
        rate = cfg.false_alarm_rate + cfg.lapse_rate + cfg.timeout_rate
        # binomial tolerance: mean 400*(1-rate), sd ~ sqrt(400 p (1-p)) ~ 4.4
        assert n_valid >= 400 * (1.0 - rate) - 4 * math.sqrt(400 * rate * (1 - rate))

    def test_arousal_rt_coupling(self):
        cfg = SynthConfig(n_participants=1, n_trials=400)
        _, events, truth = generate_session(cfg, 4)
        pairs = [
            (truth.trial_arousal[t.index - 1], t.rt_ms)
            for t in events
            if classify_trial(t.rt_ms) == VALID
        ]
        arousal, rts = zip(*pairs)
        assert abs(pearson_r(np.array(arousal), np.array(rts))) >= 0.7

    def test_fatigue_coupled_pair_mi_rises(self):
        cfg = SynthConfig(n_participants=1, n_trials=120)
        rec, events, _ = generate_session(cfg, 5)
        spec = WindowSpec(lag_s=0)
        o1 = rec.channel_labels.index("O1")
        p7 = rec.channel_labels.index("P7")
        k = pair_index(min(o1, p7), max(o1, p7), 30)
        early = [t.onset_s for t in events if 9 <= t.index <= 28]
        late = [t.onset_s for t in events if t.index > 100]
        mi_early = np.mean([window_features(rec, s, spec).values[k] for s in early])
        mi_late = np.mean([window_features(rec, s, spec).values[k] for s in late])
        assert mi_late > mi_early + 0.02

    def test_config_validation(self):
        with pytest.raises(ValueError, match="ISI"):
            SynthConfig(isi_range_s=(1.0, 10.0))
        with pytest.raises(ValueError, match="rate"):
            SynthConfig(false_alarm_rate=1.5)
        with pytest.raises(ValueError, match="not in channel set"):
            SynthConfig(coupling=(CoupledPair("XX", "O1", 0.1, 0.2),))

    def test_truth_csv(self, tmp_path, tiny_session):
        _, _, truth = tiny_session
        write_truth_csv(truth, tmp_path / "truth.csv")
        lines = (tmp_path / "truth.csv").read_text().splitlines()
        assert lines[0] == "t,arousal"
        assert len(lines) == truth.time_s.shape[0] + 1
