import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from megdecode.data import Dataset, GeneratorConfig, synthesize_dataset
from megdecode.errors import ContractError
from megdecode.inference import (
    Ensemble,
    evaluate_classification,
    evaluate_holdout_protocol,
    expand_to_samples,
    majority_vote,
    predict_track,
    smooth_runs,
    vote_from_probs,
)
from megdecode.model import ModelConfig, forward, init_parameters


def tiny_model(head="single_logit", n_classes=1, seed=0, in_channels=3, window=10):
    cfg = ModelConfig(
        in_channels=in_channels,
        hidden=16,
        num_layers=1,
        num_heads=2,
        ffn_dim=16,
        depthwise_kernel=3,
        window_samples=window,
        head=head,
        n_classes=n_classes,
        dropout=0.0,
    )
    return init_parameters(cfg, seed=seed)


def zero_head(model):
    model.params["head.w"].data = np.zeros_like(model.params["head.w"].data)
    model.params["head.b"].data = np.zeros_like(model.params["head.b"].data)
    return model


class TestPredictTrack:
    def test_constant_zero_logit_gives_half(self):
        model = zero_head(tiny_model())
        series = np.random.default_rng(0).normal(size=(3, 40)).astype(np.float32)
        track, labels = predict_track(model, series, stride=1)
        assert np.all(track.probabilities == 0.5)
        assert np.all(labels == 1)  # probability >= threshold

    def test_count_formula_at_stride_one(self):
        model = zero_head(tiny_model())
        series = np.zeros((3, 55), dtype=np.float32)
        track, _ = predict_track(model, series, stride=1)
        assert len(track.probabilities) == 55 - 10 + 1

    def test_empty_series(self):
        model = tiny_model()
        track, labels = predict_track(model, np.zeros((3, 5), dtype=np.float32))
        assert len(track.probabilities) == 0 and len(labels) == 0

    def test_threshold_monotonicity(self):
        probs = np.array([0.1, 0.49, 0.5, 0.51, 0.9])
        low = probs >= 0.5
        raised = np.minimum(probs + 0.2, 1.0) >= 0.5
        assert np.all(raised.astype(int) >= low.astype(int))


class TestSmoothRuns:
    def test_run_of_59_removed(self):
        seq = np.concatenate([[0], np.ones(59, dtype=int), [0]])
        assert np.all(smooth_runs(seq, 60) == 0)

    def test_run_of_60_survives(self):
        seq = np.concatenate([[0], np.ones(60, dtype=int), [0]])
        assert np.array_equal(smooth_runs(seq, 60), seq)

    def test_empty_sequence(self):
        assert len(smooth_runs(np.array([], dtype=int), 60)) == 0

    @given(
        seed=st.integers(0, 2**31 - 1),
        n=st.integers(0, 300),
        min_run=st.integers(1, 80),
        p=st.floats(0.1, 0.9),
    )
    @settings(max_examples=200, deadline=None)
    def test_properties(self, seed, n, min_run, p):
        rng = np.random.default_rng(seed)
        seq = (rng.random(n) < p).astype(int)
        out = smooth_runs(seq, min_run)
        # never creates ones
        assert np.all(out <= seq)
        # idempotent
        assert np.array_equal(smooth_runs(out, min_run), out)
        # every surviving run is long enough
        for run_len in _run_lengths(out):
            assert run_len >= min_run

    def test_zero_runs_untouched(self):
        seq = np.array([0, 0, 1, 1, 1, 0, 0, 1, 0])
        out = smooth_runs(seq, 2)
        assert np.array_equal(out, [0, 0, 1, 1, 1, 0, 0, 0, 0])


def _run_lengths(seq):
    lengths = []
    count = 0
    for v in seq:
        if v == 1:
            count += 1
        elif count:
            lengths.append(count)
            count = 0
    if count:
        lengths.append(count)
    return lengths


class TestExpandToSamples:
    def test_stride_one_alignment(self):
        values = np.arange(10.0)
        out = expand_to_samples(values, window_len=4, stride=1, total_len=13)
        # first window center at sample 2; everything before maps to window 0
        assert out[0] == 0.0 and out[2] == 0.0
        assert out[-1] == 9.0
        assert len(out) == 13

    def test_strided_nearest_center(self):
        values = np.array([0.0, 1.0])
        out = expand_to_samples(values, window_len=4, stride=4, total_len=8)
        assert np.array_equal(out, [0, 0, 0, 0, 1, 1, 1, 1])


class TestMajorityVote:
    def probs(self, votes, confidences=None):
        # votes: list of class ids per member; 3 classes
        m = len(votes)
        out = np.zeros((m, 1, 3))
        for i, v in enumerate(votes):
            c = 0.9 if confidences is None else confidences[i]
            out[i, 0, :] = (1 - c) / 2
            out[i, 0, v] = c
        return out

    def test_clear_majority(self):
        assert vote_from_probs(self.probs([0, 0, 0, 1, 2]))[0] == 0

    def test_probability_mass_tiebreak(self):
        # two votes each for classes 0 and 1; class 1 holds more mass
        member = np.array(
            [
                [[0.8, 0.15, 0.05]],
                [[0.8, 0.15, 0.05]],
                [[0.05, 0.9, 0.05]],
                [[0.04, 0.95, 0.01]],
                [[0.3, 0.3, 0.4]],
            ]
        )
        assert vote_from_probs(member)[0] == 1

    def test_residual_tie_lowest_class_id(self):
        member = np.array([[[0.6, 0.4, 0.0]], [[0.4, 0.6, 0.0]]])
        # one vote each, equal total mass -> lowest id wins
        assert vote_from_probs(member)[0] == 0

    def test_single_member(self):
        assert vote_from_probs(self.probs([2]))[0] == 2

    def test_member_order_invariance(self):
        rng = np.random.default_rng(0)
        probs = rng.dirichlet(np.ones(4), size=(5, 20)).transpose(0, 1, 2)
        probs = probs.reshape(5, 20, 4)
        base = vote_from_probs(probs)
        for _ in range(5):
            perm = rng.permutation(5)
            assert np.array_equal(vote_from_probs(probs[perm]), base)

    def test_majority_vote_on_models(self):
        models = [tiny_model(head="multiclass", n_classes=3, seed=s) for s in range(3)]
        ens = Ensemble(models)
        window = np.random.default_rng(1).normal(size=(3, 10)).astype(np.float32)
        cls = majority_vote(ens, window)
        assert 0 <= cls < 3

    def test_mismatched_heads_rejected(self):
        with pytest.raises(ContractError):
            Ensemble([
                tiny_model(head="multiclass", n_classes=3),
                tiny_model(head="multiclass", n_classes=4),
            ])


class TestEnsembleProperties:
    def test_oracle_majority_beats_adversaries(self):
        # 3 perfect members + 2 always-wrong members -> perfect votes
        n, c = 12, 4
        rng = np.random.default_rng(3)
        truth = rng.integers(0, c, n)
        oracle = np.zeros((n, c))
        oracle[np.arange(n), truth] = 1.0
        adversary = np.zeros((n, c))
        adversary[np.arange(n), (truth + 1) % c] = 1.0
        member = np.stack([oracle, oracle, oracle, adversary, adversary])
        assert np.array_equal(vote_from_probs(member), truth)

    def test_ensembling_never_hurts_on_oracle_family(self):
        # constructive family: k oracles vs k-1 adversaries for k = 1..4
        n, c = 30, 3
        rng = np.random.default_rng(4)
        truth = rng.integers(0, c, n)
        oracle = np.zeros((n, c))
        oracle[np.arange(n), truth] = 1.0
        adversary = np.zeros((n, c))
        adversary[np.arange(n), (truth + 1) % c] = 1.0
        prev_acc = 0.0
        for k in range(1, 5):
            member = np.stack([oracle] * k + [adversary] * (k - 1))
            acc = float((vote_from_probs(member) == truth).mean())
            assert acc >= prev_acc
            prev_acc = acc


class TestHoldoutProtocol:
    def dataset(self, snr=float("inf")):
        cfg = GeneratorConfig(
            channels=3, samples=10, sample_rate_hz=250.0,
            per_class_counts=(8, 8, 8), snr=snr,
        )
        return synthesize_dataset(cfg, seed=0, split="holdout")

    def test_deterministic(self):
        ds = self.dataset()
        model = tiny_model(head="multiclass", n_classes=3)
        a = evaluate_holdout_protocol(model, ds)
        b = evaluate_holdout_protocol(model, ds)
        assert np.array_equal(a, b)

    def test_output_length_and_range(self):
        ds = self.dataset()
        model = tiny_model(head="multiclass", n_classes=3)
        preds = evaluate_holdout_protocol(model, ds)
        assert preds.shape == (len(ds),)
        assert preds.min() >= 0 and preds.max() < 3

    def test_evaluate_classification_averaged_path(self):
        ds = self.dataset()
        model = tiny_model(head="multiclass", n_classes=3)
        report, preds = evaluate_classification(model, ds, averaged=True, group_size=4)
        assert len(preds) == 6  # 8 per class // 4 per group * 3 classes
        assert report.confusion.sum() == 6
