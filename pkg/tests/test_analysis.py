import numpy as np
import pytest

from megdecode.analysis import (
    SweepPoint,
    ablation_compare,
    ablation_table_text,
    data_size_sweep,
    format_mean_std,
    nested_subset_indices,
    rms_analysis_rows,
    rms_split_analysis,
)
from megdecode.data import Dataset, GeneratorConfig, synthesize_dataset
from megdecode.errors import ContractError


def drift_dataset(gains, seed=0, n=150):
    cfg = GeneratorConfig(
        channels=4, samples=30, sample_rate_hz=250.0,
        per_class_counts=(n,), snr=5.0, gain_drift=gains, sessions=2,
    )
    return synthesize_dataset(cfg, seed=seed, split="holdout")


def gain_mixture(seed=0, n=150, gains=(0.5, 2.0)):
    """Half the windows at each fixed session gain: guaranteed two RMS modes."""
    halves = [drift_dataset((g, g), seed=seed, n=n // 2) for g in gains]
    data = np.concatenate([h.data for h in halves])
    labels = np.zeros(len(data), dtype=np.int64)
    return Dataset(data, labels, 250.0, "holdout", ("c0",))


class TestRmsAnalysis:
    def test_drift_mixture_flagged_bimodal(self):
        mixture = gain_mixture(seed=3)
        flat = drift_dataset((1.0, 1.0), seed=3)
        analysis = rms_split_analysis({"holdout": mixture, "test": flat}, bins=30)
        flags = {s.name: s.bimodal for s in analysis.splits}
        assert flags["holdout"] is True
        assert flags["test"] is False

    def test_identical_splits_identical_histograms(self):
        ds = drift_dataset((1.0, 1.0))
        a = Dataset(ds.data, ds.labels, ds.sample_rate_hz, "validation", ds.class_names)
        analysis = rms_split_analysis({"holdout": ds, "validation": a}, bins=20)
        d1, d2 = (s.density for s in analysis.splits)
        assert np.array_equal(d1, d2)

    def test_constant_rms_split_has_zero_std(self):
        data = np.ones((10, 3, 5), dtype=np.float32)
        ds = Dataset(data, np.zeros(10, dtype=int), 250.0, "test", ("c0",))
        analysis = rms_split_analysis({"test": ds}, bins=5)
        assert analysis.splits[0].std == pytest.approx(0.0)

    def test_densities_integrate_to_one(self):
        ds = drift_dataset((0.5, 2.0), seed=9)
        analysis = rms_split_analysis({"holdout": ds}, bins=25)
        widths = np.diff(analysis.bin_edges)
        for s in analysis.splits:
            assert float((s.density * widths).sum()) == pytest.approx(1.0, abs=1e-9)

    def test_shared_bin_edges_and_csv_rows(self):
        a = drift_dataset((1.0, 1.0), seed=1)
        b = drift_dataset((0.5, 2.0), seed=2)
        analysis = rms_split_analysis({"test": a, "holdout": b}, bins=10)
        header, rows = rms_analysis_rows(analysis)
        assert header == ["bin_left", "bin_right", "density_test", "density_holdout"]
        assert len(rows) == 10


class TestAblationCompare:
    def test_identical_variant_reports_no_difference(self):
        scores = {"baseline": [0.8] * 10, "same": [0.8] * 10}
        rows = ablation_compare(scores, "baseline")
        same = next(r for r in rows if r.name == "same")
        assert same.wilcoxon is None
        assert same.note == "no difference"
        assert not same.significant

    def test_constant_shift_is_significant(self):
        scores = {"baseline": [0.87] * 10, "worse": [0.78] * 10}
        rows = ablation_compare(scores, "baseline")
        worse = next(r for r in rows if r.name == "worse")
        assert worse.wilcoxon.statistic == 0.0
        assert worse.wilcoxon.p_value == pytest.approx(2.0 / 1024.0)
        assert worse.significant
        assert worse.relative_delta == pytest.approx((0.78 - 0.87) / 0.87)

    def test_formatting_convention(self):
        assert format_mean_std(0.8759, 0.0070) == "87.59 ± 0.70"

    def test_table_includes_significance_star(self):
        scores = {"baseline": [0.87] * 10, "worse": [0.78] * 10, "same": [0.87] * 10}
        text = ablation_table_text(ablation_compare(scores, "baseline"))
        lines = text.splitlines()
        worse_line = next(l for l in lines if l.startswith("worse"))
        same_line = next(l for l in lines if l.startswith("same"))
        assert worse_line.rstrip().endswith("*")
        assert not same_line.rstrip().endswith("*")

    def test_unequal_seed_counts_rejected(self):
        with pytest.raises(ContractError):
            ablation_compare({"baseline": [1, 2], "v": [1, 2, 3]}, "baseline")

    def test_near_significant_case_not_flagged(self):
        rng = np.random.default_rng(0)
        base = rng.normal(0.8, 0.01, size=10)
        variant = base + rng.normal(0.0, 0.02, size=10)
        rows = ablation_compare({"baseline": base, "v": variant}, "baseline")
        row = next(r for r in rows if r.name == "v")
        assert (row.wilcoxon.p_value <= 0.01) == row.significant


class TestNestedSubsets:
    def test_prefix_property(self):
        labels = np.repeat(np.arange(4), 40)
        small = set(nested_subset_indices(labels, 0.25, seed=5))
        large = set(nested_subset_indices(labels, 0.5, seed=5))
        assert small <= large

    def test_stratified_and_nonempty(self):
        labels = np.repeat(np.arange(3), 20)
        idx = nested_subset_indices(labels, 0.1, seed=0)
        assert len(idx) == 6  # ceil(0.1 * 20) = 2 per class
        assert set(labels[idx]) == {0, 1, 2}

    def test_fraction_one_is_everything(self):
        labels = np.repeat(np.arange(2), 10)
        idx = nested_subset_indices(labels, 1.0, seed=1)
        assert len(idx) == 20

    def test_invalid_fraction_rejected(self):
        with pytest.raises(ContractError):
            nested_subset_indices(np.zeros(5, dtype=int), 0.0, seed=0)


class TestDataSizeSweep:
    def test_sweep_bookkeeping(self):
        cfg = GeneratorConfig(channels=2, samples=8, sample_rate_hz=250.0,
                              per_class_counts=(20, 20), snr=2.0)
        train = synthesize_dataset(cfg, seed=0, split="train")
        seen = []

        def run_training(subset, seed):
            seen.append((len(subset), seed))
            return len(subset) / len(train)  # monotone stand-in score

        points = data_size_sweep(train, [0.25, 0.5, 1.0], [0, 1], run_training)
        assert [p.fraction for p in points] == [0.25, 0.5, 1.0]
        assert points[-1].n_train == 40
        assert points[0].mean <= points[-1].mean
        assert all(len(p.scores) == 2 for p in points)

    def test_fractions_must_ascend(self):
        cfg = GeneratorConfig(channels=2, samples=8, sample_rate_hz=250.0,
                              per_class_counts=(4,), snr=2.0)
        train = synthesize_dataset(cfg, seed=0)
        with pytest.raises(ContractError):
            data_size_sweep(train, [0.5, 0.25], [0], lambda s, x: 0.0)
