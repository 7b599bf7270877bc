"""Cross-split RMS distribution analysis, variant comparison tables with
paired signed-rank tests, and the data-size sweep harness."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .data import Dataset
from .errors import ContractError, UndefinedTestError
from .signals import rms_energy
from .stats import (
    MODE_PAIRED_TWO_SIDED,
    WilcoxonResult,
    wilcoxon_signed_rank,
)

SIGNIFICANCE_P = 0.01  # flag threshold for variant comparisons


@dataclass(frozen=True)
class SplitRms:
    name: str
    values: np.ndarray
    density: np.ndarray
    mean: float
    std: float
    bimodal: bool


@dataclass(frozen=True)
class RmsAnalysis:
    bin_edges: np.ndarray
    splits: tuple[SplitRms, ...]


def _find_peaks(density: np.ndarray, floor: float) -> list[int]:
    peaks = []
    for i in range(len(density)):
        left = density[i - 1] if i > 0 else -np.inf
        right = density[i + 1] if i + 1 < len(density) else -np.inf
        if density[i] > left and density[i] >= right and density[i] >= floor:
            peaks.append(i)
    return peaks


def _is_bimodal(density: np.ndarray, trough_ratio: float = 0.6, peak_floor: float = 0.2) -> bool:
    """Two local maxima separated by a trough below ``trough_ratio`` of the
    lower peak.

    The density is smoothed with a width-3 moving average first, and maxima
    below ``peak_floor`` of the smoothed maximum are ignored, so single-bin
    sampling noise does not register as a mode.
    """
    if len(density) < 3:
        return False
    smoothed = np.convolve(density, np.ones(3) / 3.0, mode="same")
    peaks = _find_peaks(smoothed, peak_floor * smoothed.max())
    for ai in range(len(peaks)):
        for bi in range(ai + 1, len(peaks)):
            a, b = peaks[ai], peaks[bi]
            trough = smoothed[a + 1 : b].min() if b > a + 1 else np.inf
            if trough < trough_ratio * min(smoothed[a], smoothed[b]):
                return True
    return False


def rms_split_analysis(
    datasets: dict[str, Dataset],
    bins: int | Sequence[float] = 30,
) -> RmsAnalysis:
    """Per-split RMS histograms on shared bin edges with density
    normalization, plus mean/std and a bimodality flag per split."""
    if not datasets:
        raise ContractError("need at least one split")
    values: dict[str, np.ndarray] = {}
    for name, ds in datasets.items():
        if len(ds) == 0:
            continue
        values[name] = np.array([rms_energy(ds.window(i)) for i in range(len(ds))])
    if not values:
        raise ContractError("all splits are empty")

    if isinstance(bins, int):
        lo = min(v.min() for v in values.values())
        hi = max(v.max() for v in values.values())
        if hi <= lo:
            hi = lo + 1e-9
        edges = np.linspace(lo, hi, bins + 1)
    else:
        edges = np.asarray(bins, dtype=np.float64)

    splits = []
    for name, v in values.items():
        density, _ = np.histogram(v, bins=edges, density=True)
        splits.append(
            SplitRms(
                name=name,
                values=v,
                density=density,
                mean=float(v.mean()),
                std=float(v.std()),
                bimodal=_is_bimodal(density),
            )
        )
    return RmsAnalysis(edges, tuple(splits))


def rms_analysis_rows(analysis: RmsAnalysis) -> tuple[list[str], list[list]]:
    """(header, rows) for the shared-bin histogram CSV."""
    header = ["bin_left", "bin_right"] + [f"density_{s.name}" for s in analysis.splits]
    rows = []
    edges = analysis.bin_edges
    for i in range(len(edges) - 1):
        rows.append(
            [float(edges[i]), float(edges[i + 1])]
            + [float(s.density[i]) for s in analysis.splits]
        )
    return header, rows


# ---------------------------------------------------------------------------
# variant comparison


@dataclass(frozen=True)
class VariantRow:
    name: str
    mean: float
    std: float
    relative_delta: float | None  # vs baseline; None for the baseline row
    wilcoxon: WilcoxonResult | None
    significant: bool
    note: str = ""


def format_mean_std(mean: float, std: float, percent: bool = True) -> str:
    scale = 100.0 if percent else 1.0
    return f"{mean * scale:.2f} ± {std * scale:.2f}"


def ablation_compare(
    variant_scores: dict[str, Sequence[float]],
    baseline_name: str,
) -> list[VariantRow]:
    """Mean +/- sample std per variant, relative delta vs the baseline, and a
    paired two-sided signed-rank test (seed-paired scores).

    Identical variants surface "no difference" instead of a p-value.
    """
    if baseline_name not in variant_scores:
        raise ContractError(f"baseline {baseline_name!r} missing from variants")
    base = np.asarray(variant_scores[baseline_name], dtype=np.float64)
    n = len(base)
    rows = []
    for name, scores in variant_scores.items():
        scores = np.asarray(scores, dtype=np.float64)
        if len(scores) != n:
            raise ContractError("every variant needs the same number of seed scores")
        mean = float(scores.mean())
        std = float(scores.std(ddof=1)) if len(scores) > 1 else 0.0
        if name == baseline_name:
            rows.append(VariantRow(name, mean, std, None, None, False))
            continue
        delta = (mean - float(base.mean())) / float(base.mean()) if base.mean() else None
        try:
            res = wilcoxon_signed_rank(scores, base, mode=MODE_PAIRED_TWO_SIDED)
            rows.append(VariantRow(name, mean, std, delta, res, res.p_value <= SIGNIFICANCE_P))
        except UndefinedTestError:
            rows.append(VariantRow(name, mean, std, delta, None, False, note="no difference"))
    return rows


def ablation_table_text(rows: list[VariantRow], metric_name: str = "F1_macro") -> str:
    lines = [f"{'variant':24s} {metric_name + ' (mean ± std)':>22s} {'delta':>9s} {'W':>7s} {'p':>9s} sig"]
    for r in rows:
        delta = f"{r.relative_delta * 100:+.1f}%" if r.relative_delta is not None else "-"
        if r.wilcoxon is not None:
            w = f"{r.wilcoxon.statistic:.1f}"
            p = f"{r.wilcoxon.p_value:.4f}"
        else:
            w = p = r.note or "-"
        star = "*" if r.significant else ""
        lines.append(f"{r.name:24s} {format_mean_std(r.mean, r.std):>22s} {delta:>9s} {w:>7s} {p:>9s} {star}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# data-size sweep


@dataclass(frozen=True)
class SweepPoint:
    fraction: float
    n_train: int
    mean: float
    std: float
    scores: tuple[float, ...]


def nested_subset_indices(labels: np.ndarray, fraction: float, seed: int) -> np.ndarray:
    """Class-stratified nested prefix: the fraction-f set is a subset of any
    larger fraction's set for the same seed."""
    if not 0.0 < fraction <= 1.0:
        raise ContractError("fraction must be in (0, 1]")
    labels = np.asarray(labels)
    picks = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng = np.random.default_rng([seed, 0xF7AC, int(cls)])
        perm = rng.permutation(idx)
        take = max(1, int(np.ceil(fraction * len(idx))))
        picks.append(perm[:take])
    return np.sort(np.concatenate(picks))


def data_size_sweep(
    train: Dataset,
    fractions: Sequence[float],
    seeds: Sequence[int],
    run_training: Callable[[Dataset, int], float],
) -> list[SweepPoint]:
    """Train on nested subsets per fraction per seed; ``run_training`` maps
    (train subset, seed) to the score on the fixed test split."""
    fr = list(fractions)
    if fr != sorted(fr) or not fr:
        raise ContractError("fractions must be ascending and nonempty")
    points = []
    for fraction in fr:
        scores = []
        n_train = None
        for seed in seeds:
            idx = nested_subset_indices(train.labels, fraction, seed)
            if len(idx) == 0:
                continue
            subset = train.subset(idx)
            n_train = len(subset)
            scores.append(run_training(subset, seed))
        if not scores:
            continue
        arr = np.asarray(scores)
        points.append(
            SweepPoint(
                fraction=float(fraction),
                n_train=int(n_train),
                mean=float(arr.mean()),
                std=float(arr.std(ddof=1)) if len(arr) > 1 else 0.0,
                scores=tuple(float(s) for s in arr),
            )
        )
    return points


def sweep_rows(points: list[SweepPoint]) -> tuple[list[str], list[list]]:
    header = ["fraction", "n_train", "mean", "std"]
    return header, [[p.fraction, p.n_train, p.mean, p.std] for p in points]
