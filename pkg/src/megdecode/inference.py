"""Sliding-window inference, probability decoding, run-length smoothing for
the binary speech track, and majority-vote ensembling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, averaged_arrays, make_grouping_plan
from .errors import ContractError
from .metrics import MetricReport, auroc_macro, confusion_metrics
from .model import ConformerModel, forward
from .signals import slide_offsets


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def batched_logits(model: ConformerModel, windows: np.ndarray, batch_size: int = 64) -> np.ndarray:
    outs = []
    for start in range(0, len(windows), batch_size):
        out = forward(model, windows[start : start + batch_size], mode="eval")
        outs.append(out.data.astype(np.float64))
    if not outs:
        return np.empty((0, model.config.n_outputs))
    return np.concatenate(outs)


def predict_proba(model: ConformerModel, windows: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """[N] positive-class probabilities (single logit) or [N, C] rows summing to 1."""
    logits = batched_logits(model, windows, batch_size)
    if model.config.head == "single_logit":
        return _sigmoid(logits[:, 0])
    return _softmax(logits)


@dataclass(frozen=True)
class PredictionTrack:
    probabilities: np.ndarray  # [N] binary or [N, C]
    stride: int
    sample_rate_hz: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.probabilities)):
            raise ContractError("track probabilities must be finite")


def predict_track(
    model: ConformerModel,
    series: np.ndarray,
    stride: int = 1,
    threshold: float = 0.5,
    sample_rate_hz: float = 250.0,
    batch_size: int = 256,
) -> tuple[PredictionTrack, np.ndarray]:
    """Per-window probabilities and thresholded labels along a recording."""
    window = model.config.window_samples
    offsets = slide_offsets(series.shape[1], window, stride)
    if len(offsets) == 0:
        empty = np.empty(0, dtype=np.float64)
        return PredictionTrack(empty, stride, sample_rate_hz), np.empty(0, dtype=np.int64)
    windows = np.stack([series[:, o : o + window] for o in offsets]).astype(np.float32)
    probs = predict_proba(model, windows, batch_size)
    if probs.ndim == 1:
        labels = (probs >= threshold).astype(np.int64)
    else:
        labels = probs.argmax(axis=1)
    return PredictionTrack(probs, stride, sample_rate_hz), labels


def smooth_runs(labels: np.ndarray, min_run: int) -> np.ndarray:
    """Zero every maximal run of 1s shorter than min_run; idempotent."""
    if min_run < 1:
        raise ContractError("min_run must be >= 1")
    labels = np.asarray(labels)
    out = labels.copy()
    n = len(out)
    i = 0
    while i < n:
        if out[i] == 1:
            j = i
            while j < n and out[j] == 1:
                j += 1
            if j - i < min_run:
                out[i:j] = 0
            i = j
        else:
            i += 1
    return out


def expand_to_samples(values: np.ndarray, window_len: int, stride: int, total_len: int) -> np.ndarray:
    """Map per-window values to per-sample values via the nearest window
    center (windows at offsets 0, stride, ...; center offset + window//2)."""
    n = len(values)
    if n == 0:
        raise ContractError("cannot expand an empty track")
    positions = np.arange(total_len)
    # half-way samples round toward the later window
    nearest = np.floor((positions - window_len // 2) / stride + 0.5).astype(np.int64)
    nearest = np.clip(nearest, 0, n - 1)
    return np.asarray(values)[nearest]


def vote_from_probs(member_probs: np.ndarray) -> np.ndarray:
    """Majority vote over members: [M, N, C] -> [N] class ids.

    Each member votes its argmax; ties break first by the largest summed
    member probability among the tied classes, then by lowest class id.
    """
    member_probs = np.asarray(member_probs)
    if member_probs.ndim != 3:
        raise ContractError("expected member probabilities [M, N, C]")
    m, n, c = member_probs.shape
    votes = member_probs.argmax(axis=2)  # [M, N]
    counts = np.zeros((n, c), dtype=np.int64)
    for i in range(m):
        np.add.at(counts, (np.arange(n), votes[i]), 1)
    prob_mass = member_probs.sum(axis=0)  # [N, C]
    winners = np.empty(n, dtype=np.int64)
    for i in range(n):
        top = counts[i].max()
        tied = np.flatnonzero(counts[i] == top)
        if len(tied) == 1:
            winners[i] = tied[0]
        else:
            mass = prob_mass[i, tied]
            winners[i] = tied[mass == mass.max()].min()
    return winners


class Ensemble:
    """Frozen models voting by majority; members must share the head."""

    def __init__(self, members: list[ConformerModel]):
        if not members:
            raise ContractError("ensemble needs at least one member")
        head = (members[0].config.head, members[0].config.n_classes)
        for m in members[1:]:
            if (m.config.head, m.config.n_classes) != head:
                raise ContractError("ensemble members must share the head configuration")
        self.members = members

    @property
    def config(self):
        return self.members[0].config

    def member_probs(self, windows: np.ndarray, batch_size: int = 64) -> np.ndarray:
        probs = [predict_proba(m, windows, batch_size) for m in self.members]
        stacked = np.stack(probs)
        if stacked.ndim == 2:  # binary: [M, N] -> [M, N, 2]
            stacked = np.stack([1.0 - stacked, stacked], axis=-1)
        return stacked

    def predict(self, windows: np.ndarray, batch_size: int = 64) -> np.ndarray:
        return vote_from_probs(self.member_probs(windows, batch_size))


def majority_vote(ensemble: Ensemble, window: np.ndarray) -> int:
    """Ensemble decision for one window [C, T]."""
    probs = ensemble.member_probs(window[None, ...])
    return int(vote_from_probs(probs)[0])


def evaluate_holdout_protocol(model_or_ensemble, dataset: Dataset) -> np.ndarray:
    """Ordered predicted class ids; input normalization happens inside the
    model forward exactly as configured."""
    if isinstance(model_or_ensemble, Ensemble):
        return model_or_ensemble.predict(dataset.data)
    probs = predict_proba(model_or_ensemble, dataset.data)
    if probs.ndim == 1:
        return (probs >= 0.5).astype(np.int64)
    return probs.argmax(axis=1)


def evaluate_classification(
    model_or_ensemble,
    dataset: Dataset,
    averaged: bool = False,
    group_size: int = 100,
    group_seed: int = 0,
    macro: str = "present",
) -> tuple[MetricReport, np.ndarray]:
    """Metric report (+ per-window predictions) on raw or group-averaged windows."""
    if averaged:
        plan = make_grouping_plan(dataset.labels, group_size, group_seed)
        x, y = averaged_arrays(dataset, plan)
    else:
        x, y = dataset.data, dataset.labels
    n_classes = max(dataset.n_classes, 2)
    if isinstance(model_or_ensemble, Ensemble):
        member_probs = model_or_ensemble.member_probs(x)
        preds = vote_from_probs(member_probs)
        probs = member_probs.mean(axis=0)  # mean probability for ranking metrics
        if model_or_ensemble.config.head == "single_logit":
            probs = probs[:, 1]
    else:
        probs = predict_proba(model_or_ensemble, x)
        preds = (probs >= 0.5).astype(np.int64) if probs.ndim == 1 else probs.argmax(axis=1)
    report = confusion_metrics(y, preds, n_classes, macro=macro)
    try:
        auroc = auroc_macro(y, probs, n_classes)
    except Exception:
        auroc = None
    report = MetricReport(
        f1_macro=report.f1_macro,
        balanced_accuracy=report.balanced_accuracy,
        per_class_f1=report.per_class_f1,
        support=report.support,
        confusion=report.confusion,
        f1_pos=report.f1_pos,
        jaccard=report.jaccard,
        auroc_macro=auroc,
    )
    return report, preds


def evaluate_speech(
    model: ConformerModel,
    series: np.ndarray,
    sample_labels: np.ndarray,
    stride: int = 1,
    threshold: float = 0.5,
    min_run: int = 60,
    sample_rate_hz: float = 250.0,
    macro: str = "present",
) -> tuple[MetricReport, dict]:
    """Stride-and-smooth evaluation of a binary detector on a recording.

    Window probabilities are expanded to sample resolution by nearest window
    center, thresholded, run-length smoothed, then scored against the sample
    labels.
    """
    track, _ = predict_track(model, series, stride, threshold, sample_rate_hz)
    if len(track.probabilities) == 0:
        raise ContractError("series shorter than one model window")
    window = model.config.window_samples
    sample_probs = expand_to_samples(track.probabilities, window, stride, len(sample_labels))
    raw = (sample_probs >= threshold).astype(np.int64)
    smoothed = smooth_runs(raw, min_run)
    report = confusion_metrics(sample_labels, smoothed, 2, macro=macro)
    auroc = auroc_macro(sample_labels, sample_probs, 2)
    report = MetricReport(
        f1_macro=report.f1_macro,
        balanced_accuracy=report.balanced_accuracy,
        per_class_f1=report.per_class_f1,
        support=report.support,
        confusion=report.confusion,
        f1_pos=report.f1_pos,
        jaccard=report.jaccard,
        auroc_macro=auroc,
    )
    detail = {
        "track": track,
        "sample_probabilities": sample_probs,
        "raw_labels": raw,
        "smoothed_labels": smoothed,
    }
    return report, detail
