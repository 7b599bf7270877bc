"""Training loop: per-epoch batch construction (dynamic grouping for the
multiclass task, stride-based sliding windows with augmentation for the
binary detector), AdamW updates, early stopping on validation F1-macro, and
the seeded multi-run protocol."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .autodiff import Tensor
from .checkpoint import save_checkpoint
from .data import Dataset, averaged_arrays, make_grouping_plan
from .errors import ContractError, TrainingDivergedError
from .inference import predict_proba
from .losses import LossConfig, attach_loss, batch_loss
from .metrics import confusion_metrics
from .model import ConformerModel, ModelConfig, forward, init_parameters
from .optim import AdamW, TrainConfig
from .signals import AugmentConfig, MegWindow, augment_window, slide_offsets
from .io_utils import write_json, write_jsonl


def _augment_batch(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator, rate: float) -> np.ndarray:
    out = np.empty_like(x)
    for i in range(len(x)):
        out[i] = augment_window(MegWindow(x[i], rate), cfg, rng).data
    return out


class WindowClassificationTask:
    """Fixed-window classification with optional per-epoch grouping/averaging
    and optional augmentation of the training windows."""

    def __init__(
        self,
        train: Dataset,
        validation: Dataset,
        group_size: int | None = None,
        augment: AugmentConfig | None = None,
        eval_averaged: bool | None = None,
        freeze_groups: bool = False,
        binary: bool = False,
    ):
        if len(train) == 0 or len(validation) == 0:
            raise ContractError("train and validation splits must be nonempty")
        self.train = train
        self.validation = validation
        self.group_size = group_size
        self.augment = augment
        self.freeze_groups = freeze_groups
        self.binary = binary
        # by default validation mirrors training: averaged when grouping is on
        self.eval_averaged = (group_size is not None) if eval_averaged is None else eval_averaged
        self._val_cache: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def n_classes(self) -> int:
        return 2 if self.binary else self.train.n_classes

    def training_arrays(self, epoch: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
        if self.group_size is None:
            return self.train.data, self.train.labels
        plan_epoch = 0 if self.freeze_groups else epoch
        plan = make_grouping_plan(self.train.labels, self.group_size, seed * 131071 + plan_epoch)
        return averaged_arrays(self.train, plan)

    def training_batches(self, epoch: int, batch_size: int, seed: int,
                         order_rng: np.random.Generator, augment_rng: np.random.Generator):
        x, y = self.training_arrays(epoch, seed)
        perm = order_rng.permutation(len(y))
        for start in range(0, len(perm), batch_size):
            idx = perm[start : start + batch_size]
            xb = x[idx]
            if self.augment is not None:
                xb = _augment_batch(xb, self.augment, augment_rng, self.train.sample_rate_hz)
            yield xb, y[idx]

    def validation_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self._val_cache is None:
            if self.eval_averaged and self.group_size is not None:
                plan = make_grouping_plan(self.validation.labels, self.group_size, 0)
                self._val_cache = averaged_arrays(self.validation, plan)
            else:
                self._val_cache = (self.validation.data, self.validation.labels)
        return self._val_cache


class SpeechDetectionTask:
    """Sliding-window training over a continuous recording; a window is
    positive when at least half of its samples are labeled active."""

    def __init__(
        self,
        train_series: np.ndarray,
        train_labels: np.ndarray,
        val_series: np.ndarray,
        val_labels: np.ndarray,
        window_samples: int,
        stride: int = 60,
        augment: AugmentConfig | None = None,
        sample_rate_hz: float = 250.0,
    ):
        self.window = window_samples
        self.stride = stride
        self.augment = augment
        self.rate = sample_rate_hz
        self.train_series = train_series
        self.val_series = val_series
        self._train = self._windows(train_series, train_labels)
        self._val = self._windows(val_series, val_labels)
        if len(self._train[1]) == 0 or len(self._val[1]) == 0:
            raise ContractError("series too short for a single window")
        self.binary = True

    @property
    def n_classes(self) -> int:
        return 2

    def _windows(self, series: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        offsets = slide_offsets(series.shape[1], self.window, self.stride)
        xs = np.stack([series[:, o : o + self.window] for o in offsets]) if len(offsets) else np.empty((0,))
        ys = np.array(
            [int(labels[o : o + self.window].mean() >= 0.5) for o in offsets], dtype=np.int64
        )
        return xs.astype(np.float32), ys

    def training_batches(self, epoch: int, batch_size: int, seed: int,
                         order_rng: np.random.Generator, augment_rng: np.random.Generator):
        x, y = self._train
        perm = order_rng.permutation(len(y))
        for start in range(0, len(perm), batch_size):
            idx = perm[start : start + batch_size]
            xb = x[idx]
            if self.augment is not None:
                xb = _augment_batch(xb, self.augment, augment_rng, self.rate)
            yield xb, y[idx]

    def validation_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self._val


@dataclass
class FitResult:
    best_epoch: int
    best_val_f1: float
    best_params: dict[str, np.ndarray]
    records: list[dict]
    stopped_epoch: int


def _validation_f1(model: ConformerModel, task) -> float:
    x, y = task.validation_arrays()
    probs = predict_proba(model, x)
    preds = (probs >= 0.5).astype(np.int64) if probs.ndim == 1 else probs.argmax(axis=1)
    return confusion_metrics(y, preds, task.n_classes).f1_macro


def fit(
    model: ConformerModel,
    task,
    loss_cfg: LossConfig,
    cfg: TrainConfig,
    checkpoint_path: str | Path | None = None,
    log_path: str | Path | None = None,
    timing: bool = False,
    epoch_callback: Callable[[dict], None] | None = None,
) -> FitResult:
    """Train with early stopping; returns (and reloads) the best snapshot.

    Validation F1-macro strictly above the best so far resets the patience
    counter; ties keep the earlier checkpoint. The per-epoch log record
    carries wall_seconds = 0.0 unless ``timing`` is set, so that fixed seeds
    reproduce logs bitwise.
    """
    optimizer = AdamW(model.parameters(), cfg)
    best_f1 = -np.inf
    best_epoch = 0
    best_params: dict[str, np.ndarray] | None = None
    since_best = 0
    records: list[dict] = []
    stopped = 0

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.monotonic()
        order_rng = np.random.default_rng([cfg.seed, 0x0DDE, epoch])
        dropout_rng = np.random.default_rng([cfg.seed, 0xD0D0, epoch])
        augment_rng = np.random.default_rng([cfg.seed, 0xA0A0, epoch])
        loss_sum = 0.0
        n_seen = 0
        for xb, yb in task.training_batches(epoch, cfg.batch_size, cfg.seed, order_rng, augment_rng):
            logits = forward(model, xb, mode="train", rng=dropout_rng)
            value, grad = batch_loss(loss_cfg, logits.data, yb)
            if not np.isfinite(value):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            loss_node = attach_loss(logits, value, grad)
            model.zero_grad()
            loss_node.backward()
            optimizer.step()
            loss_sum += value * len(yb)
            n_seen += len(yb)
        train_loss = loss_sum / max(n_seen, 1)
        val_f1 = _validation_f1(model, task)
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_epoch = epoch
            best_params = model.state_arrays()
            since_best = 0
            if checkpoint_path is not None:
                save_checkpoint(
                    checkpoint_path,
                    model,
                    {"seed": cfg.seed, "epoch": epoch, "val_f1_macro": float(val_f1)},
                )
        else:
            since_best += 1
        record = {
            "epoch": epoch,
            "train_loss": float(train_loss),
            "val_f1_macro": float(val_f1),
            "patience_counter": since_best,
            "wall_seconds": round(time.monotonic() - t0, 3) if timing else 0.0,
        }
        records.append(record)
        if epoch_callback is not None:
            epoch_callback(record)
        stopped = epoch
        if since_best >= cfg.patience:
            break

    if best_params is None:
        raise ContractError("no training epochs ran")
    model.load_arrays(best_params)
    if log_path is not None:
        write_jsonl(log_path, records)
    return FitResult(best_epoch, float(best_f1), best_params, records, stopped)


@dataclass(frozen=True)
class TrainingProtocol:
    """Everything multi_seed needs to run one seed end to end."""

    model_cfg: ModelConfig
    train_cfg: TrainConfig
    loss_cfg: LossConfig
    task_factory: Callable[[], object]
    test_eval: Callable[[ConformerModel], dict] | None = None


def run_seed(protocol: TrainingProtocol, seed: int,
             checkpoint_path=None, log_path=None, timing=False) -> tuple[ConformerModel, FitResult, dict]:
    model = init_parameters(protocol.model_cfg, seed)
    cfg = replace(protocol.train_cfg, seed=seed)
    task = protocol.task_factory()
    result = fit(model, task, protocol.loss_cfg, cfg,
                 checkpoint_path=checkpoint_path, log_path=log_path, timing=timing)
    metrics = protocol.test_eval(model) if protocol.test_eval is not None else {}
    return model, result, metrics


def worker_count() -> int:
    """Worker cap from MEGC_THREADS (default 1 = sequential)."""
    try:
        return max(1, int(os.environ.get("MEGC_THREADS", "1")))
    except ValueError:
        return 1


def multi_seed(
    protocol: TrainingProtocol,
    seeds: list[int],
    out_dir: str | Path | None = None,
    strict: bool = False,
    timing: bool = False,
) -> list[dict]:
    """Run fit once per seed; entries sorted by validation F1-macro descending.

    Per-seed failures are recorded in the manifest instead of aborting the
    batch, unless ``strict``.
    """
    if not seeds:
        raise ContractError("need at least one seed")
    out_dir = Path(out_dir) if out_dir is not None else None
    models: dict[int, ConformerModel] = {}

    def run_one(seed: int) -> dict:
        ckpt = out_dir / f"seed{seed}.megc" if out_dir else None
        log = out_dir / f"seed{seed}.log.jsonl" if out_dir else None
        try:
            model, result, metrics = run_seed(protocol, seed, ckpt, log, timing)
        except (TrainingDivergedError, ContractError) as exc:
            if strict:
                raise
            return {"seed": seed, "status": "error", "error": str(exc)}
        models[seed] = model
        return {
            "seed": seed,
            "status": "ok",
            "best_epoch": result.best_epoch,
            "val_f1_macro": result.best_val_f1,
            "checkpoint": str(ckpt) if ckpt else None,
            "test_metrics": metrics,
        }

    workers = worker_count()
    if workers == 1:
        entries = [run_one(seed) for seed in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(run_one, seeds))

    def sort_key(e: dict):
        v = e.get("val_f1_macro")
        return (-(v if v is not None else -np.inf), e["seed"])

    entries.sort(key=sort_key)
    if out_dir is not None:
        write_json(out_dir / "manifest.json", {"seeds": entries})
    for e in entries:
        e["model"] = models.get(e["seed"])
    return entries
