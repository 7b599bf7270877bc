"""Labeled window collections, class weighting, dynamic grouping, synthetic
MEG generation with controllable session drift, and phonetic-feature label
maps, plus the binary dataset containers."""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ContractError
from .io_utils import atomic_write_bytes, read_json
from .signals import MegWindow

SPLITS = ("train", "validation", "test", "holdout")

# 39-symbol ARPAbet-style phoneme inventory
ARPABET_39 = (
    "AA AE AH AO AW AY B CH D DH EH ER EY F G HH IH IY JH K L M N NG "
    "OW OY P R S SH T TH UH UW V W Y Z ZH"
).split()

_VOWELS = {"AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW"}
_VOICELESS = {"P", "T", "K", "CH", "F", "TH", "S", "SH", "HH"}

# default manner-of-articulation sets; editable via FeatureMap JSON documents
DEFAULT_FEATURE_SETS: dict[str, tuple[str, ...]] = {
    "plosive": ("P", "B", "T", "D", "K", "G"),
    "fricative": ("F", "V", "TH", "DH", "S", "Z", "SH", "ZH", "HH"),
    "affricate": ("CH", "JH"),
    "nasal": ("M", "N", "NG"),
    "liquid": ("L", "R"),
    "glide": ("W", "Y"),
    "voicing": tuple(p for p in ARPABET_39 if p not in _VOICELESS),
}


@dataclass(frozen=True)
class Dataset:
    """Stacked windows [N, C, T] with integer labels and split metadata."""

    data: np.ndarray
    labels: np.ndarray
    sample_rate_hz: float
    split: str
    class_names: tuple[str, ...]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.int64)
        if data.ndim != 3:
            raise ContractError("dataset data must be [N, C, T]")
        if labels.shape != (data.shape[0],):
            raise ContractError("labels length must equal window count")
        if len(labels) and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise ContractError("labels outside class range")
        if self.split not in SPLITS:
            raise ContractError(f"unknown split {self.split!r}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def samples(self) -> int:
        return self.data.shape[2]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def window(self, i: int) -> MegWindow:
        return MegWindow(self.data[i], self.sample_rate_hz)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, indices: np.ndarray) -> "Dataset":
        return replace(self, data=self.data[indices], labels=self.labels[indices])


def compute_class_weights(counts) -> np.ndarray:
    """Weights inversely proportional to sqrt(count), normalized to mean 1."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or len(counts) == 0:
        raise ContractError("counts must be a nonempty vector")
    if np.any(counts < 1):
        raise ContractError("every class count must be >= 1")
    inv = 1.0 / np.sqrt(counts)
    return inv * (len(counts) / inv.sum())


def positive_class_weight(n_pos: int, n_neg: int) -> float:
    """Two-class weight ratio applied to the positive loss term."""
    if n_pos < 1 or n_neg < 1:
        raise ContractError("both class counts must be >= 1")
    return float(np.sqrt(n_neg / n_pos))


@dataclass(frozen=True)
class GroupingPlan:
    group_size: int
    groups: tuple[tuple[int, np.ndarray], ...]  # (class id, member indices)
    epoch_seed: int


def make_grouping_plan(labels, group_size: int, epoch_seed: int) -> GroupingPlan:
    """Per class: permute indices with rng seeded by (epoch_seed, class), then
    chunk into consecutive blocks of exactly group_size; remainders drop."""
    if group_size < 1:
        raise ContractError("group_size must be >= 1")
    labels = np.asarray(labels)
    groups: list[tuple[int, np.ndarray]] = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng = np.random.default_rng([int(epoch_seed), int(cls)])
        perm = rng.permutation(idx)
        for start in range(0, len(perm) - group_size + 1, group_size):
            groups.append((int(cls), perm[start : start + group_size]))
    return GroupingPlan(group_size, tuple(groups), epoch_seed)


def average_group(dataset: Dataset, group: tuple[int, np.ndarray]) -> MegWindow:
    """Element-wise mean of the member windows."""
    cls, indices = group
    if len(indices) == 0:
        raise ContractError("cannot average an empty group")
    if np.any(dataset.labels[indices] != cls):
        raise ContractError("group members must share the group label")
    return MegWindow(dataset.data[indices].mean(axis=0), dataset.sample_rate_hz)


def averaged_arrays(dataset: Dataset, plan: GroupingPlan) -> tuple[np.ndarray, np.ndarray]:
    """Stacked (windows, labels) of all group averages in plan order."""
    xs = np.stack([dataset.data[idx].mean(axis=0) for _, idx in plan.groups])
    ys = np.array([cls for cls, _ in plan.groups], dtype=np.int64)
    return xs.astype(np.float32), ys


# ---------------------------------------------------------------------------
# synthetic data generation


@dataclass(frozen=True)
class GeneratorConfig:
    """Per-split recipe: class templates are spatial mixtures of sinusoid
    banks (drawn once from the dataset seed); each sample is
    session_gain * (template + noise / snr)."""

    channels: int
    samples: int
    sample_rate_hz: float
    per_class_counts: tuple[int, ...]
    snr: float = 2.0
    gain_drift: tuple[float, float] = (1.0, 1.0)
    sessions: int = 4
    template_components: int = 3
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.channels < 1 or self.samples < 1 or self.sample_rate_hz <= 0:
            raise ContractError("invalid window geometry")
        if len(self.per_class_counts) < 1 or any(c < 0 for c in self.per_class_counts):
            raise ContractError("per_class_counts must be nonnegative")
        if not self.snr > 0:
            raise ContractError("snr must be positive (use inf for noiseless)")
        lo, hi = self.gain_drift
        if not (0 < lo <= hi):
            raise ContractError("gain_drift must satisfy 0 < low <= high")
        if self.sessions < 1:
            raise ContractError("sessions must be >= 1")
        names = self.class_names or tuple(f"c{i}" for i in range(len(self.per_class_counts)))
        if len(names) != len(self.per_class_counts):
            raise ContractError("class_names length must match per_class_counts")
        object.__setattr__(self, "class_names", tuple(names))
        object.__setattr__(self, "per_class_counts", tuple(int(c) for c in self.per_class_counts))


def class_templates(cfg: GeneratorConfig, seed: int) -> np.ndarray:
    """Fixed latent spatiotemporal template per class, unit RMS, [C, K, T]->[K,C,T]."""
    rng = np.random.default_rng([int(seed), 0x7E47])
    t = np.arange(cfg.samples) / cfg.sample_rate_hz
    templates = []
    for _ in cfg.per_class_counts:
        freqs = rng.uniform(1.0, cfg.sample_rate_hz / 3.0, size=cfg.template_components)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=cfg.template_components)
        bank = np.sin(2.0 * np.pi * freqs[:, None] * t[None, :] + phases[:, None])
        mixing = rng.normal(size=(cfg.channels, cfg.template_components))
        tpl = mixing @ bank
        tpl /= np.sqrt(np.mean(tpl**2))
        templates.append(tpl)
    return np.stack(templates)


def synthesize_dataset(cfg: GeneratorConfig, seed: int, split: str = "train") -> Dataset:
    templates = class_templates(cfg, seed)
    split_key = SPLITS.index(split)
    noise_rng = np.random.default_rng([int(seed), 0x5A3B, split_key])
    gain_rng = np.random.default_rng([int(seed), 0x6A17, split_key])
    lo, hi = cfg.gain_drift
    session_gains = gain_rng.uniform(lo, hi, size=cfg.sessions)
    sigma = 0.0 if np.isinf(cfg.snr) else 1.0 / cfg.snr

    windows, labels = [], []
    for cls, count in enumerate(cfg.per_class_counts):
        for i in range(count):
            gain = session_gains[i % cfg.sessions]
            noise = noise_rng.normal(size=(cfg.channels, cfg.samples)) * sigma if sigma else 0.0
            windows.append(gain * (templates[cls] + noise))
            labels.append(cls)
    data = (
        np.stack(windows).astype(np.float32)
        if windows
        else np.empty((0, cfg.channels, cfg.samples), dtype=np.float32)
    )
    return Dataset(data, np.array(labels, dtype=np.int64), cfg.sample_rate_hz, split, cfg.class_names)


@dataclass(frozen=True)
class SpeechSeriesConfig:
    """Continuous recording with alternating silence/activity segments."""

    channels: int
    length_samples: int
    sample_rate_hz: float
    segment_samples: tuple[int, int] = (150, 900)
    snr: float = 2.0
    gain_drift: tuple[float, float] = (1.0, 1.0)
    sessions: int = 4
    template_components: int = 3

    def __post_init__(self):
        lo, hi = self.segment_samples
        if not (1 <= lo <= hi <= self.length_samples):
            raise ContractError("segment_samples must satisfy 1 <= low <= high <= length")
        glo, ghi = self.gain_drift
        if not (0 < glo <= ghi):
            raise ContractError("gain_drift must satisfy 0 < low <= high")


def synthesize_speech_series(cfg: SpeechSeriesConfig, seed: int, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
    """(series [C, L], sample labels [L]) — activity segments add a fixed
    broadband template on top of background noise."""
    tpl_rng = np.random.default_rng([int(seed), 0x7E47])
    freqs = tpl_rng.uniform(1.0, cfg.sample_rate_hz / 3.0, size=cfg.template_components)
    phases = tpl_rng.uniform(0.0, 2.0 * np.pi, size=cfg.template_components)
    mixing = tpl_rng.normal(size=(cfg.channels, cfg.template_components))

    split_key = SPLITS.index(split)
    rng = np.random.default_rng([int(seed), 0x5A3B, split_key])
    gain_rng = np.random.default_rng([int(seed), 0x6A17, split_key])
    lo, hi = cfg.gain_drift
    session_gains = gain_rng.uniform(lo, hi, size=cfg.sessions)
    session_len = max(1, cfg.length_samples // cfg.sessions)

    sigma = 0.0 if np.isinf(cfg.snr) else 1.0 / cfg.snr
    series = rng.normal(size=(cfg.channels, cfg.length_samples)) * sigma
    labels = np.zeros(cfg.length_samples, dtype=np.uint8)

    t_all = np.arange(cfg.length_samples) / cfg.sample_rate_hz
    bank = np.sin(2.0 * np.pi * freqs[:, None] * t_all[None, :] + phases[:, None])
    template = mixing @ bank
    template /= np.sqrt(np.mean(template**2))

    pos = 0
    active = False
    smin, smax = cfg.segment_samples
    while pos < cfg.length_samples:
        seg = int(rng.integers(smin, smax + 1))
        end = min(pos + seg, cfg.length_samples)
        if active:
            series[:, pos:end] += template[:, pos:end]
            labels[pos:end] = 1
        pos = end
        active = not active

    for s in range(cfg.sessions):
        a, b = s * session_len, min((s + 1) * session_len, cfg.length_samples)
        series[:, a:b] *= session_gains[s]
    if cfg.sessions * session_len < cfg.length_samples:
        series[:, cfg.sessions * session_len :] *= session_gains[-1]
    return series.astype(np.float32), labels


# ---------------------------------------------------------------------------
# phonetic feature maps


@dataclass(frozen=True)
class FeatureMap:
    name: str
    positive_ids: frozenset[int]

    def __post_init__(self):
        if not self.positive_ids:
            raise ContractError("feature positive set must be nonempty")


def feature_map_from_names(name: str, positive: tuple[str, ...], class_names) -> FeatureMap:
    index = {n: i for i, n in enumerate(class_names)}
    missing = [p for p in positive if p not in index]
    if missing:
        raise ContractError(f"feature symbols not in class names: {missing}")
    return FeatureMap(name, frozenset(index[p] for p in positive))


def default_feature_map(name: str, class_names=ARPABET_39) -> FeatureMap:
    if name not in DEFAULT_FEATURE_SETS:
        raise ContractError(f"unknown feature {name!r}; known: {sorted(DEFAULT_FEATURE_SETS)}")
    return feature_map_from_names(name, DEFAULT_FEATURE_SETS[name], class_names)


def load_feature_map(path: str | Path, class_names) -> FeatureMap:
    doc = read_json(path)
    if not isinstance(doc, dict) or "name" not in doc or "positive" not in doc:
        raise ContractError("feature map document needs 'name' and 'positive' fields")
    return feature_map_from_names(doc["name"], tuple(doc["positive"]), class_names)


def map_to_feature(dataset: Dataset, fm: FeatureMap) -> Dataset:
    """Binary relabeling: 1 iff the phoneme id is in the positive set."""
    if max(fm.positive_ids) >= dataset.n_classes:
        raise ContractError("feature positive ids outside dataset class range")
    labels = np.isin(dataset.labels, sorted(fm.positive_ids)).astype(np.int64)
    return Dataset(
        dataset.data,
        labels,
        dataset.sample_rate_hz,
        dataset.split,
        (f"not_{fm.name}", fm.name),
    )


# ---------------------------------------------------------------------------
# binary containers

WINDOW_MAGIC = b"MEGW"
SERIES_MAGIC = b"MEGS"
CONTAINER_VERSION = 1


def dataset_bytes(ds: Dataset) -> bytes:
    buf = io.BytesIO()
    buf.write(WINDOW_MAGIC)
    buf.write(struct.pack("<I", CONTAINER_VERSION))
    buf.write(struct.pack("<I", len(ds)))
    buf.write(struct.pack("<I", ds.channels))
    buf.write(struct.pack("<I", ds.samples))
    buf.write(struct.pack("<f", ds.sample_rate_hz))
    buf.write(struct.pack("<H", ds.n_classes))
    for name in ds.class_names:
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
    buf.write(np.ascontiguousarray(ds.labels, dtype="<u2").tobytes())
    buf.write(np.ascontiguousarray(ds.data, dtype="<f4").tobytes())
    return buf.getvalue()


def save_dataset(path: str | Path, ds: Dataset) -> None:
    atomic_write_bytes(path, dataset_bytes(ds))


def load_dataset(path: str | Path, split: str | None = None) -> Dataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    view = memoryview(raw)
    if bytes(view[:4]) != WINDOW_MAGIC:
        raise ContractError("not a window dataset container (bad magic)")
    offset = 4
    version, n, channels, samples = struct.unpack_from("<IIII", view, offset)
    offset += 16
    if version != CONTAINER_VERSION:
        raise ContractError(f"unsupported container version {version}")
    (rate,) = struct.unpack_from("<f", view, offset)
    offset += 4
    (n_classes,) = struct.unpack_from("<H", view, offset)
    offset += 2
    names = []
    for _ in range(n_classes):
        (ln,) = struct.unpack_from("<H", view, offset)
        offset += 2
        names.append(bytes(view[offset : offset + ln]).decode("utf-8"))
        offset += ln
    labels = np.frombuffer(view, dtype="<u2", count=n, offset=offset).astype(np.int64)
    offset += 2 * n
    data = np.frombuffer(view, dtype="<f4", count=n * channels * samples, offset=offset)
    data = data.reshape(n, channels, samples)
    split = split or _split_from_name(path)
    return Dataset(data, labels, float(rate), split, tuple(names))


def series_bytes(series: np.ndarray, labels: np.ndarray, sample_rate_hz: float) -> bytes:
    channels, length = series.shape
    if labels.shape != (length,):
        raise ContractError("label length must equal series length")
    buf = io.BytesIO()
    buf.write(SERIES_MAGIC)
    buf.write(struct.pack("<I", CONTAINER_VERSION))
    buf.write(struct.pack("<I", channels))
    buf.write(struct.pack("<I", length))
    buf.write(struct.pack("<f", sample_rate_hz))
    buf.write(np.ascontiguousarray(labels, dtype="<u1").tobytes())
    buf.write(np.ascontiguousarray(series, dtype="<f4").tobytes())
    return buf.getvalue()


def save_series(path: str | Path, series: np.ndarray, labels: np.ndarray, sample_rate_hz: float) -> None:
    atomic_write_bytes(path, series_bytes(series, labels, sample_rate_hz))


def load_series(path: str | Path) -> tuple[np.ndarray, np.ndarray, float]:
    with open(path, "rb") as fh:
        raw = fh.read()
    view = memoryview(raw)
    if bytes(view[:4]) != SERIES_MAGIC:
        raise ContractError("not a series container (bad magic)")
    offset = 4
    version, channels, length = struct.unpack_from("<III", view, offset)
    offset += 12
    if version != CONTAINER_VERSION:
        raise ContractError(f"unsupported container version {version}")
    (rate,) = struct.unpack_from("<f", view, offset)
    offset += 4
    labels = np.frombuffer(view, dtype="<u1", count=length, offset=offset).copy()
    offset += length
    series = np.frombuffer(view, dtype="<f4", count=channels * length, offset=offset)
    return series.reshape(channels, length).copy(), labels, float(rate)


def _split_from_name(path: str | Path) -> str:
    stem = Path(path).stem.lower()
    for split in SPLITS:
        if split in stem:
            return split
    return "test"


# ---------------------------------------------------------------------------
# generator spec documents (JSON)


def parse_generation_spec(doc: dict) -> dict:
    """Validate a generation document; returns {split: config} plus task kind.

    Shared fields live at the top level, per-split fields under "splits".
    """
    if not isinstance(doc, dict):
        raise ContractError("generation spec must be a JSON object")
    task = doc.get("task", "windows")
    if task not in ("windows", "speech_series"):
        raise ContractError(f"unknown generation task {task!r}")
    if "splits" not in doc or not isinstance(doc["splits"], dict) or not doc["splits"]:
        raise ContractError("generation spec needs a nonempty 'splits' object")
    shared = {k: v for k, v in doc.items() if k not in ("task", "splits")}
    out: dict[str, object] = {"task": task, "splits": {}}
    for split, fields in doc["splits"].items():
        if split not in SPLITS:
            raise ContractError(f"unknown split {split!r} (use one of {SPLITS})")
        merged = {**shared, **fields}
        merged = {k: _tupled(v) for k, v in merged.items()}
        if isinstance(merged.get("snr"), str):
            merged["snr"] = float(merged["snr"])  # accepts "inf"
        try:
            if task == "windows":
                out["splits"][split] = GeneratorConfig(**merged)
            else:
                out["splits"][split] = SpeechSeriesConfig(**merged)
        except TypeError as exc:
            raise ContractError(f"bad field in split {split!r}: {exc}") from exc
    return out


def _tupled(v):
    return tuple(v) if isinstance(v, list) else v
