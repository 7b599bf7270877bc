"""Conformer encoder with task heads, built on the local autodiff engine.

Layout per block is the macaron sandwich: half-step feed-forward, self
attention, depthwise temporal convolution, half-step feed-forward, each with
a pre-norm residual, then a closing layer norm. A 1-D convolution projects
the raw sensor channels to the hidden size; absolute sinusoidal position
encodings are added once after the projection. Temporal readout is a mean
pool over time followed by a linear head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError
from .signals import instance_normalize_array

HEAD_SINGLE_LOGIT = "single_logit"
HEAD_MULTICLASS = "multiclass"
INPUT_NORMS = ("none", "instance", "batch", "layer")


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int
    hidden: int
    num_layers: int
    num_heads: int
    ffn_dim: int
    depthwise_kernel: int
    window_samples: int
    head: str = HEAD_SINGLE_LOGIT
    n_classes: int = 1
    dropout: float = 0.1
    input_norm: str = "none"
    projection_kernel: int = 3

    def __post_init__(self):
        if self.hidden % self.num_heads:
            raise ContractError("hidden must be divisible by num_heads")
        if self.depthwise_kernel % 2 == 0 or self.projection_kernel % 2 == 0:
            raise ContractError("convolution kernels must be odd")
        if self.input_norm not in INPUT_NORMS:
            raise ContractError(f"unknown input_norm {self.input_norm!r}")
        if self.head not in (HEAD_SINGLE_LOGIT, HEAD_MULTICLASS):
            raise ContractError(f"unknown head {self.head!r}")
        if self.head == HEAD_SINGLE_LOGIT and self.n_classes != 1:
            raise ContractError("single_logit head implies n_classes == 1")
        if self.head == HEAD_MULTICLASS and self.n_classes < 2:
            raise ContractError("multiclass head needs n_classes >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError("dropout must be in [0, 1)")

    @property
    def n_outputs(self) -> int:
        return 1 if self.head == HEAD_SINGLE_LOGIT else self.n_classes


def speech_preset() -> ModelConfig:
    """2.5 s binary speech-activity configuration (Conformer Small sizing)."""
    return ModelConfig(
        in_channels=306,
        hidden=144,
        num_layers=16,
        num_heads=4,
        ffn_dim=576,
        depthwise_kernel=31,
        window_samples=625,
        head=HEAD_SINGLE_LOGIT,
        n_classes=1,
        input_norm="none",
    )


def phoneme_preset() -> ModelConfig:
    """0.5 s 39-way phoneme configuration with instance input normalization."""
    return ModelConfig(
        in_channels=306,
        hidden=144,
        num_layers=7,
        num_heads=12,
        ffn_dim=2048,
        depthwise_kernel=127,
        window_samples=125,
        head=HEAD_MULTICLASS,
        n_classes=39,
        input_norm="instance",
    )


def tiny_preset(
    task: str,
    in_channels: int = 16,
    window_samples: int = 50,
    n_classes: int = 4,
) -> ModelConfig:
    """Desk-scale configuration for CI and synthetic experiments."""
    head = HEAD_SINGLE_LOGIT if task == "speech" else HEAD_MULTICLASS
    return ModelConfig(
        in_channels=in_channels,
        hidden=32,
        num_layers=2,
        num_heads=4,
        ffn_dim=64,
        depthwise_kernel=9,
        window_samples=window_samples,
        head=head,
        n_classes=1 if head == HEAD_SINGLE_LOGIT else n_classes,
        input_norm="none" if task == "speech" else "instance",
    )


def conv1d_out_len(in_len: int, kernel: int, stride: int) -> int:
    """Valid (no padding) conv output length: floor((L - K) / S) + 1."""
    if kernel < 1 or stride < 1:
        raise ContractError("kernel and stride must be >= 1")
    if in_len < kernel:
        return 0
    return (in_len - kernel) // stride + 1


@lru_cache(maxsize=16)
def _positional_encoding(t: int, h: int) -> np.ndarray:
    pos = np.arange(t, dtype=np.float64)[:, None]
    i = np.arange(h, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (i // 2) / h)
    pe = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return pe


class ConformerModel:
    """Configuration plus a flat, ordered name -> parameter-tensor map."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    def parameters(self) -> list[tuple[str, Tensor]]:
        return list(self.params.items())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self.params):
            raise ContractError("parameter name mismatch while loading state")
        for name, p in self.params.items():
            a = np.asarray(arrays[name], dtype=p.data.dtype)
            if a.shape != p.data.shape:
                raise ContractError(f"shape mismatch for {name}")
            p.data = a.copy()


def init_parameters(config: ModelConfig, seed: int, dtype=np.float32) -> ConformerModel:
    """Deterministic init: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    norm gains 1, all biases 0."""
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}

    def uniform(name: str, shape: tuple[int, ...], fan_in: int):
        a = 1.0 / math.sqrt(fan_in)
        params[name] = Tensor(rng.uniform(-a, a, size=shape).astype(dtype), requires_grad=True)

    def zeros(name: str, shape: tuple[int, ...]):
        params[name] = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)

    def ones(name: str, shape: tuple[int, ...]):
        params[name] = Tensor(np.ones(shape, dtype=dtype), requires_grad=True)

    def norm(prefix: str, dim: int):
        ones(f"{prefix}.gain", (dim,))
        zeros(f"{prefix}.bias", (dim,))

    def linear(prefix: str, n_out: int, n_in: int):
        uniform(f"{prefix}.w", (n_out, n_in), n_in)
        zeros(f"{prefix}.b", (n_out,))

    cfg = config
    uniform("proj.w", (cfg.hidden, cfg.in_channels, cfg.projection_kernel), cfg.in_channels * cfg.projection_kernel)
    zeros("proj.b", (cfg.hidden,))
    for i in range(cfg.num_layers):
        b = f"blocks.{i}"
        norm(f"{b}.ffn1.norm", cfg.hidden)
        linear(f"{b}.ffn1.lin1", cfg.ffn_dim, cfg.hidden)
        linear(f"{b}.ffn1.lin2", cfg.hidden, cfg.ffn_dim)
        norm(f"{b}.attn.norm", cfg.hidden)
        for proj in ("q", "k", "v", "out"):
            linear(f"{b}.attn.{proj}", cfg.hidden, cfg.hidden)
        norm(f"{b}.conv.norm", cfg.hidden)
        linear(f"{b}.conv.pw1", 2 * cfg.hidden, cfg.hidden)
        uniform(f"{b}.conv.dw.w", (cfg.hidden, cfg.depthwise_kernel), cfg.depthwise_kernel)
        zeros(f"{b}.conv.dw.b", (cfg.hidden,))
        norm(f"{b}.conv.cnorm", cfg.hidden)
        linear(f"{b}.conv.pw2", cfg.hidden, cfg.hidden)
        norm(f"{b}.ffn2.norm", cfg.hidden)
        linear(f"{b}.ffn2.lin1", cfg.ffn_dim, cfg.hidden)
        linear(f"{b}.ffn2.lin2", cfg.hidden, cfg.ffn_dim)
        norm(f"{b}.norm_out", cfg.hidden)
    norm("final_norm", cfg.hidden)
    linear("head", cfg.n_outputs, cfg.hidden)
    return ConformerModel(cfg, params)


def expected_parameter_count(cfg: ModelConfig) -> int:
    """Closed-form tally of init_parameters, kept separate as a cross-check."""
    h, f, k = cfg.hidden, cfg.ffn_dim, cfg.depthwise_kernel
    proj = cfg.hidden * cfg.in_channels * cfg.projection_kernel + cfg.hidden
    ffn = 2 * h + (f * h + f) + (h * f + h)
    attn = 2 * h + 4 * (h * h + h)
    conv = 2 * h + (2 * h * h + 2 * h) + (h * k + h) + 2 * h + (h * h + h)
    block = ffn + attn + conv + ffn + 2 * h
    head = cfg.n_outputs * h + cfg.n_outputs
    return proj + cfg.num_layers * block + 2 * h + head


# ---------------------------------------------------------------------------
# forward pass


def _linear(x: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    w = params[f"{prefix}.w"]
    b = params[f"{prefix}.b"]
    return ad.add(ad.matmul(x, ad.transpose(w, (1, 0))), b)


def _layer_norm(x: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    return ad.axis_norm(x, params[f"{prefix}.gain"], params[f"{prefix}.bias"], axis=-1)


def _feed_forward(x: Tensor, params, prefix: str, cfg: ModelConfig, mode: str, rng) -> Tensor:
    train = mode == "train"
    h = _layer_norm(x, params, f"{prefix}.norm")
    h = _linear(h, params, f"{prefix}.lin1")
    h = ad.swish(h)
    h = ad.dropout(h, cfg.dropout, rng, train)
    h = _linear(h, params, f"{prefix}.lin2")
    return ad.dropout(h, cfg.dropout, rng, train)


def _self_attention(x: Tensor, params, prefix: str, cfg: ModelConfig, mode: str, rng) -> Tensor:
    train = mode == "train"
    batch, t, hidden = x.shape
    heads = cfg.num_heads
    dh = hidden // heads
    h = _layer_norm(x, params, f"{prefix}.norm")

    def split_heads(v: Tensor) -> Tensor:
        v = ad.reshape(v, (batch, t, heads, dh))
        return ad.transpose(v, (0, 2, 1, 3))

    q = split_heads(_linear(h, params, f"{prefix}.q"))
    k = split_heads(_linear(h, params, f"{prefix}.k"))
    v = split_heads(_linear(h, params, f"{prefix}.v"))
    scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    attn = ad.softmax(scores, axis=-1)
    attn = ad.dropout(attn, cfg.dropout, rng, train)
    ctx = ad.matmul(attn, v)
    ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (batch, t, hidden))
    out = _linear(ctx, params, f"{prefix}.out")
    return ad.dropout(out, cfg.dropout, rng, train)


def _conv_module(x: Tensor, params, prefix: str, cfg: ModelConfig, mode: str, rng) -> Tensor:
    train = mode == "train"
    h = _layer_norm(x, params, f"{prefix}.norm")
    h = _linear(h, params, f"{prefix}.pw1")  # expand to 2H
    h = ad.glu(h, axis=-1)
    h = ad.transpose(h, (0, 2, 1))  # [B,H,T] for the temporal conv
    h = ad.depthwise_conv1d(h, params[f"{prefix}.dw.w"], params[f"{prefix}.dw.b"])
    h = ad.transpose(h, (0, 2, 1))
    # per-sample, per-channel normalization over time (no batch statistics)
    h = ad.axis_norm(h, params[f"{prefix}.cnorm.gain"], params[f"{prefix}.cnorm.bias"], axis=1)
    h = ad.swish(h)
    h = _linear(h, params, f"{prefix}.pw2")
    return ad.dropout(h, cfg.dropout, rng, train)


def conformer_block(
    x: Tensor,
    params: dict[str, Tensor],
    cfg: ModelConfig,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    prefix: str = "",
) -> Tensor:
    """One macaron block over [B, T, H]; parameter names are looked up under
    ``prefix`` (empty for standalone use)."""
    if x.shape[-1] != cfg.hidden:
        raise ContractError(f"expected hidden size {cfg.hidden}, got {x.shape[-1]}")
    p = prefix
    x = ad.add(x, ad.mul(_feed_forward(x, params, f"{p}ffn1", cfg, mode, rng), 0.5))
    x = ad.add(x, _self_attention(x, params, f"{p}attn", cfg, mode, rng))
    x = ad.add(x, _conv_module(x, params, f"{p}conv", cfg, mode, rng))
    x = ad.add(x, ad.mul(_feed_forward(x, params, f"{p}ffn2", cfg, mode, rng), 0.5))
    return ad.axis_norm(x, params[f"{p}norm_out.gain"], params[f"{p}norm_out.bias"], axis=-1)


def _apply_input_norm(batch: np.ndarray, kind: str) -> np.ndarray:
    if kind == "none":
        return batch
    if kind == "instance":
        return instance_normalize_array(batch)
    if kind == "layer":
        mu = batch.mean(axis=1, keepdims=True)
        var = batch.var(axis=1, keepdims=True)
        return ((batch - mu) / np.sqrt(var + 1e-5)).astype(batch.dtype, copy=False)
    if kind == "batch":
        mu = batch.mean(axis=(0, 2), keepdims=True)
        var = batch.var(axis=(0, 2), keepdims=True)
        return ((batch - mu) / np.sqrt(var + 1e-5)).astype(batch.dtype, copy=False)
    raise ContractError(f"unknown input_norm {kind!r}")


def forward(
    model: ConformerModel,
    batch: np.ndarray | Tensor,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Logits for a batch [B, C, T]; B x 1 (single logit) or B x n_classes.

    Eval mode is deterministic. Input normalization treats the batch as a
    constant (no gradient flows into the raw input).
    """
    if mode not in ("train", "eval"):
        raise ContractError(f"unknown mode {mode!r}")
    cfg = model.config
    data = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
    if data.ndim != 3 or data.shape[1] != cfg.in_channels or data.shape[2] != cfg.window_samples:
        raise ContractError(
            f"expected batch [B, {cfg.in_channels}, {cfg.window_samples}], got {data.shape}"
        )
    if mode == "train" and cfg.dropout > 0 and rng is None:
        raise ContractError("train-mode forward requires an rng for dropout")
    train = mode == "train"
    params = model.params

    x = Tensor(_apply_input_norm(data, cfg.input_norm))
    h = ad.conv1d(x, params["proj.w"], params["proj.b"])  # [B,H,T]
    h = ad.transpose(h, (0, 2, 1))  # [B,T,H]
    pe = _positional_encoding(cfg.window_samples, cfg.hidden).astype(data.dtype)
    h = ad.add(h, pe)
    h = ad.dropout(h, cfg.dropout, rng, train)
    for i in range(cfg.num_layers):
        h = conformer_block(h, params, cfg, mode, rng, prefix=f"blocks.{i}.")
    h = ad.axis_norm(h, params["final_norm.gain"], params["final_norm.bias"], axis=-1)
    pooled = ad.mean(h, axis=1)  # [B,H]
    return _linear(pooled, params, "head")
