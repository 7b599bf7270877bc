"""Central finite-difference verification of every autodiff primitive and of
a small end-to-end encoder, all in float64."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import ModelConfig, forward, init_parameters

REL_TOL = 1e-4
_FD_EPS = 1e-5
_DENOM_FLOOR = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_error: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < REL_TOL


def numeric_gradient(f: Callable[[], float], array: np.ndarray) -> np.ndarray:
    """Central differences of f w.r.t. every element of ``array`` (in place)."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        h = _FD_EPS * max(1.0, abs(orig))
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), _DENOM_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom))


def _check_op(
    name: str,
    build: Callable[[list[Tensor]], Tensor],
    leaves: list[Tensor],
    corrupt: bool = False,
) -> CheckResult:
    """FD-check d(sum(out * R))/d(leaf) for every leaf, against backward().

    ``corrupt`` scales the analytic gradient before comparison — a test
    fixture proving that a wrong gradient is reported as a failure.
    """
    rng = np.random.default_rng(sum(name.encode()))
    out = build(leaves)
    probe = rng.normal(size=out.data.shape)

    def loss_value() -> float:
        return float((build(leaves).data * probe).sum())

    loss = ad.sum_all(ad.mul(out, probe))
    for leaf in leaves:
        leaf.grad = None
    loss.backward()
    worst = 0.0
    for leaf in leaves:
        analytic = leaf.grad * 1.01 if corrupt else leaf.grad
        numeric = numeric_gradient(loss_value, leaf.data)
        worst = max(worst, max_relative_error(analytic, numeric))
    return CheckResult(name, worst)


def _leaf(rng, *shape) -> Tensor:
    return Tensor(rng.normal(scale=0.8, size=shape), requires_grad=True)


def primitive_checks(fault_ops: frozenset[str] = frozenset()) -> list[CheckResult]:
    """One finite-difference check per primitive.

    ``fault_ops`` names primitives whose analytic gradient is deliberately
    perturbed before comparison — a fixture for exercising failure reporting.
    """
    rng = np.random.default_rng(20260810)
    results: list[CheckResult] = []

    def run(name: str, build, leaves):
        results.append(_check_op(name, build, leaves, corrupt=name in fault_ops))

    run("add", lambda ls: ad.add(ls[0], ls[1]), [_leaf(rng, 3, 4), _leaf(rng, 4)])
    run("mul", lambda ls: ad.mul(ls[0], ls[1]), [_leaf(rng, 3, 4), _leaf(rng, 3, 1)])
    run("matmul", lambda ls: ad.matmul(ls[0], ls[1]), [_leaf(rng, 2, 3, 4), _leaf(rng, 4, 5)])
    run("reshape", lambda ls: ad.reshape(ls[0], (4, 3)), [_leaf(rng, 3, 4)])
    run("transpose", lambda ls: ad.transpose(ls[0], (1, 0, 2)), [_leaf(rng, 2, 3, 4)])
    run("mean_pool", lambda ls: ad.mean(ls[0], axis=1), [_leaf(rng, 2, 5, 3)])
    run("sigmoid", lambda ls: ad.sigmoid(ls[0]), [_leaf(rng, 3, 4)])
    run("swish", lambda ls: ad.swish(ls[0]), [_leaf(rng, 3, 4)])
    run("glu", lambda ls: ad.glu(ls[0], axis=-1), [_leaf(rng, 3, 6)])
    run("softmax", lambda ls: ad.softmax(ls[0], axis=-1), [_leaf(rng, 2, 3, 5)])
    run(
        "layer_norm",
        lambda ls: ad.axis_norm(ls[0], ls[1], ls[2], axis=-1),
        [_leaf(rng, 2, 3, 5), _leaf(rng, 5), _leaf(rng, 5)],
    )
    run(
        "channel_norm",
        lambda ls: ad.axis_norm(ls[0], ls[1], ls[2], axis=1),
        [_leaf(rng, 2, 6, 3), _leaf(rng, 3), _leaf(rng, 3)],
    )
    run(
        "conv1d",
        lambda ls: ad.conv1d(ls[0], ls[1], ls[2]),
        [_leaf(rng, 2, 3, 7), _leaf(rng, 4, 3, 3), _leaf(rng, 4)],
    )
    run(
        "depthwise_conv1d",
        lambda ls: ad.depthwise_conv1d(ls[0], ls[1], ls[2]),
        [_leaf(rng, 2, 4, 7), _leaf(rng, 4, 5), _leaf(rng, 4)],
    )
    run("dropout_eval", lambda ls: ad.dropout(ls[0], 0.5, None, False), [_leaf(rng, 3, 4)])
    return results


def toy_model_config() -> ModelConfig:
    return ModelConfig(
        in_channels=4,
        hidden=16,
        num_layers=2,
        num_heads=2,
        ffn_dim=24,
        depthwise_kernel=5,
        window_samples=8,
        head="multiclass",
        n_classes=3,
        dropout=0.0,
        input_norm="none",
    )


def model_check(
    config: ModelConfig | None = None, seed: int = 7, batch: int = 1
) -> CheckResult:
    """FD-check every parameter gradient of a small encoder in float64."""
    cfg = config or toy_model_config()
    model = init_parameters(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    x = rng.normal(size=(batch, cfg.in_channels, cfg.window_samples))
    probe = rng.normal(size=(batch, cfg.n_outputs))

    def loss_value() -> float:
        return float((forward(model, x, mode="eval").data * probe).sum())

    loss = ad.sum_all(ad.mul(forward(model, x, mode="eval"), probe))
    model.zero_grad()
    loss.backward()
    worst = 0.0
    for name, p in model.parameters():
        numeric = numeric_gradient(loss_value, p.data)
        worst = max(worst, max_relative_error(p.grad, numeric))
    return CheckResult("toy_conformer", worst)


def run_all(include_model: bool = True, fault_ops: frozenset[str] = frozenset()) -> list[CheckResult]:
    results = primitive_checks(fault_ops=fault_ops)
    if include_model:
        results.append(model_check())
    return results
