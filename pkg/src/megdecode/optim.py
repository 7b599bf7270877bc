"""AdamW with decoupled weight decay and bias-corrected moments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import ContractError, TrainingDivergedError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 5e-2
    batch_size: int = 256
    patience: int = 10
    max_epochs: int = 100
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ContractError("learning_rate, batch_size and max_epochs must be positive")
        if self.weight_decay < 0:
            raise ContractError("weight_decay must be nonnegative")
        if self.patience < 1:
            raise ContractError("patience must be >= 1")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_epsilon > 0):
            raise ContractError("invalid Adam moment constants")


def decays(name: str) -> bool:
    """Weight decay applies to weight matrices only, never to biases or norm
    gains/shifts."""
    return name.endswith(".w")


class AdamW:
    def __init__(self, named_params: list[tuple[str, Tensor]], cfg: TrainConfig):
        self.cfg = cfg
        self.named_params = named_params
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in named_params}
        self.v = {name: np.zeros_like(p.data) for name, p in named_params}

    def step(self) -> None:
        cfg = self.cfg
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - cfg.adam_beta1**t
        bc2 = 1.0 - cfg.adam_beta2**t
        for name, p in self.named_params:
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise TrainingDivergedError(
                    f"non-finite gradient in {name} at step {t} "
                    f"(|g|max={np.abs(g[np.isfinite(g)]).max() if np.isfinite(g).any() else 'n/a'})"
                )
            if cfg.weight_decay and decays(name):
                p.data -= cfg.learning_rate * cfg.weight_decay * p.data
            m = self.m[name]
            v = self.v[name]
            m *= cfg.adam_beta1
            m += (1.0 - cfg.adam_beta1) * g
            v *= cfg.adam_beta2
            v += (1.0 - cfg.adam_beta2) * np.square(g)
            mhat = m / bc1
            vhat = v / bc2
            p.data -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_epsilon)
