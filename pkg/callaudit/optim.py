"""AdamW with decoupled weight decay."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .exceptions import IncompatibleCheckpoint
from .nn import Parameter


@dataclass
class OptimizerState:
    """Moments per parameter name plus the hyperparameters they were built with."""

    lr: float = 2.5e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class AdamW:
    """
    AdamW over named parameters.

    Each step first shrinks every weight by `lr * weight_decay` (outside the moments),
    then applies the bias-corrected Adam update. A parameter without a gradient is
    treated as having a zero gradient.
    """

    def __init__(
        self,
        named_parameters: Sequence[tuple[str, Parameter]],
        lr: float = 2.5e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ) -> None:
        self.params: list[tuple[str, Parameter]] = [
            (name, p) for name, p in named_parameters if p.requires_grad
        ]
        self.state = OptimizerState(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
        for name, p in self.params:
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def step(self) -> None:
        state = self.state
        beta1, beta2 = state.betas
        state.step += 1
        t = state.step
        correction1 = 1.0 - beta1**t
        correction2 = 1.0 - beta2**t
        for name, p in self.params:
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            if state.weight_decay:
                p.data = p.data * (1.0 - state.lr * state.weight_decay)
            m = beta1 * state.m[name] + (1.0 - beta1) * grad
            v = beta2 * state.v[name] + (1.0 - beta2) * grad * grad
            state.m[name] = m.astype(p.data.dtype)
            state.v[name] = v.astype(p.data.dtype)
            update = (m / correction1) / (np.sqrt(v / correction2) + state.eps)
            p.data = (p.data - state.lr * update).astype(p.data.dtype)

    def load_state(self, state: OptimizerState) -> None:
        """Adopts stored moments; names and shapes must match this optimizer's parameters."""
        for name, p in self.params:
            if name not in state.m or state.m[name].shape != p.shape:
                raise IncompatibleCheckpoint(f"optimizer state missing or mis-shaped for {name}")
        self.state = state
