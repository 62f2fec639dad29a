"""
Layers built from `tensor` operations.

A `Module` finds its parameters by scanning its attributes (nested modules and
lists of modules included), in attribute order, so parameter names are stable
dotted paths such as `conformer.attention.to_qkv.weight`.
"""

from __future__ import annotations

from collections.abc import Iterator
from typing import Any

import numpy as np

from .exceptions import IncompatibleCheckpoint
from .tensor import Tensor, dropout, sqrt, take


class Parameter(Tensor):
    """A tensor the optimizer updates."""

    def __init__(self, data: Any, name: str | None = None, requires_grad: bool = True) -> None:
        super().__init__(data, requires_grad=requires_grad, name=name)


class Module:
    training: bool = True

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    def _children(self) -> Iterator[tuple[str, Module | Parameter]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(value, (Module, Parameter)):
                yield name, value
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, (Module, Parameter)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        found: list[tuple[str, Parameter]] = []
        for name, child in self._children():
            path = f"{prefix}{name}"
            if isinstance(child, Parameter):
                found.append((path, child))
            else:
                found.extend(child.named_parameters(f"{path}."))
        return found

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters() if p.requires_grad]

    def named_buffers(self, prefix: str = "") -> list[tuple[str, np.ndarray]]:
        found: list[tuple[str, np.ndarray]] = [
            (f"{prefix}{name}", value) for name, value in getattr(self, "_buffers", {}).items()
        ]
        for name, child in self._children():
            if isinstance(child, Module):
                found.extend(child.named_buffers(f"{prefix}{name}."))
        return found

    def modules(self) -> Iterator[Module]:
        yield self
        for _, child in self._children():
            if isinstance(child, Module):
                yield from child.modules()

    def train(self, mode: bool = True) -> Module:
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for _, parameter in self.named_parameters():
            parameter.grad = None

    def load_arrays(self, params: dict[str, np.ndarray], buffers: dict[str, np.ndarray]) -> None:
        """
        Copies stored arrays into this module.

        :raises IncompatibleCheckpoint: on missing, unexpected or mis-shaped entries
        """
        own = dict(self.named_parameters())
        if set(own) != set(params):
            missing = sorted(set(own) - set(params))
            unexpected = sorted(set(params) - set(own))
            raise IncompatibleCheckpoint(
                f"parameter names differ (missing {missing}, unexpected {unexpected})"
            )
        for name, parameter in own.items():
            if params[name].shape != parameter.shape:
                raise IncompatibleCheckpoint(
                    f"{name}: stored shape {params[name].shape} != model shape {parameter.shape}"
                )
            parameter.data = np.array(params[name], dtype=parameter.data.dtype)
        owners = {
            f"{prefix}{name}": (module, name)
            for prefix, module in self._named_modules()
            for name in getattr(module, "_buffers", {})
        }
        for name, value in buffers.items():
            if name not in owners:
                raise IncompatibleCheckpoint(f"unexpected buffer {name}")
            module, key = owners[name]
            module._buffers[key] = np.array(value, dtype=module._buffers[key].dtype)

    def _named_modules(self, prefix: str = "") -> Iterator[tuple[str, Module]]:
        yield prefix, self
        for name, child in self._children():
            if isinstance(child, Module):
                yield from child._named_modules(f"{prefix}{name}.")


class Linear(Module):
    """y = x W + b with W stored as [in, out]; init uniform in ±1/sqrt(in)."""

    def __init__(
        self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True
    ) -> None:
        bound = 1.0 / np.sqrt(in_features)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(in_features, out_features)))
        self.bias = Parameter(rng.uniform(-bound, bound, size=(out_features,))) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = x @ self.weight
        return out + self.bias if self.bias is not None else out


class Embedding(Module):
    def __init__(self, weight: np.ndarray, trainable: bool = True) -> None:
        self.weight = Parameter(weight, requires_grad=trainable)

    def forward(self, indices: np.ndarray) -> Tensor:
        return take(self.weight, indices, axis=0)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalizes over the last axis."""
    centered = x - x.mean(axis=-1, keepdims=True)
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / sqrt(variance + eps) * gamma + beta


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5) -> None:
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    mask: np.ndarray | None = None,
    eps: float = 1e-5,
) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """
    Normalizes every feature (last axis) with statistics over all other axes.

    Entries whose `mask` is zero do not contribute to the statistics.

    :returns: output, batch mean, biased batch variance
    """
    axes = tuple(range(x.ndim - 1))
    if mask is None:
        weights = np.ones(x.shape[:-1] + (1,), dtype=x.dtype)
    else:
        weights = np.asarray(mask, dtype=x.dtype)[..., None]
    count = max(float(weights.sum()), 1.0)
    mu = (x * weights).sum(axis=axes, keepdims=True) * (1.0 / count)
    centered = x - mu
    variance = (centered * centered * weights).sum(axis=axes, keepdims=True) * (1.0 / count)
    out = centered / sqrt(variance + eps) * gamma + beta
    return out, mu.data.reshape(-1), variance.data.reshape(-1)


class BatchNorm1d(Module):
    """
    Batch normalization over the feature axis with masked statistics.

    Running statistics use momentum 0.1 and the unbiased batch variance.
    """

    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5) -> None:
        self.gamma = Parameter(np.ones(num_features))
        self.beta = Parameter(np.zeros(num_features))
        self.momentum = momentum
        self.eps = eps
        self._buffers: dict[str, np.ndarray] = {
            "running_mean": np.zeros(num_features, dtype=np.float64),
            "running_var": np.ones(num_features, dtype=np.float64),
        }

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        if not self.training:
            mean = self._buffers["running_mean"].astype(x.dtype)
            std = np.sqrt(self._buffers["running_var"] + self.eps).astype(x.dtype)
            return (x - mean) / std * self.gamma + self.beta
        out, mu, variance = batch_norm(x, self.gamma, self.beta, mask, self.eps)
        count = float(mask.sum()) if mask is not None else float(np.prod(x.shape[:-1]))
        unbiased = variance * count / (count - 1) if count > 1 else variance
        m = self.momentum
        self._buffers["running_mean"] = (1 - m) * self._buffers["running_mean"] + m * mu
        self._buffers["running_var"] = (1 - m) * self._buffers["running_var"] + m * unbiased
        return out


class Dropout(Module):
    def __init__(self, p: float, rng: np.random.Generator) -> None:
        self.p = p
        self._rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return dropout(x, self.p, self.training, self._rng)


class Scale(Module):
    """Multiplies its input by one trainable scalar."""

    def __init__(self, value: float) -> None:
        self.value = Parameter(np.asarray(value))

    def forward(self, x: Tensor) -> Tensor:
        return x * self.value
