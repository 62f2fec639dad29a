"""
Configuration models and the flat `key = value` config file format.

Example file::

    # model
    hidden = 128
    learning_rate = 0.00025
    ablation = edge_gcn
    betas = 0.9, 0.999

Values are parsed to the field's type; unknown keys are rejected.
"""

from __future__ import annotations

from enum import StrEnum
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .exceptions import ConfigurationError


class Ablation(StrEnum):
    GCN_ONLY = "gcn_only"
    EDGE_GCN = "edge_gcn"
    EDGE_CLUSTER_GCN = "edge_cluster_gcn"
    FULL = "full"

    @property
    def uses_edge_predictor(self) -> bool:
        return self is not Ablation.GCN_ONLY

    @property
    def uses_cluster(self) -> bool:
        return self in (Ablation.EDGE_CLUSTER_GCN, Ablation.FULL)

    @property
    def uses_conformer(self) -> bool:
        return self is Ablation.FULL


class LossName(StrEnum):
    CROSS_ENTROPY = "cross_entropy"
    BCE_LOGITS = "bce_logits"


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(part.strip() for part in value.split(",") if part.strip())
    return value


class ModelConfig(BaseModel):
    """Architecture and training hyperparameters."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    epochs: int = Field(600, ge=0)
    batch_size: int = Field(30, ge=1)
    learning_rate: float = Field(2.5e-4, ge=0)
    heads: int = Field(8, ge=1)
    head_dim: int = Field(64, ge=1)
    hidden: int = Field(256, ge=1)
    edge_hidden: int = Field(32, ge=1)
    dropout: float = Field(0.2, ge=0, lt=1)
    clusters: int = Field(8, ge=1)
    embedding_dim: int = Field(64, ge=1)
    adj_sq: bool = False
    loss: LossName = LossName.CROSS_ENTROPY
    seed: int = 0
    ablation: Ablation = Ablation.FULL
    ff_mult: int = Field(4, ge=1)
    conv_kernel_size: int = Field(3, ge=1)
    weight_decay: float = Field(0.01, ge=0)
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = Field(1e-8, gt=0)
    class_weights: bool = False
    freeze_embeddings: bool = False
    max_pair_nodes: int = Field(128, ge=2)
    dtype: Literal["float32", "float64"] = "float32"
    val_fraction: float = Field(0.2, gt=0, lt=1)
    eval_workers: int = Field(1, ge=1)

    @field_validator("betas", mode="before")
    @classmethod
    def _parse_betas(cls, value: Any) -> Any:
        return _split_list(value)

    @field_validator("betas")
    @classmethod
    def _check_betas(cls, value: tuple[float, float]) -> tuple[float, float]:
        if not all(0.0 <= b < 1.0 for b in value):
            raise ValueError("betas must lie in [0, 1)")
        return value

    @field_validator("conv_kernel_size")
    @classmethod
    def _odd_kernel(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("conv_kernel_size must be odd")
        return value

    @property
    def num_logits(self) -> int:
        return 1 if self.loss == LossName.BCE_LOGITS else 2


DEFAULT_SWEEP_LEARNING_RATES: tuple[float, ...] = (0.00015, 0.0002, 0.00025, 0.0003)
DEFAULT_SWEEP_HIDDEN_SIZES: tuple[int, ...] = (32, 64, 128, 256, 512)


class RunConfig(ModelConfig):
    """Model settings plus paths and command options."""

    source_dir: Path | None = None
    dot_dir: Path | None = None
    manifest: Path | None = None
    cache: Path | None = None
    checkpoint: Path | None = None
    report: Path | None = None
    out: Path | None = None
    workers: int = Field(1, ge=1)
    learning_rates: tuple[float, ...] = DEFAULT_SWEEP_LEARNING_RATES
    hidden_sizes: tuple[int, ...] = DEFAULT_SWEEP_HIDDEN_SIZES
    variants: tuple[Ablation, ...] = tuple(Ablation)
    losses: tuple[LossName, ...] = (LossName.CROSS_ENTROPY,)
    seeds: tuple[int, ...] = (0,)

    @field_validator("learning_rates", "hidden_sizes", "variants", "losses", "seeds", mode="before")
    @classmethod
    def _parse_lists(cls, value: Any) -> Any:
        return _split_list(value)

    def model_settings(self) -> ModelConfig:
        """The `ModelConfig` part of this run configuration."""
        return ModelConfig.model_validate(self.model_dump(include=set(ModelConfig.model_fields)))


def parse_config_text(text: str, source: str = "<config>") -> dict[str, tuple[str, int]]:
    """
    Splits flat config text into `key -> (raw value, line number)`.

    :raises ConfigurationError: on a line that is not `key = value`
    """
    values: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if " #" in line:
            line = line.split(" #", 1)[0].rstrip()
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        values[key] = (value, lineno)
    return values


def _describe(error: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(part) for part in err['loc']) or 'config'}: {err['msg']}"
        for err in error.errors()
    )


def load_config(
    path: Path | None = None,
    overrides: dict[str, Any] | None = None,
    model: type[RunConfig] = RunConfig,
) -> RunConfig:
    """
    Builds a run configuration from a config file and command-line overrides.

    Overrides whose value is None are ignored, so unset flags keep the file value.

    :param path: optional config file
    :param overrides: values that win over the file
    :raises ConfigurationError: on unreadable files, unknown keys and invalid values
    """
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"cannot read config file {path}: {e}") from e
        for key, (value, lineno) in parse_config_text(text, str(path)).items():
            if key not in model.model_fields:
                raise ConfigurationError(f"{path}:{lineno}: unknown configuration key {key!r}")
            raw[key] = value
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in model.model_fields:
            raise ConfigurationError(f"unknown configuration key {key!r}")
        raw[key] = value
    try:
        return model.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {_describe(e)}") from e
