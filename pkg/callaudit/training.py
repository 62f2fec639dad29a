"""
Training, evaluation, the module ablation matrix and the hyperparameter sweep.

Training is single-threaded and fully seeded: the split, the batch order, the
initial weights, dropout masks and edge-pair sampling all come from
`make_rng(seed, <stream>)`, so the same config and data give bit-identical
checkpoints and epoch logs.
"""

from __future__ import annotations

import warnings
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict

from .checkpoint import Checkpoint
from .config import (
    DEFAULT_SWEEP_HIDDEN_SIZES,
    DEFAULT_SWEEP_LEARNING_RATES,
    Ablation,
    LossName,
    ModelConfig,
)
from .exceptions import EmptyDataset, SingleClassDatasetWarning
from .graph_ingest import GraphSample, LabelVocab, pad_batch
from .losses import compute_loss, inverse_frequency_weights
from .metrics import Metrics, merge_all
from .model import CallGraphClassifier
from .optim import AdamW
from .print_messages import debug
from .signal_handling import CancellationHandler
from .tensor import checked_mode, default_dtype, get_default_dtype, is_checked, make_rng


class EpochRecord(BaseModel):
    """One line of the epoch log."""

    model_config = ConfigDict(frozen=True)

    epoch: int
    train_loss: float
    val_acc: float
    val_precision: float
    val_recall: float
    val_f1: float


@dataclass(frozen=True)
class DataSplit:
    """Sample indices of the training and validation parts."""

    train: tuple[int, ...]
    validation: tuple[int, ...]


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    final_checkpoint: Checkpoint
    log: list[EpochRecord]
    split: DataSplit


def stratified_split(labels: Sequence[int], val_fraction: float, seed: int) -> DataSplit:
    """
    Seeded split keeping the label ratio in both parts.

    Every class keeps at least one training sample; a class with a single sample
    contributes nothing to validation.
    """
    rng = make_rng(seed, "split")
    labels_array = np.asarray(labels, dtype=np.int64)
    train: list[int] = []
    validation: list[int] = []
    for label in sorted(set(labels_array.tolist())):
        members = rng.permutation(np.flatnonzero(labels_array == label))
        n_val = min(int(round(len(members) * val_fraction)), len(members) - 1)
        validation.extend(int(i) for i in members[:n_val])
        train.extend(int(i) for i in members[n_val:])
    return DataSplit(tuple(sorted(train)), tuple(sorted(validation)))


def iter_batches(
    samples: Sequence[GraphSample], indices: Sequence[int], batch_size: int
) -> list[list[GraphSample]]:
    return [
        [samples[i] for i in indices[start : start + batch_size]]
        for start in range(0, len(indices), batch_size)
    ]


def _count_batch(model: CallGraphClassifier, chunk: Sequence[GraphSample]) -> Metrics:
    batch = pad_batch(chunk)
    return Metrics.from_predictions(model.predict(batch), batch.labels)


def evaluate(
    model_or_checkpoint: CallGraphClassifier | Checkpoint,
    samples: Sequence[GraphSample],
    *,
    workers: int = 1,
    batch_size: int | None = None,
) -> Metrics:
    """
    Eval-mode confusion counts over `samples`.

    With `workers > 1` batches are scored on a thread pool and their counts merged.

    :raises EmptyDataset: when `samples` is empty
    :raises IncompatibleCheckpoint: when a checkpoint does not fit its own config
    """
    if not samples:
        raise EmptyDataset("cannot evaluate on zero samples")
    model = (
        CallGraphClassifier.from_checkpoint(model_or_checkpoint)
        if isinstance(model_or_checkpoint, Checkpoint)
        else model_or_checkpoint
    )
    size = batch_size or model.config.batch_size
    chunks = iter_batches(samples, range(len(samples)), size)
    was_training = model.training
    model.eval()
    try:
        if workers > 1 and len(chunks) > 1:
            dtype, checked = get_default_dtype(), is_checked()

            def count(chunk: list[GraphSample]) -> Metrics:
                with default_dtype(dtype), checked_mode(checked):
                    return _count_batch(model, chunk)

            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(count, chunks))
        else:
            parts = [_count_batch(model, chunk) for chunk in chunks]
    finally:
        model.train(was_training)
    return merge_all(parts)


def predict_probabilities(
    model: CallGraphClassifier, samples: Sequence[GraphSample], batch_size: int | None = None
) -> np.ndarray:
    """Positive-class probability of every sample, in input order."""
    if not samples:
        return np.zeros(0)
    size = batch_size or model.config.batch_size
    parts = [
        model.predict_proba(pad_batch(chunk))
        for chunk in iter_batches(samples, range(len(samples)), size)
    ]
    return np.concatenate(parts)


def train(
    config: ModelConfig,
    samples: Sequence[GraphSample],
    vocab: LabelVocab,
    *,
    on_epoch: Callable[[EpochRecord], None] | None = None,
    cancellation: CancellationHandler | None = None,
    split: DataSplit | None = None,
) -> TrainResult:
    """
    Trains a classifier with AdamW and keeps the checkpoint with the best validation F1.

    When the validation part is empty (tiny datasets), the training part is
    used for validation.

    :param on_epoch: called with every epoch record as soon as it exists
    :param cancellation: checked between batches
    :raises EmptyDataset: when `samples` is empty
    :raises CancellationRequested: when `cancellation` fires
    """
    if not samples:
        raise EmptyDataset("cannot train on zero samples")
    labels = [sample.label for sample in samples]
    if len(set(labels)) < 2:
        warnings.warn(
            f"training set has a single label ({labels[0]}); the classifier cannot learn a boundary",
            SingleClassDatasetWarning,
            stacklevel=2,
        )
    split = split or stratified_split(labels, config.val_fraction, config.seed)
    validation_indices = split.validation or split.train
    validation = [samples[i] for i in validation_indices]

    model = CallGraphClassifier(config, vocab.embedding_matrix)
    optimizer = AdamW(
        model.named_parameters(),
        lr=config.learning_rate,
        betas=config.betas,
        eps=config.eps,
        weight_decay=config.weight_decay,
    )
    weights = (
        inverse_frequency_weights(np.array([labels[i] for i in split.train]))
        if config.class_weights
        else None
    )
    shuffle_rng = make_rng(config.seed, "shuffle")

    best = model.to_checkpoint(vocab.labels, optimizer.state)
    best_f1 = -1.0
    log: list[EpochRecord] = []
    train_indices = np.asarray(split.train, dtype=np.int64)
    for epoch in range(1, config.epochs + 1):
        model.train()
        order = shuffle_rng.permutation(train_indices).tolist()
        total_loss = 0.0
        for chunk in iter_batches(samples, order, config.batch_size):
            if cancellation is not None:
                cancellation.check()
            batch = pad_batch(chunk)
            optimizer.zero_grad()
            loss = compute_loss(config.loss, model(batch), batch.labels, weights)
            loss.backward()
            optimizer.step()
            total_loss += loss.item() * len(chunk)
        metrics = evaluate(model, validation)
        model.train()
        record = EpochRecord(
            epoch=epoch,
            train_loss=total_loss / max(len(train_indices), 1),
            val_acc=metrics.accuracy,
            val_precision=metrics.precision,
            val_recall=metrics.recall,
            val_f1=metrics.f1,
        )
        log.append(record)
        debug(f"epoch {epoch}: loss {record.train_loss:.6f}, validation F1 {record.val_f1:.4f}")
        if on_epoch is not None:
            on_epoch(record)
        if metrics.f1 > best_f1:
            best_f1 = metrics.f1
            best = model.to_checkpoint(vocab.labels, optimizer.state, epoch, metrics.f1)

    final = model.to_checkpoint(vocab.labels, optimizer.state, config.epochs, max(best_f1, 0.0))
    return TrainResult(checkpoint=best, final_checkpoint=final, log=log, split=split)


def _variant_config(config: ModelConfig, **changes: object) -> ModelConfig:
    settings = config.model_dump(include=set(ModelConfig.model_fields))
    return ModelConfig.model_validate({**settings, **changes})


class AblationRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant: Ablation
    loss: LossName
    seed: int
    metrics: Metrics


class AblationTable(BaseModel):
    """One row per (structure, loss, seed)."""

    rows: list[AblationRow]

    def mean_f1(self, variant: Ablation, loss: LossName = LossName.CROSS_ENTROPY) -> float:
        scores = [row.metrics.f1 for row in self.rows if row.variant == variant and row.loss == loss]
        return float(np.mean(scores)) if scores else 0.0

    def pooled(self, variant: Ablation, loss: LossName = LossName.CROSS_ENTROPY) -> Metrics:
        """Confusion counts of a variant summed over seeds."""
        return merge_all(
            row.metrics for row in self.rows if row.variant == variant and row.loss == loss
        )


def run_ablation(
    config: ModelConfig,
    samples: Sequence[GraphSample],
    vocab: LabelVocab,
    *,
    variants: Sequence[Ablation] = tuple(Ablation),
    losses: Sequence[LossName] = (LossName.CROSS_ENTROPY,),
    seeds: Sequence[int] = (0,),
    on_row: Callable[[AblationRow], None] | None = None,
) -> AblationTable:
    """
    Trains and evaluates every (structure, loss) pair for every seed.

    All variants of one seed share the same split; metrics are measured on its
    validation part.
    """
    rows: list[AblationRow] = []
    for seed in seeds:
        for loss in losses:
            for variant in variants:
                variant_config = _variant_config(config, ablation=variant, loss=loss, seed=seed)
                result = train(variant_config, samples, vocab)
                held_out = [samples[i] for i in (result.split.validation or result.split.train)]
                row = AblationRow(
                    variant=variant,
                    loss=loss,
                    seed=seed,
                    metrics=evaluate(result.checkpoint, held_out),
                )
                rows.append(row)
                if on_row is not None:
                    on_row(row)
    return AblationTable(rows=rows)


class SweepRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float
    hidden: int
    metrics: Metrics


def run_sweep(
    config: ModelConfig,
    samples: Sequence[GraphSample],
    vocab: LabelVocab,
    learning_rates: Sequence[float] = DEFAULT_SWEEP_LEARNING_RATES,
    hidden_sizes: Sequence[int] = DEFAULT_SWEEP_HIDDEN_SIZES,
    on_row: Callable[[SweepRow], None] | None = None,
) -> list[SweepRow]:
    """Trains and evaluates every (learning rate, hidden size) combination on one split."""
    rows: list[SweepRow] = []
    for learning_rate in learning_rates:
        for hidden in hidden_sizes:
            variant_config = _variant_config(config, learning_rate=learning_rate, hidden=hidden)
            result = train(variant_config, samples, vocab)
            held_out = [samples[i] for i in (result.split.validation or result.split.train)]
            row = SweepRow(
                learning_rate=learning_rate,
                hidden=hidden,
                metrics=evaluate(result.checkpoint, held_out),
            )
            rows.append(row)
            if on_row is not None:
                on_row(row)
    return rows
