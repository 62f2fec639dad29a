"""Confusion counts and the scores derived from them."""

from __future__ import annotations

from collections.abc import Iterable
from typing import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


class Metrics(BaseModel):
    """
    Binary confusion counts with accuracy, precision, recall and F1.

    A score whose denominator is zero is 0.
    """

    model_config = ConfigDict(frozen=True)

    tp: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    tn: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> Self:
        return cls(tp=tp, fp=fp, tn=tn, fn=fn)

    @classmethod
    def from_predictions(cls, predictions: Iterable[int], labels: Iterable[int]) -> Self:
        predicted = np.asarray(list(predictions), dtype=np.int64)
        actual = np.asarray(list(labels), dtype=np.int64)
        if predicted.shape != actual.shape:
            raise ValueError(f"{predicted.shape[0]} predictions for {actual.shape[0]} labels")
        return cls(
            tp=int(((predicted == 1) & (actual == 1)).sum()),
            fp=int(((predicted == 1) & (actual == 0)).sum()),
            tn=int(((predicted == 0) & (actual == 0)).sum()),
            fn=int(((predicted == 0) & (actual == 1)).sum()),
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @computed_field
    @property
    def accuracy(self) -> float:
        return _ratio(self.tp + self.tn, self.total)

    @computed_field
    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @computed_field
    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @computed_field
    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return _ratio(2 * p * r, p + r)

    def merge(self, other: Metrics) -> Metrics:
        return Metrics(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
            fn=self.fn + other.fn,
        )

    def __add__(self, other: Metrics) -> Metrics:
        return self.merge(other)


def merge_all(parts: Iterable[Metrics]) -> Metrics:
    merged = Metrics()
    for part in parts:
        merged = merged.merge(part)
    return merged
