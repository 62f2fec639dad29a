import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from callaudit.config import LossName
from callaudit.exceptions import ShapeMismatch
from callaudit.losses import (
    bce_logits_loss,
    compute_loss,
    cross_entropy_loss,
    inverse_frequency_weights,
)
from callaudit.tensor import Tensor, grad_check

pytestmark = pytest.mark.usefixtures("float64")


def test_cross_entropy_uniform_logits() -> None:
    loss = cross_entropy_loss(Tensor(np.zeros((3, 2))), np.array([0, 1, 1]))
    assert loss.item() == pytest.approx(np.log(2))


def test_cross_entropy_matches_direct_formula() -> None:
    logits = np.array([[2.0, -1.0], [0.5, 0.25]])
    labels = np.array([1, 0])
    probabilities = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    expected = -np.mean(np.log(probabilities[[0, 1], labels]))
    assert cross_entropy_loss(Tensor(logits), labels).item() == pytest.approx(expected)


def test_cross_entropy_is_stable_for_large_logits() -> None:
    loss = cross_entropy_loss(Tensor(np.array([[1000.0, 0.0]])), np.array([0]))
    assert np.isfinite(loss.item())
    assert loss.item() == pytest.approx(0.0)


def test_bce_matches_direct_formula() -> None:
    z = np.array([1.5, -0.3, 0.0])
    y = np.array([1, 0, 1])
    expected = -np.mean(y * np.log(1 / (1 + np.exp(-z))) + (1 - y) * np.log(1 - 1 / (1 + np.exp(-z))))
    assert bce_logits_loss(Tensor(z.reshape(3, 1)), y).item() == pytest.approx(expected)


def test_bce_is_stable_for_large_logits() -> None:
    loss = bce_logits_loss(Tensor(np.array([-800.0, 800.0])), np.array([0, 1]))
    assert loss.item() == pytest.approx(0.0)


def test_class_weights_reweight_the_mean() -> None:
    logits = Tensor(np.array([[0.0, 1.0], [1.0, 0.0], [0.3, 0.3]]))
    labels = np.array([1, 1, 0])
    per_sample = [
        cross_entropy_loss(Tensor(logits.numpy()[i : i + 1]), labels[i : i + 1]).item()
        for i in range(3)
    ]
    weights = np.array([2.0, 1.0])
    expected = (per_sample[0] + per_sample[1] + 2.0 * per_sample[2]) / 4.0
    assert cross_entropy_loss(logits, labels, weights).item() == pytest.approx(expected)


def test_inverse_frequency_weights() -> None:
    assert inverse_frequency_weights(np.array([0, 0, 0, 1])).tolist() == pytest.approx(
        [4 / 6, 4 / 2]
    )
    # an absent class keeps weight 1
    assert inverse_frequency_weights(np.array([1, 1])).tolist() == [1.0, 0.5]


def test_shape_mismatch() -> None:
    with pytest.raises(ShapeMismatch):
        cross_entropy_loss(Tensor(np.zeros((2, 2))), np.array([0, 1, 1]))
    with pytest.raises(ShapeMismatch):
        bce_logits_loss(Tensor(np.zeros((2, 1))), np.array([0]))


def test_compute_loss_dispatch() -> None:
    logits = Tensor(np.array([[0.2], [-0.4]]))
    labels = np.array([1, 0])
    assert compute_loss(LossName.BCE_LOGITS, logits, labels).item() == pytest.approx(
        bce_logits_loss(logits, labels).item()
    )


@pytest.mark.parametrize("name", list(LossName))
def test_loss_gradients(name: LossName) -> None:
    width = 1 if name == LossName.BCE_LOGITS else 2
    logits = Tensor(np.random.default_rng(0).normal(size=(4, width)), dtype=np.float64)
    labels = np.array([0, 1, 1, 0])
    weights = np.array([1.5, 0.5])
    assert grad_check(lambda t: compute_loss(name, t, labels), logits) < 1e-5
    assert grad_check(lambda t: compute_loss(name, t, labels, weights), logits) < 1e-5


@given(
    hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.just(2)), elements=st.floats(-30, 30)),
    st.data(),
)
def test_cross_entropy_is_non_negative(logits: np.ndarray, data: st.DataObject) -> None:
    labels = np.array(data.draw(st.lists(st.integers(0, 1), min_size=len(logits), max_size=len(logits))))
    assert cross_entropy_loss(Tensor(logits), labels).item() >= 0.0
