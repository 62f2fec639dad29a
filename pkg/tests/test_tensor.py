from collections.abc import Callable

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from callaudit import tensor as T
from callaudit.exceptions import NonFiniteInput, NotScalarLoss, ShapeMismatch, TensorError
from callaudit.tensor import Tensor, grad_check

TOLERANCE = 1e-4

pytestmark = pytest.mark.usefixtures("float64")


def _weighted(op: Callable[[Tensor], Tensor], shape: tuple[int, ...]) -> Callable[[Tensor], Tensor]:
    rng = np.random.default_rng(7)
    signs = rng.choice([-1.0, 1.0], size=shape)
    weights = Tensor(rng.uniform(0.5, 1.5, size=shape) * signs, dtype=np.float64)

    def f(x: Tensor) -> Tensor:
        return (op(x) * weights).sum()

    return f


def _point(*shape: int, low: float = -2.0, high: float = 2.0) -> Tensor:
    return Tensor(np.random.default_rng(11).uniform(low, high, size=shape), dtype=np.float64)


UNARY: dict[str, tuple[Callable[[Tensor], Tensor], Tensor]] = {
    "exp": (T.exp, _point(3, 4)),
    "log": (T.log, _point(3, 4, low=0.5, high=3.0)),
    "sqrt": (T.sqrt, _point(3, 4, low=0.5, high=3.0)),
    "tanh": (T.tanh, _point(3, 4)),
    "sigmoid": (T.sigmoid, _point(3, 4)),
    "relu": (T.relu, _point(3, 4)),
    "gelu": (T.gelu, _point(3, 4)),
    "pow": (lambda x: x**3, _point(3, 4)),
    "neg": (lambda x: -x, _point(3, 4)),
    "softmax": (lambda x: T.softmax(x, axis=-1), _point(3, 4)),
    "log_softmax": (lambda x: T.log_softmax(x, axis=0), _point(3, 4)),
    "max": (lambda x: x.max(axis=1, keepdims=True), _point(3, 4)),
    "mean": (lambda x: x.mean(axis=0), _point(3, 4)),
    "sum": (lambda x: x.sum(axis=(0, 1)), _point(3, 4)),
    "reshape": (lambda x: x.reshape(4, 3), _point(3, 4)),
    "transpose": (lambda x: x.transpose(), _point(3, 4)),
    "swapaxes": (lambda x: x.swapaxes(0, 2), _point(2, 3, 4)),
    "slice": (lambda x: x[1:, ::2], _point(3, 4)),
    "fancy-index": (lambda x: x[np.array([0, 2, 0])], _point(3, 4)),
    "take": (lambda x: T.take(x, np.array([2, 0, 2]), axis=0), _point(3, 4)),
    "clamp": (lambda x: T.clamp(x, -1.0, 1.0), _point(3, 4)),
    "masked-softmax": (
        lambda x: T.softmax(T.masked_fill(x, np.array([False, True, False, True]), -np.inf)),
        _point(3, 4),
    ),
    "scatter": (lambda x: T.scatter(x, np.array([5, 0, 3]), (2, 3)), _point(3)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name: str) -> None:
    op, x = UNARY[name]
    out_shape = op(x).shape
    assert grad_check(_weighted(op, out_shape), x) < TOLERANCE


BINARY: dict[str, tuple[Callable[[Tensor, Tensor], Tensor], tuple[int, ...], tuple[int, ...]]] = {
    "add-broadcast": (T.add, (3, 4), (4,)),
    "sub-broadcast": (T.sub, (3, 1), (3, 4)),
    "mul": (T.mul, (2, 3), (2, 3)),
    "div": (T.div, (2, 3), (1, 3)),
    "matmul": (T.matmul, (3, 4), (4, 2)),
    "batched-matmul": (T.matmul, (2, 3, 4), (4, 5)),
    "concat": (lambda a, b: T.concat([a, b], axis=1), (2, 3), (2, 2)),
    "stack": (lambda a, b: T.stack([a, b], axis=1), (2, 3), (2, 3)),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_gradients(name: str) -> None:
    op, left_shape, right_shape = BINARY[name]
    left = _point(*left_shape)
    right = Tensor(np.random.default_rng(5).uniform(0.5, 2.0, size=right_shape), dtype=np.float64)
    out_shape = op(left, right).shape
    assert grad_check(_weighted(lambda a: op(a, right), out_shape), left) < TOLERANCE
    assert grad_check(_weighted(lambda b: op(left, b), out_shape), right) < TOLERANCE


def test_depthwise_conv_gradients() -> None:
    x = _point(2, 5, 3)
    weight = _point(3, 3)
    bias = _point(3)
    out_shape = T.depthwise_conv1d(x, weight, bias).shape
    assert out_shape == (2, 5, 3)
    by_input = _weighted(lambda t: T.depthwise_conv1d(t, weight, bias), out_shape)
    by_weight = _weighted(lambda w: T.depthwise_conv1d(x, w, bias), out_shape)
    assert grad_check(by_input, x) < TOLERANCE
    assert grad_check(by_weight, weight) < TOLERANCE


def test_depthwise_conv_same_padding() -> None:
    x = Tensor(np.arange(4.0).reshape(1, 4, 1))
    weight = Tensor(np.array([[1.0, 1.0, 1.0]]))
    out = T.depthwise_conv1d(x, weight)
    assert np.allclose(out.numpy().reshape(-1), [1.0, 3.0, 6.0, 5.0])


def test_depthwise_conv_needs_odd_kernel() -> None:
    with pytest.raises(TensorError, match="odd"):
        T.depthwise_conv1d(_point(1, 3, 2), _point(2, 2))


def test_shared_subexpression_accumulates() -> None:
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    y = x * x + x
    y.sum().backward()
    assert np.allclose(x.grad, 2 * x.data + 1)


def test_backward_twice_accumulates() -> None:
    x = Tensor(np.array([3.0]), requires_grad=True)
    (x * 2.0).sum().backward()
    (x * 2.0).sum().backward()
    assert np.allclose(x.grad, [4.0])


def test_backward_needs_scalar() -> None:
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(NotScalarLoss):
        (x * 2.0).backward()


def test_no_grad_records_nothing() -> None:
    x = Tensor(np.ones(2), requires_grad=True)
    with T.no_grad():
        y = x * 2.0
    assert not y.requires_grad


def test_shape_mismatch_reports_both_shapes() -> None:
    with pytest.raises(ShapeMismatch, match=r"\(2, 3\) and \(4,\)"):
        Tensor(np.ones((2, 3))) + Tensor(np.ones(4))
    with pytest.raises(ShapeMismatch):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))
    with pytest.raises(ShapeMismatch):
        T.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], axis=1)


def test_checked_mode_rejects_nan() -> None:
    bad = Tensor(np.array([1.0, np.nan]))
    with T.checked_mode(), pytest.raises(NonFiniteInput):
        T.exp(bad)
    T.exp(bad)


def test_checked_mode_allows_masked_softmax() -> None:
    with T.checked_mode():
        out = T.softmax(Tensor(np.array([[0.0, -np.inf], [-np.inf, -np.inf]])))
    assert np.allclose(out.numpy(), [[1.0, 0.0], [0.0, 0.0]])


def test_default_dtype_switches() -> None:
    assert Tensor([1.0]).dtype == np.float64
    with T.default_dtype(np.float32):
        assert Tensor([1.0]).dtype == np.float32
    assert T.get_default_dtype() == np.float64


def test_dropout_scales_kept_entries() -> None:
    x = Tensor(np.ones((50, 40)))
    out = T.dropout(x, 0.5, training=True, rng=T.make_rng(0, "dropout")).numpy()
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert 0.3 < (out == 0).mean() < 0.7
    assert T.dropout(x, 0.5, training=False, rng=T.make_rng(0)) is x
    with pytest.raises(TensorError):
        T.dropout(x, 1.0, training=True, rng=T.make_rng(0))


def test_streams_are_reproducible_and_independent() -> None:
    a = T.make_rng(4, "init").random(5)
    assert np.array_equal(a, T.make_rng(4, "init").random(5))
    assert not np.array_equal(a, T.make_rng(4, "dropout").random(5))
    assert not np.array_equal(a, T.make_rng(5, "init").random(5))
    first, second = T.make_rng(4, "synthetic", 0), T.make_rng(4, "synthetic", 1)
    assert not np.array_equal(first.random(5), second.random(5))


def test_argmin_ties_take_lowest_index() -> None:
    assert T.argmin(np.array([[2.0, 1.0, 1.0]])).tolist() == [1]


def test_max_splits_gradient_between_ties() -> None:
    x = Tensor(np.array([1.0, 3.0, 3.0]), requires_grad=True)
    x.max().backward()
    assert np.allclose(x.grad, [0.0, 0.5, 0.5])


@given(
    hnp.arrays(
        np.float64,
        hnp.array_shapes(min_dims=1, max_dims=3, max_side=4),
        elements=st.floats(-5, 5),
    ),
    st.data(),
)
def test_broadcast_gradient_matches_operand_shape(values: np.ndarray, data: st.DataObject) -> None:
    other_shape = data.draw(hnp.broadcastable_shapes(values.shape, max_dims=3, max_side=4))
    a = Tensor(values, requires_grad=True)
    b = Tensor(np.ones(other_shape), requires_grad=True)
    (a * b).sum().backward()
    assert a.grad is not None and a.grad.shape == a.shape
    assert b.grad is not None and b.grad.shape == b.shape


_MATRICES = hnp.arrays(
    np.float64, st.tuples(st.integers(1, 4), st.integers(1, 5)), elements=st.floats(-50, 50)
)


@given(_MATRICES)
def test_softmax_rows_sum_to_one(values: np.ndarray) -> None:
    out = T.softmax(Tensor(values), axis=-1).numpy()
    assert np.allclose(out.sum(axis=-1), 1.0)
    assert np.all(out >= 0)
