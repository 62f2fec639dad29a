import numpy as np
import pytest

from callaudit.exceptions import IncompatibleCheckpoint
from callaudit.nn import BatchNorm1d, Embedding, LayerNorm, Linear, Module, Parameter, Scale
from callaudit.tensor import Tensor, make_rng

pytestmark = pytest.mark.usefixtures("float64")


class _Block(Module):
    def __init__(self) -> None:
        rng = make_rng(0, "init")
        self.proj = Linear(3, 2, rng)
        self.heads = [Linear(2, 2, rng, bias=False), Scale(0.5)]
        self.norm = BatchNorm1d(2)
        self._private = Linear(2, 2, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(self.heads[1](self.heads[0](self.proj(x))))


def test_parameter_names_are_dotted_paths() -> None:
    names = [name for name, _ in _Block().named_parameters()]
    assert names == [
        "proj.weight",
        "proj.bias",
        "heads.0.weight",
        "heads.1.value",
        "norm.gamma",
        "norm.beta",
    ]


def test_buffers_are_named_by_owner() -> None:
    assert [name for name, _ in _Block().named_buffers()] == [
        "norm.running_mean",
        "norm.running_var",
    ]


def test_train_and_eval_reach_children() -> None:
    block = _Block()
    block.eval()
    assert not block.norm.training
    block.train()
    assert block.proj.training


def test_linear_init_bounds() -> None:
    layer = Linear(16, 4, make_rng(1))
    assert layer.weight.shape == (16, 4)
    assert np.all(np.abs(layer.weight.data) <= 0.25)
    assert layer(Tensor(np.ones((5, 16)))).shape == (5, 4)


def test_embedding_accumulates_repeated_rows() -> None:
    embedding = Embedding(np.arange(6.0).reshape(3, 2))
    embedding(np.array([1, 1, 2])).sum().backward()
    assert np.allclose(embedding.weight.grad, [[0, 0], [2, 2], [1, 1]])


def test_frozen_embedding_has_no_trainable_parameters() -> None:
    embedding = Embedding(np.zeros((3, 2)), trainable=False)
    assert embedding.parameters() == []
    assert [name for name, _ in embedding.named_parameters()] == ["weight"]


def test_layer_norm_normalizes_last_axis() -> None:
    x = Tensor(make_rng(2).normal(3.0, 4.0, size=(4, 8)))
    out = LayerNorm(8)(x).numpy()
    assert np.allclose(out.mean(axis=-1), 0.0, atol=1e-8)
    assert np.allclose(out.var(axis=-1), 1.0, atol=1e-3)


def test_batch_norm_ignores_padding() -> None:
    rng = make_rng(3)
    real = rng.normal(size=(1, 3, 2))
    padded = np.concatenate([real, 100.0 * np.ones((1, 2, 2))], axis=1)
    mask = np.array([[1.0, 1.0, 1.0, 0.0, 0.0]])
    norm = BatchNorm1d(2)
    out_padded = norm(Tensor(padded), mask).numpy()
    out_real = BatchNorm1d(2)(Tensor(real), np.ones((1, 3))).numpy()
    assert np.allclose(out_padded[:, :3], out_real)


def test_batch_norm_running_statistics() -> None:
    x = np.array([[[1.0], [3.0]]])
    norm = BatchNorm1d(1)
    norm(Tensor(x), np.ones((1, 2)))
    assert np.allclose(norm._buffers["running_mean"], [0.2])
    # unbiased variance of (1, 3) is 2
    assert np.allclose(norm._buffers["running_var"], [0.9 + 0.2])
    norm.eval()
    out = norm(Tensor(x)).numpy()
    assert np.allclose(out.reshape(-1), (x.reshape(-1) - 0.2) / np.sqrt(1.1 + 1e-5))


def test_scale_zero_silences_input() -> None:
    assert np.all(Scale(0.0)(Tensor(np.ones(3))).numpy() == 0.0)


def test_load_arrays_round_trip() -> None:
    source, target = _Block(), _Block()
    for _, p in source.named_parameters():
        p.data = p.data + 1.0
    source.norm._buffers["running_mean"] = np.array([5.0, 6.0])
    target.load_arrays(
        {name: p.data for name, p in source.named_parameters()}, dict(source.named_buffers())
    )
    for (_, a), (_, b) in zip(source.named_parameters(), target.named_parameters(), strict=True):
        assert np.array_equal(a.data, b.data)
    assert np.array_equal(target.norm._buffers["running_mean"], [5.0, 6.0])


def test_load_arrays_rejects_mismatches() -> None:
    block = _Block()
    params = {name: p.data for name, p in block.named_parameters()}
    with pytest.raises(IncompatibleCheckpoint, match="missing"):
        block.load_arrays({k: v for k, v in params.items() if k != "proj.bias"}, {})
    with pytest.raises(IncompatibleCheckpoint, match="proj.weight"):
        block.load_arrays({**params, "proj.weight": np.zeros((2, 2))}, {})
    with pytest.raises(IncompatibleCheckpoint, match="unexpected buffer"):
        block.load_arrays(params, {"norm.other": np.zeros(2)})


def test_parameter_requires_grad() -> None:
    assert Parameter(np.zeros(2)).requires_grad
