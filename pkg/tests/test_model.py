from collections.abc import Callable

import numpy as np
import pytest

from callaudit.checkpoint import checkpoint_from_bytes
from callaudit.config import Ablation, LossName, ModelConfig
from callaudit.exceptions import ConfigurationError, PairOutOfRange, ShapeMismatch
from callaudit.graph_ingest import GraphSample, LabelVocab, normalize_adjacency, pad_batch
from callaudit.model import (
    CallGraphClassifier,
    ClusterLayer,
    ConformerBlock,
    EdgePredictor,
    GCNLayer,
    MultiHeadAttention,
    RelationalGraphConv,
    combine_scores,
    masked_max_pool,
    normalize_adjacency_tensor,
    pair_set,
    symmetrize_adjacency,
)
from callaudit.tensor import Tensor, grad_check, make_rng

pytestmark = pytest.mark.usefixtures("float64")


def _small_config(**overrides: object) -> ModelConfig:
    settings: dict[str, object] = {
        "hidden": 8,
        "edge_hidden": 4,
        "heads": 2,
        "head_dim": 4,
        "clusters": 3,
        "embedding_dim": 8,
        "ff_mult": 2,
        "dtype": "float64",
        "seed": 1,
    }
    settings.update(overrides)
    return ModelConfig.model_validate(settings)


def _random(*shape: int, seed: int = 0) -> Tensor:
    return Tensor(make_rng(seed, "test").normal(size=shape))


# edge prediction


def test_zero_scorer_gives_unit_scores() -> None:
    predictor = EdgePredictor(3, 4, make_rng(0))
    predictor.lin2.weight.data[:] = 0.0
    predictor.lin2.bias.data[:] = 0.0
    scores = predictor.predict_pairs(_random(2, 4, 3), [(0, 1), (2, 3), (3, 1)])
    assert scores.shape == (2, 3)
    assert np.all(scores.numpy() == 1.0)


def test_combine_scores_formula() -> None:
    out = combine_scores(Tensor(np.array([2.0, 100.0])), Tensor(np.array([0.0, 100.0])))
    assert out.numpy()[0] == pytest.approx(np.e)
    # exponent is clamped at 30
    assert out.numpy()[1] == pytest.approx(np.exp(30.0))


def test_edge_scores_are_symmetric() -> None:
    predictor = EdgePredictor(3, 4, make_rng(5))
    scores = predictor.predict_pairs(_random(2, 4, 3, seed=2), [(0, 1), (1, 0), (2, 3), (3, 2)])
    data = scores.numpy()
    assert np.allclose(data[:, 0], data[:, 1], rtol=1e-14, atol=0)
    assert np.allclose(data[:, 2], data[:, 3], rtol=1e-14, atol=0)
    assert np.all(data > 0)


def test_pair_errors() -> None:
    predictor = EdgePredictor(3, 4, make_rng(0))
    x = _random(1, 3, 3)
    with pytest.raises(PairOutOfRange, match="self pair"):
        predictor.predict_pairs(x, [(1, 1)])
    with pytest.raises(PairOutOfRange, match="padded"):
        predictor.predict_pairs(x, [(0, 2)], mask=np.array([[1.0, 1.0, 0.0]]))
    with pytest.raises(PairOutOfRange):
        predictor.predict_pairs(x, [(0, 5)])


def test_pair_set_covers_real_pairs_only() -> None:
    mask = np.array([[1.0, 1.0, 1.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
    graph, src, dst = pair_set(mask, 128, make_rng(0))
    pairs = set(zip(graph.tolist(), src.tolist(), dst.tolist(), strict=True))
    assert pairs == {(0, i, j) for i in range(3) for j in range(3) if i != j}


def test_pair_set_samples_large_graphs() -> None:
    mask = np.ones((1, 10))
    graph, src, dst = pair_set(mask, 4, make_rng(0))
    assert len(graph) == 2 * (4 * 3 // 2)
    pairs = set(zip(src.tolist(), dst.tolist(), strict=True))
    assert all((j, i) in pairs for i, j in pairs)
    assert all(i != j for i, j in pairs)


def test_predicted_adjacency_is_zero_off_the_pair_set() -> None:
    predictor = EdgePredictor(3, 4, make_rng(0))
    mask = np.array([[1.0, 1.0, 1.0, 0.0]])
    predicted = predictor(_random(1, 4, 3), mask, 128, make_rng(0)).numpy()
    assert np.all(np.diag(predicted[0]) == 0)
    assert np.all(predicted[0, 3] == 0)
    assert np.all(predicted[0, :, 3] == 0)
    assert np.all(predicted[0, :3, :3][~np.eye(3, dtype=bool)] > 0)


# adjacency


def test_symmetrize_without_prediction_doubles_symmetric_input() -> None:
    s = np.array([[[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]])
    a = symmetrize_adjacency(s, None, np.ones((1, 3)))
    assert np.array_equal(a.numpy(), 2 * s)


def test_symmetrize_mirrors_single_score() -> None:
    predicted = np.zeros((1, 3, 3))
    predicted[0, 0, 1] = 0.7
    a = symmetrize_adjacency(np.zeros((1, 3, 3)), Tensor(predicted), np.ones((1, 3))).numpy()
    assert a[0, 0, 1] == a[0, 1, 0] == 0.7
    assert np.array_equal(a, np.swapaxes(a, 1, 2))


def test_symmetrize_zeroes_masked_rows() -> None:
    original = make_rng(0).random((2, 4, 4))
    mask = np.array([[1.0, 1.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]])
    a = symmetrize_adjacency(original, Tensor(make_rng(1).random((2, 4, 4))), mask).numpy()
    assert np.array_equal(a, np.swapaxes(a, 1, 2))
    assert np.all(a[0, 2:] == 0)
    assert np.all(a[0, :, 2:] == 0)


def test_edge_scores_and_adjacency_are_exactly_symmetric() -> None:
    rng = make_rng(0, "symmetry")
    predictor = EdgePredictor(3, 4, make_rng(1))
    for _ in range(1000):
        b, n = int(rng.integers(1, 4)), int(rng.integers(2, 10))
        sizes = rng.integers(1, n + 1, size=b)
        mask = (np.arange(n) < sizes[:, None]).astype(np.float64)
        predicted = predictor(Tensor(rng.normal(size=(b, n, 3))), mask, 128, rng)
        scores = predicted.numpy()
        assert np.array_equal(scores, np.swapaxes(scores, 1, 2))

        original = (rng.random((b, n, n)) < 0.3).astype(np.float64)
        a = symmetrize_adjacency(original, predicted, mask).numpy()
        assert np.array_equal(a, np.swapaxes(a, 1, 2))
        padded = mask == 0
        assert np.all(a[padded] == 0)
        assert np.all(np.swapaxes(a, 1, 2)[padded] == 0)


def test_normalized_tensor_matches_numpy_version() -> None:
    a = np.array([[[0.0, 2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]])
    mask = np.array([[1.0, 1.0, 0.0]])
    out = normalize_adjacency_tensor(Tensor(a), mask).numpy()
    assert np.allclose(out, normalize_adjacency(a, mask))


# graph convolutions


def test_gcn_identity_case() -> None:
    layer = GCNLayer(3, 3, make_rng(0))
    layer.weight.data = np.eye(3)
    h = Tensor(make_rng(1).random((1, 4, 3)))
    assert np.allclose(layer(h, Tensor(np.eye(4)[None])).numpy(), h.numpy())
    assert np.all(layer(Tensor(np.zeros((1, 4, 3))), Tensor(np.eye(4)[None])).numpy() == 0)


def test_gcn_matches_dense_oracle() -> None:
    layer = GCNLayer(2, 3, make_rng(0))
    h = make_rng(1).normal(size=(1, 3, 2))
    a = make_rng(2).random((1, 3, 3))
    expected = np.maximum(a[0] @ h[0] @ layer.weight.data, 0.0)
    assert np.allclose(layer(Tensor(h), Tensor(a)).numpy()[0], expected, atol=1e-6)


def test_gcn_shape_mismatch() -> None:
    layer = GCNLayer(2, 3, make_rng(0))
    with pytest.raises(ShapeMismatch):
        layer(Tensor(np.ones((1, 3, 4))), Tensor(np.eye(3)[None]))


def _identity_fc(layer: RelationalGraphConv, width: int) -> None:
    layer.fc.weight.data = np.eye(width)
    layer.fc.bias.data = np.zeros(width)


def test_relational_conv_propagates_through_identity_plus_adjacency() -> None:
    layer = RelationalGraphConv(2, 2, 1, make_rng(0))
    _identity_fc(layer, 2)
    adjacency = np.array([[[[0.0, 1.0], [0.0, 0.0]]]])
    out = layer(Tensor(np.eye(2)[None]), adjacency, np.ones((1, 2))).numpy()
    assert np.allclose(out[0], [[1.0, 1.0], [0.0, 1.0]])


def test_relational_conv_two_hop_term() -> None:
    layer = RelationalGraphConv(2, 2, 1, make_rng(0), adj_sq=True)
    _identity_fc(layer, 2)
    adjacency = np.array([[[[0.0, 1.0], [1.0, 0.0]]]])
    out = layer(Tensor(np.eye(2)[None]), adjacency, np.ones((1, 2))).numpy()
    assert np.allclose(out[0], [[2.0, 1.0], [1.0, 2.0]])


def test_relational_conv_without_edges_concatenates_input() -> None:
    layer = RelationalGraphConv(2, 4, 2, make_rng(0))
    _identity_fc(layer, 4)
    x = make_rng(1).normal(size=(1, 3, 2))
    out = layer(Tensor(x), np.zeros((1, 2, 3, 3)), np.array([[1.0, 1.0, 0.0]])).numpy()
    assert np.allclose(out[0, :2], np.concatenate([x[0, :2], x[0, :2]], axis=-1))
    assert np.all(out[0, 2] == 0)


def test_relational_conv_checks_relation_count() -> None:
    layer = RelationalGraphConv(2, 2, 2, make_rng(0))
    with pytest.raises(ShapeMismatch):
        layer(Tensor(np.ones((1, 2, 2))), np.zeros((1, 1, 2, 2)), np.ones((1, 2)))


# clustering


def test_cluster_assign_exact_and_tie() -> None:
    layer = ClusterLayer(3, 2, make_rng(0))
    layer.centers.data = np.array([[0.0, 0.0], [1.0, 1.0], [5.0, -1.0]])
    distances, assignment = layer.assign(np.array([[5.0, -1.0], [1.0, 0.0]]))
    assert distances[0, 2] == 0.0
    assert assignment[0] == 2
    assert distances[1, :2].tolist() == [1.0, 1.0]
    assert assignment[1] == 0


def test_cluster_assign_matches_brute_force() -> None:
    rng = make_rng(9, "oracle")
    for _ in range(1000):
        n, k, c = int(rng.integers(1, 51)), int(rng.integers(1, 9)), int(rng.integers(1, 5))
        layer = ClusterLayer(k, c, rng)
        # half-integer grid: squared distances are exact, so ties are real ties
        centers = rng.integers(-3, 4, size=(k, c)).astype(np.float64)
        if k > 1 and rng.random() < 0.5:
            centers[-1] = centers[0]
        layer.centers.data = centers
        x = rng.integers(-6, 7, size=(n, c)) / 2.0
        distances, assignment = layer.assign(x[None])
        for i, row in enumerate(x):
            exact = [sum((row[j] - center[j]) ** 2 for j in range(c)) for center in centers]
            assert distances[0, i].tolist() == exact
            assert assignment[0, i] == exact.index(min(exact))


def test_cluster_assignment_ignores_uniform_scaling() -> None:
    rng = make_rng(4)
    layer = ClusterLayer(4, 3, rng)
    layer.centers.data = rng.normal(size=(4, 3))
    x = rng.normal(size=(2, 6, 3))
    distances, assignment = layer.assign(x)
    assert np.array_equal(np.argmin(distances * 3.5, axis=-1), assignment)


def test_single_cluster_collapses_rows() -> None:
    layer = ClusterLayer(1, 2, make_rng(0))
    out = layer(_random(1, 5, 2)).numpy()
    assert np.allclose(out[0], np.broadcast_to(layer.centers.data[0], (5, 2)))


def test_rows_on_centers_are_fixed_points() -> None:
    layer = ClusterLayer(3, 2, make_rng(0))
    x = Tensor(layer.centers.data[[2, 0, 1, 2]][None])
    assert np.allclose(layer(x).numpy(), x.numpy())


def test_center_gradient_counts_selected_rows() -> None:
    layer = ClusterLayer(3, 2, make_rng(0))
    layer.centers.data = np.array([[0.0, 0.0], [10.0, 10.0], [-10.0, 5.0]])
    x = Tensor(np.array([[[0.1, 0.0], [9.0, 9.0], [0.0, 0.2], [1.0, -1.0]]]))
    layer(x).sum().backward()
    assert np.allclose(layer.centers.grad, [[3.0, 3.0], [1.0, 1.0], [0.0, 0.0]])


def test_seed_centers_draws_from_given_rows() -> None:
    layer = ClusterLayer(2, 2, make_rng(0))
    layer.seed_centers(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert {tuple(row) for row in layer.centers.data} <= {(1.0, 2.0), (3.0, 4.0)}
    before = layer.centers.data.copy()
    layer.seed_centers(np.zeros((0, 2)))
    assert np.array_equal(layer.centers.data, before)


def test_centers_start_on_label_rows_and_training_keeps_them() -> None:
    model = CallGraphClassifier(_small_config(), _vocab_matrix())
    assert model.cluster is not None
    rows = {tuple(row) for row in model._isolated_label_rows()}  # pyright: ignore[reportPrivateUsage]
    centers = model.cluster.centers.data.copy()
    assert {tuple(row) for row in centers} <= rows

    model.train()
    model(pad_batch([_GRAPH]))
    assert np.array_equal(model.cluster.centers.data, centers)


# attention and conformer


def test_attention_single_token() -> None:
    attention = MultiHeadAttention(4, 2, 3, make_rng(0))
    x = _random(1, 1, 4)
    out = attention(x).numpy()
    assert np.all(attention.last_weights == 1.0)
    value = x.numpy()[0] @ attention.to_qkv.weight.data[:, 12:]
    expected = value @ attention.to_out.weight.data + attention.to_out.bias.data
    assert np.allclose(out[0], expected)


def test_attention_with_one_visible_key() -> None:
    attention = MultiHeadAttention(4, 2, 3, make_rng(0))
    out = attention(_random(1, 4, 4), np.array([[0.0, 0.0, 1.0, 0.0]])).numpy()
    for i in range(4):
        assert np.allclose(out[0, i], out[0, 2])
    assert np.allclose(attention.last_weights[..., 2], 1.0)


def test_attention_rows_sum_to_one() -> None:
    attention = MultiHeadAttention(6, 3, 2, make_rng(1))
    attention(_random(3, 5, 6, seed=4), np.array([[1, 1, 1, 1, 1], [1, 1, 0, 0, 0], [1, 0, 1, 0, 1]]))
    assert attention.last_weights is not None
    assert np.allclose(attention.last_weights.sum(axis=-1), 1.0, atol=1e-6)


def _block(p: float = 0.0) -> ConformerBlock:
    return ConformerBlock(8, 2, 4, 2, 3, p, make_rng(0), make_rng(0, "dropout"))


def test_conformer_keeps_shape() -> None:
    x = _random(2, 5, 8)
    assert _block(0.2)(x).shape == (2, 5, 8)


def test_conformer_zero_scales_leave_final_norm() -> None:
    block = _block()
    for scale in block.scales():
        scale.value.data = np.zeros(())
    x = _random(1, 4, 8)
    out = block(x).numpy()
    centered = x.numpy() - x.numpy().mean(axis=-1, keepdims=True)
    expected = centered / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + 1e-5)
    assert np.allclose(out, expected)


def test_conformer_default_scales() -> None:
    assert [s.value.data.item() for s in _block().scales()] == [0.5, 1.0, 1.0, 0.5]


def test_masked_max_pool() -> None:
    h = Tensor(np.array([[[1.0, -5.0], [2.0, -7.0], [100.0, 100.0]], [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]]))
    pooled = masked_max_pool(h, np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])).numpy()
    assert pooled.tolist() == [[2.0, -5.0], [0.0, 0.0]]


# gradients


LayerCase = tuple[Callable[[Tensor], Tensor], Tensor]


def _edge_predictor_case(seed: int) -> LayerCase:
    predictor = EdgePredictor(3, 4, make_rng(seed))
    mask = np.array([[1.0, 1.0, 1.0, 0.0]])
    return lambda t: predictor(t, mask, 128, make_rng(0)), _random(1, 4, 3, seed=seed)


def _gcn_case(seed: int) -> LayerCase:
    layer = GCNLayer(4, 3, make_rng(seed))
    edges = np.triu(make_rng(seed, "edges").random((5, 5)) < 0.4, 1).astype(np.float64)
    a_norm = normalize_adjacency_tensor(Tensor((edges + edges.T)[None]), np.ones((1, 5)))
    return lambda t: layer(t, a_norm), _random(1, 5, 4, seed=seed)


def _relational_case(seed: int) -> LayerCase:
    layer = RelationalGraphConv(4, 3, 2, make_rng(seed), adj_sq=True)
    adjacency = (make_rng(seed, "edges").random((1, 2, 5, 5)) < 0.3).astype(np.float64)
    return lambda t: layer(t, adjacency, np.ones((1, 5))), _random(1, 5, 4, seed=seed)


def _attention_case(seed: int) -> LayerCase:
    attention = MultiHeadAttention(4, 2, 3, make_rng(seed))
    mask = np.array([[1.0, 1.0, 1.0, 1.0, 0.0]])
    return lambda t: attention(t, mask), _random(1, 5, 4, seed=seed)


def _conformer_case(seed: int) -> LayerCase:
    block = ConformerBlock(8, 2, 4, 2, 3, 0.0, make_rng(seed), make_rng(seed, "dropout"))
    return block, _random(1, 4, 8, seed=seed)


def _cluster_centers_case(seed: int) -> LayerCase:
    # straight-through path is not a true gradient; check the centers only
    layer = ClusterLayer(3, 2, make_rng(seed))
    x = _random(1, 6, 2, seed=seed)
    return lambda _: layer(x), layer.centers


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize(
    "build",
    [
        _edge_predictor_case,
        _gcn_case,
        _relational_case,
        _attention_case,
        _conformer_case,
        _cluster_centers_case,
    ],
    ids=["edge_predictor", "gcn", "relational_conv", "attention", "conformer", "cluster_centers"],
)
def test_layer_gradients_match_finite_differences(
    build: Callable[[int], LayerCase], seed: int
) -> None:
    layer, point = build(seed)
    weights = make_rng(seed, "weights").uniform(0.5, 1.5, size=layer(point).shape)
    assert grad_check(lambda t: (layer(t) * weights).sum(), point) < 1e-4


# full classifier


def _vocab_matrix(rows: int = 6) -> np.ndarray:
    return make_rng(0, "vocab").uniform(-0.05, 0.05, size=(rows, 8))


def _sample(n: int, edges: list[tuple[int, int, int]], labels: list[int]) -> GraphSample:
    adjacency = np.zeros((2, n, n))
    for relation, i, j in edges:
        adjacency[relation, i, j] = 1.0
    matrix = _vocab_matrix()
    node_labels = np.array(labels, dtype=np.int64)
    return GraphSample(
        features=matrix[node_labels],
        adjacency=adjacency,
        adjacency_dict={},
        mask=np.ones(n),
        label=1,
        node_ids=tuple(f"n{i}" for i in range(n)),
        node_labels=node_labels,
    )


_GRAPH = _sample(5, [(0, 0, 1), (1, 1, 2), (0, 3, 4), (1, 4, 0)], [1, 2, 3, 4, 5])


@pytest.mark.parametrize("ablation", list(Ablation))
def test_forward_shapes_and_eval_determinism(ablation: Ablation) -> None:
    model = CallGraphClassifier(_small_config(ablation=ablation), _vocab_matrix())
    batch = pad_batch([_GRAPH, _sample(3, [(1, 0, 2)], [0, 1, 1])])
    model.eval()
    first = model(batch).numpy()
    second = model(batch).numpy()
    assert first.shape == (2, 2)
    assert np.array_equal(first, second)


def test_bce_head_has_one_logit() -> None:
    model = CallGraphClassifier(_small_config(loss=LossName.BCE_LOGITS), _vocab_matrix())
    batch = pad_batch([_GRAPH])
    assert model(batch).shape == (1, 1)
    probabilities = model.predict_proba(batch)
    assert 0.0 < probabilities[0] < 1.0


def test_identical_graphs_get_identical_logits() -> None:
    model = CallGraphClassifier(_small_config(), _vocab_matrix())
    model.eval()
    logits = model(pad_batch([_GRAPH, _GRAPH])).numpy()
    assert np.allclose(logits[0], logits[1], atol=1e-12)


def test_padding_does_not_change_logits() -> None:
    model = CallGraphClassifier(_small_config(), _vocab_matrix())
    model.eval()
    small = _sample(3, [(0, 0, 1), (1, 1, 2)], [1, 2, 3])
    alone = model(pad_batch([small])).numpy()
    padded = pad_batch([small, _GRAPH])
    together = model(padded).numpy()
    assert np.allclose(alone[0], together[0], atol=1e-10)

    padded.node_labels[0, 3:] = 5
    padded.adjacency[0, :, 3:, :] = 1.0
    padded.adjacency[0, :, :, 3:] = 1.0
    assert np.array_equal(model(padded).numpy(), together)


@pytest.mark.parametrize("ablation", [Ablation.GCN_ONLY, Ablation.EDGE_GCN, Ablation.EDGE_CLUSTER_GCN])
def test_node_permutation_without_conformer(ablation: Ablation) -> None:
    model = CallGraphClassifier(_small_config(ablation=ablation), _vocab_matrix())
    model.eval()
    order = np.array([3, 0, 4, 2, 1])
    inverse = np.argsort(order)
    permuted = GraphSample(
        features=_GRAPH.features[order],
        adjacency=_GRAPH.adjacency[:, order][:, :, order],
        adjacency_dict={},
        mask=_GRAPH.mask[order],
        label=1,
        node_ids=tuple(_GRAPH.node_ids[i] for i in order),
        node_labels=_GRAPH.node_labels[order],
    )
    assert np.array_equal(permuted.node_labels[inverse], _GRAPH.node_labels)
    logits = model(pad_batch([_GRAPH, permuted])).numpy()
    assert np.allclose(logits[0], logits[1], atol=1e-5)


def test_ablation_bypasses_edge_predictor() -> None:
    batch = pad_batch([_GRAPH])
    bare = CallGraphClassifier(_small_config(ablation=Ablation.GCN_ONLY), _vocab_matrix())
    bare(batch)
    assert bare.edge_predictor is None
    assert bare.edge_predictions == 0
    assert bare.cluster is None and bare.conformer is None
    full = CallGraphClassifier(_small_config(), _vocab_matrix())
    full(batch)
    assert full.edge_predictions == 1


def test_same_seed_same_weights() -> None:
    a = CallGraphClassifier(_small_config(), _vocab_matrix())
    b = CallGraphClassifier(_small_config(), _vocab_matrix())
    for (name, p), (_, q) in zip(a.named_parameters(), b.named_parameters(), strict=True):
        assert np.array_equal(p.data, q.data), name


def test_embedding_width_must_match() -> None:
    with pytest.raises(ConfigurationError, match="embedding_dim"):
        CallGraphClassifier(_small_config(), np.zeros((4, 5)))


def test_checkpoint_round_trip_preserves_predictions(tiny_dataset: tuple[list[GraphSample], LabelVocab]) -> None:
    samples, vocab = tiny_dataset
    model = CallGraphClassifier(_small_config(), vocab.embedding_matrix)
    batch = pad_batch(samples[:4])
    model.train()
    model(batch)
    checkpoint = model.to_checkpoint(vocab.labels)
    restored = CallGraphClassifier.from_checkpoint(checkpoint_from_bytes(checkpoint.to_bytes()))
    assert np.array_equal(restored.predict_proba(batch), model.predict_proba(batch))
    assert restored.to_checkpoint(vocab.labels).digest() == checkpoint.digest()
