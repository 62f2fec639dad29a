"""
The call-graph classifier.

Forward pass, in order: label embeddings -> learned edge scores over node pairs
-> symmetrized, normalized adjacency -> relational convolution over the internal
and external call relations -> GCN -> dropout -> cluster substitution -> GCN ->
conformer block -> dropout -> masked max-pool -> linear head.

Which of the edge predictor, cluster layer and conformer block take part is
decided by `ModelConfig.ablation`; a bypassed stage is the identity (the edge
predictor's bypass uses the original adjacency only).
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .checkpoint import Checkpoint
from .config import ModelConfig
from .consts import EDGE_SCORE_CLAMP
from .exceptions import (
    ConfigurationError,
    IncompatibleCheckpoint,
    PairOutOfRange,
    ShapeMismatch,
)
from .graph_ingest import Batch
from .nn import BatchNorm1d, Dropout, Embedding, LayerNorm, Linear, Module, Parameter, Scale
from .optim import OptimizerState
from .tensor import (
    Tensor,
    clamp,
    concat,
    default_dtype,
    depthwise_conv1d,
    exp,
    gelu,
    make_rng,
    masked_fill,
    no_grad,
    relu,
    scatter,
    sigmoid,
    softmax,
    take,
)


def combine_scores(forward: Tensor, backward: Tensor) -> Tensor:
    """exp(0.5 * (f(x_i, x_j) + f(x_j, x_i))) with the exponent clamped."""
    return exp(clamp((forward + backward) * 0.5, -EDGE_SCORE_CLAMP, EDGE_SCORE_CLAMP))


def pair_set(
    mask: np.ndarray, max_pair_nodes: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Ordered node pairs scored by the edge predictor, as (graph, src, dst) index arrays.

    All pairs of distinct real nodes are used for graphs with at most
    `max_pair_nodes` real nodes; larger graphs get a uniform sample of unordered
    pairs. The set is closed under swapping src and dst.
    """
    graphs: list[np.ndarray] = []
    sources: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    cap = max_pair_nodes * (max_pair_nodes - 1) // 2
    for b in range(mask.shape[0]):
        real = np.flatnonzero(mask[b] > 0)
        n = len(real)
        if n < 2:
            continue
        upper_i, upper_j = np.triu_indices(n, 1)
        if n > max_pair_nodes:
            chosen = np.sort(rng.choice(len(upper_i), size=cap, replace=False))
            upper_i, upper_j = upper_i[chosen], upper_j[chosen]
        i, j = real[upper_i], real[upper_j]
        graphs.append(np.full(2 * len(i), b, dtype=np.int64))
        sources.append(np.concatenate([i, j]))
        targets.append(np.concatenate([j, i]))
    if not graphs:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    return np.concatenate(graphs), np.concatenate(sources), np.concatenate(targets)


class EdgePredictor(Module):
    """
    Two-layer scorer f(x_i, x_j): linear(2C -> hidden) -> batch norm -> ReLU -> linear(hidden -> 1).

    The first layer is evaluated as x_i W_a + x_j W_b on the node rows before
    gathering, which equals applying it to the concatenated pair.
    """

    def __init__(self, channels: int, hidden: int, rng: np.random.Generator) -> None:
        self.channels = channels
        self.lin1 = Linear(2 * channels, hidden, rng)
        self.norm = BatchNorm1d(hidden)
        self.lin2 = Linear(hidden, 1, rng)
        self.calls = 0

    def score(self, rows: Tensor, src: np.ndarray, dst: np.ndarray) -> Tensor:
        """Raw f(rows[src], rows[dst]) for every index pair; rows is [M, C]."""
        c = self.channels
        left = rows @ self.lin1.weight[:c]
        right = rows @ self.lin1.weight[c:]
        hidden = take(left, src) + take(right, dst)
        if self.lin1.bias is not None:
            hidden = hidden + self.lin1.bias
        return self.lin2(relu(self.norm(hidden))).reshape(-1)

    def forward(
        self, x: Tensor, mask: np.ndarray, max_pair_nodes: int, rng: np.random.Generator
    ) -> Tensor:
        """
        Scores the pair set of every graph and returns the predicted adjacency [B, N, N].

        Pairs outside the set (diagonal, padded nodes, unsampled pairs) are zero.
        """
        self.calls += 1
        b, n, c = x.shape
        graph, src, dst = pair_set(mask, max_pair_nodes, rng)
        if not len(graph):
            return Tensor(np.zeros((b, n, n)), dtype=x.dtype)
        raw = self.score(x.reshape(b * n, c), graph * n + src, graph * n + dst)
        scores = scatter(raw, graph * n * n + src * n + dst, (b, n, n))
        scored = np.zeros((b, n, n), dtype=x.dtype)
        scored[graph, src, dst] = 1.0
        return combine_scores(scores, scores.swapaxes(1, 2)) * scored

    def predict_pairs(
        self, x: Tensor, pairs: Sequence[tuple[int, int]], mask: np.ndarray | None = None
    ) -> Tensor:
        """
        Edge scores y_ij for explicit pairs, one column per pair: [B, len(pairs)].

        :raises PairOutOfRange: on a self pair or a pair touching a padded or missing node
        """
        self.calls += 1
        b, n, c = x.shape
        real = np.ones((b, n)) if mask is None else np.asarray(mask)
        for i, j in pairs:
            if i == j:
                raise PairOutOfRange(f"self pair ({i}, {j})")
            if not (0 <= i < n and 0 <= j < n) or not (real[:, i].all() and real[:, j].all()):
                raise PairOutOfRange(f"pair ({i}, {j}) references a padded or missing node")
        src = np.array([i for i, _ in pairs], dtype=np.int64)
        dst = np.array([j for _, j in pairs], dtype=np.int64)
        offsets = (np.arange(b, dtype=np.int64) * n)[:, None]
        flat_src = (offsets + src).reshape(-1)
        flat_dst = (offsets + dst).reshape(-1)
        raw = self.score(
            x.reshape(b * n, c),
            np.concatenate([flat_src, flat_dst]),
            np.concatenate([flat_dst, flat_src]),
        )
        half = len(flat_src)
        return combine_scores(raw[:half], raw[half:]).reshape(b, len(pairs))


def symmetrize_adjacency(
    original: np.ndarray, predicted: Tensor | None, mask: np.ndarray
) -> Tensor:
    """A = A_orig + A_pred, then A + A^T, with padded rows and columns zeroed."""
    a = Tensor(original, dtype=mask.dtype)
    if predicted is not None:
        a = a + predicted
    a = a + a.swapaxes(1, 2)
    return a * (mask[:, :, None] * mask[:, None, :])


def normalize_adjacency_tensor(a: Tensor, mask: np.ndarray) -> Tensor:
    """Differentiable D^-1/2 (A + I) D^-1/2; padded rows and columns stay zero."""
    b, n, _ = a.shape
    with_self = a + mask[:, :, None] * np.eye(n, dtype=mask.dtype)
    degree = with_self.sum(axis=-1) + (1.0 - mask)
    inv_sqrt = (degree ** -0.5) * mask
    return inv_sqrt.reshape(b, n, 1) * with_self * inv_sqrt.reshape(b, 1, n)


class RelationalGraphConv(Module):
    """Propagates x through (I + A_r) for every relation r, concatenates, then projects."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        relations: int,
        rng: np.random.Generator,
        adj_sq: bool = False,
    ) -> None:
        self.relations = relations
        self.adj_sq = adj_sq
        self.fc = Linear(relations * in_features, out_features, rng)

    def propagate(self, x: Tensor, adjacency: np.ndarray) -> Tensor:
        """
        :param x: [B, N, C]
        :param adjacency: [B, R, N, N]
        :returns: [B, N, R * C]
        """
        if adjacency.ndim != 4 or adjacency.shape[1] != self.relations:
            raise ShapeMismatch("relational_graph_conv", x.shape, adjacency.shape)
        n = adjacency.shape[-1]
        operator = adjacency + np.eye(n)
        if self.adj_sq:
            operator = operator + adjacency @ adjacency
        operator = operator.astype(x.dtype)
        return concat([Tensor(operator[:, r], dtype=x.dtype) @ x for r in range(self.relations)])

    def forward(self, x: Tensor, adjacency: np.ndarray, mask: np.ndarray) -> Tensor:
        return self.fc(self.propagate(x, adjacency)) * mask[..., None]


class GCNLayer(Module):
    """ReLU(Ã H W), no bias."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator) -> None:
        bound = np.sqrt(6.0 / (in_features + out_features))
        self.weight = Parameter(rng.uniform(-bound, bound, size=(in_features, out_features)))

    def forward(self, h: Tensor, a_norm: Tensor) -> Tensor:
        return relu(a_norm @ (h @ self.weight))


class ClusterLayer(Module):
    """
    Replaces every node row by its nearest trainable center.

    Gradients reach the input straight through, and each center receives the
    gradient of the rows assigned to it.
    """

    def __init__(self, clusters: int, channels: int, rng: np.random.Generator) -> None:
        bound = 1.0 / clusters
        self.centers = Parameter(rng.uniform(-bound, bound, size=(clusters, channels)))
        self._rng = rng

    def assign(self, x: Tensor | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Squared distances [..., K] to every center and the nearest center's index.

        Ties resolve to the lowest index.
        """
        rows = x.data if isinstance(x, Tensor) else np.asarray(x)
        distances = ((rows[..., None, :] - self.centers.data) ** 2).sum(axis=-1)
        return distances, np.argmin(distances, axis=-1)

    def seed_centers(self, rows: np.ndarray) -> None:
        """
        Sets the centers to K rows drawn from `rows` [M, C].

        Draws with replacement only when there are fewer than K rows; no rows
        leaves the centers as they are.
        """
        if not len(rows):
            return
        k = self.centers.shape[0]
        picked = self._rng.choice(len(rows), size=k, replace=len(rows) < k)
        self.centers.data = np.array(rows[picked], dtype=self.centers.dtype)

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        if mask is None:
            mask = np.ones(x.shape[:-1], dtype=x.dtype)
        _, assignment = self.assign(x)
        substituted = take(self.centers, assignment, axis=0) + (x - x.detach())
        return substituted * mask[..., None]


class MultiHeadAttention(Module):
    """Scaled dot-product attention; padded key positions get -inf before the softmax."""

    def __init__(self, dim: int, heads: int, head_dim: int, rng: np.random.Generator) -> None:
        self.heads = heads
        self.head_dim = head_dim
        inner = heads * head_dim
        self.to_qkv = Linear(dim, 3 * inner, rng, bias=False)
        self.to_out = Linear(inner, dim, rng)
        self.last_weights: np.ndarray | None = None

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        b, n, _ = x.shape
        h, d = self.heads, self.head_dim
        inner = h * d
        qkv = self.to_qkv(x)

        def heads_first(t: Tensor) -> Tensor:
            return t.reshape(b, n, h, d).transpose(0, 2, 1, 3)

        q = heads_first(qkv[:, :, :inner])
        k = heads_first(qkv[:, :, inner : 2 * inner])
        v = heads_first(qkv[:, :, 2 * inner :])
        scores = (q @ k.swapaxes(-1, -2)) * (d**-0.5)
        if mask is not None:
            scores = masked_fill(scores, (np.asarray(mask) == 0)[:, None, None, :], -np.inf)
        weights = softmax(scores, axis=-1)
        self.last_weights = weights.data
        out = (weights @ v).transpose(0, 2, 1, 3).reshape(b, n, inner)
        return self.to_out(out)


class FeedForward(Module):
    def __init__(
        self,
        dim: int,
        mult: int,
        p: float,
        rng: np.random.Generator,
        dropout_rng: np.random.Generator,
    ) -> None:
        self.lin1 = Linear(dim, dim * mult, rng)
        self.drop1 = Dropout(p, dropout_rng)
        self.lin2 = Linear(dim * mult, dim, rng)
        self.drop2 = Dropout(p, dropout_rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.drop2(self.lin2(self.drop1(gelu(self.lin1(x)))))


class ConvModule(Module):
    """Pointwise(2C) -> gated linear unit -> depthwise conv over nodes -> batch norm -> GELU -> pointwise(C)."""

    def __init__(
        self,
        dim: int,
        kernel_size: int,
        p: float,
        rng: np.random.Generator,
        dropout_rng: np.random.Generator,
    ) -> None:
        self.pointwise_in = Linear(dim, 2 * dim, rng)
        bound = 1.0 / np.sqrt(kernel_size)
        self.depthwise_weight = Parameter(rng.uniform(-bound, bound, size=(dim, kernel_size)))
        self.depthwise_bias = Parameter(np.zeros(dim))
        self.norm = BatchNorm1d(dim)
        self.pointwise_out = Linear(dim, dim, rng)
        self.drop = Dropout(p, dropout_rng)

    def forward(self, x: Tensor, mask: np.ndarray) -> Tensor:
        dim = x.shape[-1]
        h = self.pointwise_in(x)
        h = h[:, :, :dim] * sigmoid(h[:, :, dim:])
        h = h * mask[..., None]
        h = depthwise_conv1d(h, self.depthwise_weight, self.depthwise_bias)
        h = gelu(self.norm(h, mask))
        return self.drop(self.pointwise_out(h))


class ConformerBlock(Module):
    """
    Half-step feed-forward, attention, convolution and a second half-step
    feed-forward, each as x + scale * sublayer(layer_norm(x)), then a final layer norm.
    """

    def __init__(
        self,
        dim: int,
        heads: int,
        head_dim: int,
        ff_mult: int,
        kernel_size: int,
        p: float,
        rng: np.random.Generator,
        dropout_rng: np.random.Generator,
    ) -> None:
        self.ff1_norm = LayerNorm(dim)
        self.ff1 = FeedForward(dim, ff_mult, p, rng, dropout_rng)
        self.ff1_scale = Scale(0.5)
        self.attention_norm = LayerNorm(dim)
        self.attention = MultiHeadAttention(dim, heads, head_dim, rng)
        self.attention_scale = Scale(1.0)
        self.conv_norm = LayerNorm(dim)
        self.conv = ConvModule(dim, kernel_size, p, rng, dropout_rng)
        self.conv_scale = Scale(1.0)
        self.ff2_norm = LayerNorm(dim)
        self.ff2 = FeedForward(dim, ff_mult, p, rng, dropout_rng)
        self.ff2_scale = Scale(0.5)
        self.post_norm = LayerNorm(dim)

    def scales(self) -> list[Scale]:
        return [self.ff1_scale, self.attention_scale, self.conv_scale, self.ff2_scale]

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        if mask is None:
            mask = np.ones(x.shape[:-1], dtype=x.dtype)
        x = x + self.ff1_scale(self.ff1(self.ff1_norm(x)))
        x = x + self.attention_scale(self.attention(self.attention_norm(x), mask))
        x = x + self.conv_scale(self.conv(self.conv_norm(x), mask))
        x = x + self.ff2_scale(self.ff2(self.ff2_norm(x)))
        return self.post_norm(x) * mask[..., None]


def masked_max_pool(h: Tensor, mask: np.ndarray) -> Tensor:
    """Max over the node axis ignoring padded nodes; graphs without nodes pool to zeros."""
    filled = masked_fill(h, (mask == 0)[..., None], -np.inf)
    pooled = filled.max(axis=1)
    empty = (mask.sum(axis=1) == 0)[:, None]
    return masked_fill(pooled, empty, 0.0)


class CallGraphClassifier(Module):
    """
    Binary classifier over call graphs (1 = contains an unchecked external call).

    :param config: architecture settings
    :param embedding_matrix: initial label embeddings, one row per vocabulary entry
    """

    def __init__(self, config: ModelConfig, embedding_matrix: np.ndarray) -> None:
        if embedding_matrix.ndim != 2 or embedding_matrix.shape[1] != config.embedding_dim:
            raise ConfigurationError(
                f"embedding matrix shape {embedding_matrix.shape} does not match "
                f"embedding_dim={config.embedding_dim}"
            )
        config = ModelConfig.model_validate(config.model_dump(include=set(ModelConfig.model_fields)))
        self.config = config
        ablation = config.ablation
        c, hidden = config.embedding_dim, config.hidden
        with default_dtype(config.dtype):
            rng = make_rng(config.seed, "init")
            dropout_rng = make_rng(config.seed, "dropout")
            self.embedding = Embedding(embedding_matrix, trainable=not config.freeze_embeddings)
            self.edge_predictor = (
                EdgePredictor(c, config.edge_hidden, rng) if ablation.uses_edge_predictor else None
            )
            self.relational = RelationalGraphConv(c, hidden, 2, rng, adj_sq=config.adj_sq)
            self.gcn1 = GCNLayer(hidden, hidden, rng)
            self.dropout1 = Dropout(config.dropout, dropout_rng)
            self.cluster = (
                ClusterLayer(config.clusters, hidden, make_rng(config.seed, "cluster"))
                if ablation.uses_cluster
                else None
            )
            self.gcn2 = GCNLayer(hidden, hidden, rng)
            self.conformer = (
                ConformerBlock(
                    hidden,
                    config.heads,
                    config.head_dim,
                    config.ff_mult,
                    config.conv_kernel_size,
                    config.dropout,
                    rng,
                    dropout_rng,
                )
                if ablation.uses_conformer
                else None
            )
            self.dropout2 = Dropout(config.dropout, dropout_rng)
            self.classifier = Linear(hidden, config.num_logits, rng)
            if self.cluster is not None:
                self.cluster.seed_centers(self._isolated_label_rows())
        self._pair_rng = make_rng(config.seed, "pairs")

    def _isolated_label_rows(self) -> np.ndarray:
        """First-GCN output [V, hidden] for every vocabulary label as an edgeless one-node graph."""
        weight = self.embedding.weight.data
        v = weight.shape[0]
        x = Tensor(weight[:, None, :], dtype=weight.dtype)
        with no_grad():
            h = self.relational(
                x, np.zeros((v, 2, 1, 1), dtype=weight.dtype), np.ones((v, 1), dtype=weight.dtype)
            )
            h = self.gcn1(h, Tensor(np.ones((v, 1, 1)), dtype=weight.dtype))
        return h.data[:, 0, :]

    @property
    def dtype(self) -> np.dtype:
        return self.embedding.weight.dtype

    @property
    def edge_predictions(self) -> int:
        """How often the edge predictor ran; 0 when it is bypassed."""
        return self.edge_predictor.calls if self.edge_predictor is not None else 0

    def forward(self, batch: Batch) -> Tensor:
        """Logits [B, 2] (or [B, 1] for the BCE head)."""
        mask = batch.mask.astype(self.dtype)
        adjacency = batch.adjacency.astype(self.dtype)
        x = self.embedding(batch.node_labels) * mask[..., None]

        predicted: Tensor | None = None
        if self.edge_predictor is not None:
            rng = self._pair_rng if self.training else make_rng(self.config.seed, "pairs", "eval")
            predicted = self.edge_predictor(x, mask, self.config.max_pair_nodes, rng)
        a = symmetrize_adjacency(adjacency.sum(axis=1), predicted, mask)
        a_norm = normalize_adjacency_tensor(a, mask)

        h = self.relational(x, adjacency, mask)
        h = self.dropout1(self.gcn1(h, a_norm))
        if self.cluster is not None:
            h = self.cluster(h, mask)
        h = self.gcn2(h, a_norm) * mask[..., None]
        if self.conformer is not None:
            h = self.conformer(h, mask)
        h = self.dropout2(h)
        return self.classifier(masked_max_pool(h, mask))

    def predict_proba(self, batch: Batch) -> np.ndarray:
        """Positive-class probability per graph, computed in eval mode without a graph."""
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                logits = self.forward(batch)
        finally:
            self.train(was_training)
        if logits.shape[-1] == 1:
            return sigmoid(logits).data.reshape(-1).astype(np.float64)
        return softmax(logits, axis=-1).data[:, 1].astype(np.float64)

    def predict(self, batch: Batch) -> np.ndarray:
        """0/1 verdict per graph: argmax of two logits, or probability >= 0.5 for one."""
        return (self.predict_proba(batch) >= 0.5).astype(np.int64)

    def to_checkpoint(
        self,
        vocab_labels: Sequence[str],
        optimizer: OptimizerState | None = None,
        epoch: int = 0,
        best_f1: float = 0.0,
    ) -> Checkpoint:
        return Checkpoint(
            config=self.config,
            vocab_labels=list(vocab_labels),
            params={name: p.data.copy() for name, p in self.named_parameters()},
            buffers={name: np.array(value, copy=True) for name, value in self.named_buffers()},
            optimizer=_copy_state(optimizer) if optimizer is not None else None,
            epoch=epoch,
            best_f1=best_f1,
        )

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> CallGraphClassifier:
        """
        :raises IncompatibleCheckpoint: when the stored arrays do not fit the stored config
        """
        embedding = checkpoint.params.get("embedding.weight")
        if embedding is None:
            raise IncompatibleCheckpoint("checkpoint has no embedding.weight")
        if checkpoint.vocab_labels and len(checkpoint.vocab_labels) != embedding.shape[0]:
            raise IncompatibleCheckpoint(
                f"vocabulary has {len(checkpoint.vocab_labels)} labels, "
                f"embedding has {embedding.shape[0]} rows"
            )
        try:
            model = cls(checkpoint.config, embedding)
        except ConfigurationError as e:
            raise IncompatibleCheckpoint(str(e)) from e
        model.load_arrays(checkpoint.params, checkpoint.buffers)
        return model


def _copy_state(state: OptimizerState) -> OptimizerState:
    return OptimizerState(
        lr=state.lr,
        betas=state.betas,
        eps=state.eps,
        weight_decay=state.weight_decay,
        step=state.step,
        m={name: array.copy() for name, array in state.m.items()},
        v={name: array.copy() for name, array in state.v.items()},
    )
