"""
Numeric views of call graphs: label vocabulary, per-relation adjacency, masks and batches.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from .call_graph import CallGraph, EdgeKind
from .consts import OOV_LABEL, RELATIONS
from .dot_format import parse_dot
from .exceptions import ConfigurationError, DataError, EmptyCorpus, EmptyDataset, ManifestError
from .tensor import make_rng

EMBEDDING_INIT_RANGE = 0.05


@dataclass(eq=False)
class LabelVocab:
    """
    Dense label indices plus the initial embedding matrix.

    Index 0 is reserved for labels never seen while building the vocabulary.
    """

    labels: list[str]
    embedding_matrix: np.ndarray
    index: dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        if not self.labels or self.labels[0] != OOV_LABEL:
            raise ValueError(f"vocabulary must start with {OOV_LABEL!r}")
        if self.embedding_matrix.shape[0] != len(self.labels):
            raise ValueError(
                f"embedding matrix has {self.embedding_matrix.shape[0]} rows "
                f"for {len(self.labels)} labels"
            )
        self.index = {label: i for i, label in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def embedding_dim(self) -> int:
        return int(self.embedding_matrix.shape[1])

    def lookup(self, label: str) -> int:
        return self.index.get(label, 0)


def build_vocab(graphs: Sequence[CallGraph], embedding_dim: int = 64, seed: int = 0) -> LabelVocab:
    """
    Collects the distinct node labels of a corpus and draws their initial embeddings.

    :param graphs: the corpus
    :param embedding_dim: embedding width
    :param seed: seed of the uniform [-0.05, 0.05] initialization
    :raises EmptyCorpus: when `graphs` is empty
    """
    if not graphs:
        raise EmptyCorpus("cannot build a label vocabulary from zero graphs")
    if embedding_dim < 1:
        raise ConfigurationError(f"embedding_dim must be >= 1, got {embedding_dim}")
    distinct = {node.label for graph in graphs for node in graph.nodes} - {OOV_LABEL}
    labels = [OOV_LABEL, *sorted(distinct)]
    rng = make_rng(seed, "vocab")
    matrix = rng.uniform(
        -EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE, size=(len(labels), embedding_dim)
    )
    return LabelVocab(labels, matrix)


@dataclass(eq=False)
class GraphSample:
    """One featurized graph. Relation 0 is internal calls, relation 1 external calls."""

    features: np.ndarray
    adjacency: np.ndarray
    adjacency_dict: dict[int, list[int]]
    mask: np.ndarray
    label: int
    node_ids: tuple[str, ...]
    node_labels: np.ndarray
    name: str = ""

    @property
    def num_nodes(self) -> int:
        return int(self.mask.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GraphSample):
            return NotImplemented
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.adjacency, other.adjacency)
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.node_labels, other.node_labels)
            and self.adjacency_dict == other.adjacency_dict
            and self.label == other.label
            and self.node_ids == other.node_ids
            and self.name == other.name
        )


def adjacency_dict(adjacency: np.ndarray) -> dict[int, list[int]]:
    union = adjacency.any(axis=0)
    return {
        int(i): [int(j) for j in np.flatnonzero(row)] for i, row in enumerate(union) if row.any()
    }


def featurize(graph: CallGraph, vocab: LabelVocab, label: int = 0, name: str = "") -> GraphSample:
    """
    Turns a call graph into features, a relation-split adjacency stack and a mask.

    Rows follow the graph's node order (sorted by id).
    """
    n = len(graph.nodes)
    position = graph.index_of()
    node_labels = np.array([vocab.lookup(node.label) for node in graph.nodes], dtype=np.int64)
    features = vocab.embedding_matrix[node_labels] if n else np.zeros((0, vocab.embedding_dim))
    adjacency = np.zeros((len(RELATIONS), n, n))
    for edge in graph.edges:
        relation = 1 if edge.kind == EdgeKind.EXTERNAL else 0
        adjacency[relation, position[edge.src], position[edge.dst]] = 1.0
    return GraphSample(
        features=np.array(features, dtype=np.float64),
        adjacency=adjacency,
        adjacency_dict=adjacency_dict(adjacency),
        mask=np.ones(n),
        label=int(label),
        node_ids=tuple(graph.node_ids),
        node_labels=node_labels,
        name=name,
    )


@dataclass(eq=False)
class Batch:
    """Zero-padded samples stacked along a leading batch axis."""

    features: np.ndarray
    adjacency: np.ndarray
    mask: np.ndarray
    labels: np.ndarray
    node_labels: np.ndarray
    sizes: list[int]
    node_ids: list[tuple[str, ...]]
    names: list[str]

    def __len__(self) -> int:
        return len(self.sizes)


def pad_batch(samples: Sequence[GraphSample]) -> Batch:
    """
    Pads samples to the largest node count and stacks them.

    :raises EmptyDataset: when `samples` is empty
    """
    if not samples:
        raise EmptyDataset("cannot batch zero samples")
    n_max = max(sample.num_nodes for sample in samples)
    channels = samples[0].features.shape[1]
    relations = samples[0].adjacency.shape[0]
    b = len(samples)
    features = np.zeros((b, n_max, channels))
    adjacency = np.zeros((b, relations, n_max, n_max))
    mask = np.zeros((b, n_max))
    node_labels = np.zeros((b, n_max), dtype=np.int64)
    for k, sample in enumerate(samples):
        n = sample.num_nodes
        features[k, :n] = sample.features
        adjacency[k, :, :n, :n] = sample.adjacency
        mask[k, :n] = sample.mask
        node_labels[k, :n] = sample.node_labels
    return Batch(
        features=features,
        adjacency=adjacency,
        mask=mask,
        labels=np.array([sample.label for sample in samples], dtype=np.int64),
        node_labels=node_labels,
        sizes=[sample.num_nodes for sample in samples],
        node_ids=[sample.node_ids for sample in samples],
        names=[sample.name for sample in samples],
    )


def unpad_batch(batch: Batch) -> list[GraphSample]:
    """Splits a batch back into its samples."""
    samples: list[GraphSample] = []
    for k, n in enumerate(batch.sizes):
        adjacency = batch.adjacency[k, :, :n, :n].copy()
        samples.append(
            GraphSample(
                features=batch.features[k, :n].copy(),
                adjacency=adjacency,
                adjacency_dict=adjacency_dict(adjacency),
                mask=batch.mask[k, :n].copy(),
                label=int(batch.labels[k]),
                node_ids=batch.node_ids[k],
                node_labels=batch.node_labels[k, :n].copy(),
                name=batch.names[k],
            )
        )
    return samples


def normalize_adjacency(adjacency: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """
    Symmetric normalization D^-1/2 (A + I) D^-1/2 over the last two axes.

    The self term is only added for real nodes, so padded rows and columns stay zero.

    :param adjacency: [..., N, N]
    :param mask: [..., N]; all nodes are real when omitted
    """
    n = adjacency.shape[-1]
    if mask is None:
        mask = np.ones(adjacency.shape[:-1])
    with_self = adjacency + mask[..., :, None] * np.eye(n)
    degree = with_self.sum(axis=-1)
    inv_sqrt = np.zeros_like(degree)
    np.divide(1.0, np.sqrt(degree), out=inv_sqrt, where=degree > 0)
    return inv_sqrt[..., :, None] * with_self * inv_sqrt[..., None, :]


class ManifestRecord(BaseModel):
    """One row of a dataset manifest."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    path: str
    label: Literal[0, 1]


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: int
    row: int


def read_manifest(manifest: Path) -> list[ManifestEntry]:
    """
    Reads a JSON Lines manifest; paths are resolved against the manifest's directory.

    :raises ManifestError: on malformed rows or missing files, naming the row
    """
    if not manifest.is_file():
        raise ManifestError(f"manifest not found: {manifest}")
    entries: list[ManifestEntry] = []
    base = manifest.parent
    for row, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = ManifestRecord.model_validate_json(line)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc']) or 'row'}: {err['msg']}"
                for err in e.errors()
            )
            raise ManifestError(problems, row) from e
        path = (base / record.path).resolve()
        if not path.is_file():
            raise ManifestError(f"file not found: {record.path}", row)
        entries.append(ManifestEntry(path, record.label, row))
    if not entries:
        raise EmptyDataset(f"manifest has no rows: {manifest}")
    return entries


def write_manifest(manifest: Path, rows: Iterable[tuple[str, int]]) -> None:
    """Writes `(relative path, label)` rows as JSON Lines."""
    lines = [
        ManifestRecord.model_validate({"path": path, "label": label}).model_dump_json()
        for path, label in rows
    ]
    manifest.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


@dataclass
class LabeledGraph:
    name: str
    graph: CallGraph
    label: int


def load_graphs(entries: Sequence[ManifestEntry]) -> list[LabeledGraph]:
    """
    Parses the DOT file of every manifest entry.

    :raises ManifestError: when a referenced file is not valid DOT
    """
    graphs: list[LabeledGraph] = []
    for entry in entries:
        try:
            graph = parse_dot(entry.path.read_text(encoding="utf-8"))
        except DataError as e:
            raise ManifestError(f"{entry.path.name}: {e}", entry.row) from e
        graphs.append(LabeledGraph(entry.path.stem, graph, entry.label))
    return graphs


def featurize_all(graphs: Sequence[LabeledGraph], vocab: LabelVocab) -> list[GraphSample]:
    return [featurize(item.graph, vocab, item.label, item.name) for item in graphs]
