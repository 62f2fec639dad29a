"""
Featurized dataset cache.

A cache holds the label vocabulary and every sample's adjacency stack and label
indices, keyed by a SHA-256 fingerprint of the manifest rows, the DOT contents,
the embedding width and the seed. A cache whose fingerprint or format version
differs is ignored and rebuilt.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import decode_array, encode_array, write_archive
from .exceptions import IncompatibleCheckpoint
from .graph_ingest import (
    GraphSample,
    LabelVocab,
    ManifestEntry,
    adjacency_dict,
    build_vocab,
    featurize_all,
    load_graphs,
)
from .print_messages import debug
from .version import CACHE_FORMAT_VERSION


def dataset_fingerprint(entries: Sequence[ManifestEntry], embedding_dim: int, seed: int) -> str:
    """SHA-256 over manifest rows, DOT file contents and featurization settings."""
    digest = hashlib.sha256()
    digest.update(f"v{CACHE_FORMAT_VERSION}\n{embedding_dim}\n{seed}\n".encode())
    for entry in entries:
        digest.update(f"{entry.path.name}\t{entry.label}\n".encode())
        digest.update(hashlib.sha256(entry.path.read_bytes()).digest())
    return digest.hexdigest()


@dataclass
class CachedDataset:
    fingerprint: str
    vocab: LabelVocab
    samples: list[GraphSample]


def _sample_entries(k: int, sample: GraphSample) -> dict[str, bytes]:
    return {
        f"samples/{k:06d}/adjacency.npy": encode_array(sample.adjacency),
        f"samples/{k:06d}/node_labels.npy": encode_array(sample.node_labels),
    }


def save_cache(path: Path, dataset: CachedDataset) -> None:
    entries: dict[str, bytes] = {
        "vocab/embedding.npy": encode_array(dataset.vocab.embedding_matrix)
    }
    for k, sample in enumerate(dataset.samples):
        entries.update(_sample_entries(k, sample))
    meta = {
        "format_version": CACHE_FORMAT_VERSION,
        "fingerprint": dataset.fingerprint,
        "vocab_labels": dataset.vocab.labels,
        "samples": [
            {"name": s.name, "label": s.label, "node_ids": list(s.node_ids)}
            for s in dataset.samples
        ],
    }
    entries["meta.json"] = json.dumps(meta, sort_keys=True, indent=2).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(write_archive(entries))


def load_cache(path: Path, fingerprint: str | None = None) -> CachedDataset | None:
    """
    Reads a cache file.

    :param fingerprint: when given, a cache built from other inputs counts as missing
    :returns: the dataset, or None when the file is absent, stale or unreadable
    """
    if not path.is_file():
        return None
    try:
        with zipfile.ZipFile(io.BytesIO(path.read_bytes())) as zf:
            meta = json.loads(zf.read("meta.json"))
            if meta.get("format_version") != CACHE_FORMAT_VERSION:
                debug(f"ignoring cache {path}: format version {meta.get('format_version')}")
                return None
            if fingerprint is not None and meta.get("fingerprint") != fingerprint:
                debug(f"ignoring cache {path}: inputs changed")
                return None
            embedding = decode_array(zf.read("vocab/embedding.npy"), "vocab/embedding.npy")
            vocab = LabelVocab(list(meta["vocab_labels"]), embedding)
            samples: list[GraphSample] = []
            for k, record in enumerate(meta["samples"]):
                prefix = f"samples/{k:06d}/"
                adjacency = decode_array(zf.read(prefix + "adjacency.npy"), prefix)
                node_labels = decode_array(zf.read(prefix + "node_labels.npy"), prefix)
                samples.append(_restore_sample(record, adjacency, node_labels, embedding))
    except (KeyError, ValueError, zipfile.BadZipFile, IncompatibleCheckpoint) as e:
        debug(f"ignoring unreadable cache {path}: {e}")
        return None
    return CachedDataset(str(meta["fingerprint"]), vocab, samples)


def _restore_sample(
    record: dict[str, object],
    adjacency: np.ndarray,
    node_labels: np.ndarray,
    embedding: np.ndarray,
) -> GraphSample:
    n = int(node_labels.shape[0])
    features = embedding[node_labels] if n else np.zeros((0, embedding.shape[1]))
    return GraphSample(
        features=np.array(features, dtype=np.float64),
        adjacency=adjacency,
        adjacency_dict=adjacency_dict(adjacency),
        mask=np.ones(n),
        label=int(record["label"]),  # type: ignore[arg-type]
        node_ids=tuple(record["node_ids"]),  # type: ignore[arg-type]
        node_labels=node_labels,
        name=str(record["name"]),
    )


def build_dataset(
    entries: Sequence[ManifestEntry],
    embedding_dim: int,
    seed: int,
    cache: Path | None = None,
) -> CachedDataset:
    """
    Featurizes the manifest's graphs, reusing `cache` when its fingerprint matches.

    A rebuilt dataset is written back to `cache`.

    :raises ManifestError: when a DOT file cannot be parsed
    """
    fingerprint = dataset_fingerprint(entries, embedding_dim, seed)
    if cache is not None:
        cached = load_cache(cache, fingerprint)
        if cached is not None:
            debug(f"reusing featurized dataset from {cache}")
            return cached
    graphs = load_graphs(entries)
    vocab = build_vocab([item.graph for item in graphs], embedding_dim, seed)
    dataset = CachedDataset(fingerprint, vocab, featurize_all(graphs, vocab))
    if cache is not None:
        save_cache(cache, dataset)
    return dataset
