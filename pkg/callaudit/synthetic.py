"""
Synthetic labelled call graphs for desk-scale experiments.

A graph is positive when at least one external call leaves a function that has
no adjacent return-value check node (a node labelled `require_check`,
`if_check` or `assert_check`). In a negative graph every external caller is
wired to a check node. Unchecked callers get a non-check helper node instead,
so both classes have the same node count distribution.
"""

from __future__ import annotations

from pathlib import Path
from typing import Self

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .call_graph import CallGraph, EdgeKind, GraphEdge, GraphNode
from .consts import CHECK_LABELS
from .dot_format import emit_dot
from .graph_ingest import LabeledGraph, write_manifest
from .tensor import make_rng

CONTRACT_NAMES: tuple[str, ...] = ("Vault", "Pool", "Router", "Staking", "Treasury")
FUNCTION_NAMES: tuple[str, ...] = (
    "deposit",
    "withdraw",
    "claim",
    "stake",
    "unstake",
    "harvest",
    "mint",
    "burn",
    "swap",
    "rebalance",
    "setFee",
    "pause",
)
EXTERNAL_MEMBERS: tuple[str, ...] = ("transfer", "transferFrom", "call", "send", "approve")
RECEIVERS: tuple[str, ...] = ("rewardToken", "stakingToken", "recipient", "oracle")
HELPER_LABELS: tuple[str, ...] = ("update_state", "emit_event", "log_call")
_CHECKS: tuple[str, ...] = tuple(sorted(CHECK_LABELS))


class SyntheticSpec(BaseModel):
    """Shape of a generated corpus."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    count: int = Field(500, ge=1)
    min_nodes: int = Field(5, ge=5)
    max_nodes: int = Field(40, ge=5)
    external_edge_probability: float = Field(0.3, ge=0, le=1)
    motif_probability: float = Field(0.5, ge=0, le=1)
    extra_edge_probability: float = Field(0.1, ge=0, le=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_range(self) -> Self:
        if self.min_nodes > self.max_nodes:
            raise ValueError(f"min_nodes {self.min_nodes} exceeds max_nodes {self.max_nodes}")
        return self


def generate_graph(spec: SyntheticSpec, index: int) -> LabeledGraph:
    """The `index`-th graph of the corpus described by `spec`; independent of other indices."""
    rng = make_rng(spec.seed, "synthetic", index)
    n = int(rng.integers(spec.min_nodes, spec.max_nodes + 1))
    positive = bool(rng.random() < spec.motif_probability)

    capacity = (n - 2) // 2
    callers_count = int(rng.binomial(capacity, spec.external_edge_probability))
    if positive:
        callers_count = max(callers_count, 1)
    function_count = n - 2 * callers_count
    unchecked_count = int(rng.integers(1, callers_count + 1)) if positive else 0

    contracts = CONTRACT_NAMES[: int(rng.integers(1, 4))]
    functions: list[GraphNode] = []
    for i in range(function_count):
        contract = contracts[int(rng.integers(len(contracts)))]
        name = FUNCTION_NAMES[int(rng.integers(len(FUNCTION_NAMES)))]
        functions.append(GraphNode(f"{contract}.{name}_{i}", name))

    edges: list[GraphEdge] = []
    for i in range(1, function_count):
        parent = int(rng.integers(i))
        edges.append(GraphEdge(functions[parent].node_id, functions[i].node_id))
    for i in range(function_count):
        for j in range(function_count):
            if i != j and rng.random() < spec.extra_edge_probability / max(function_count, 1):
                edges.append(GraphEdge(functions[i].node_id, functions[j].node_id))

    nodes = list(functions)
    callers = rng.choice(function_count, size=callers_count, replace=False)
    unchecked = set(rng.choice(callers, size=unchecked_count, replace=False).tolist())
    for k, caller_index in enumerate(callers.tolist()):
        caller = functions[caller_index].node_id
        receiver = RECEIVERS[int(rng.integers(len(RECEIVERS)))]
        member = EXTERNAL_MEMBERS[int(rng.integers(len(EXTERNAL_MEMBERS)))]
        leaf = GraphNode(f"{receiver}_{k}.{member}", member)
        if caller_index in unchecked:
            label = HELPER_LABELS[int(rng.integers(len(HELPER_LABELS)))]
        else:
            label = _CHECKS[int(rng.integers(len(_CHECKS)))]
        companion = GraphNode(f"{caller}:{label}_{k}", label)
        nodes.extend([leaf, companion])
        edges.append(GraphEdge(caller, leaf.node_id, EdgeKind.EXTERNAL))
        edges.append(GraphEdge(caller, companion.node_id))

    return LabeledGraph(f"graph_{index:04d}", CallGraph(tuple(nodes), tuple(edges)), int(positive))


def generate_graphs(spec: SyntheticSpec) -> list[LabeledGraph]:
    return [generate_graph(spec, i) for i in range(spec.count)]


def write_corpus(graphs: list[LabeledGraph], out_dir: Path) -> Path:
    """
    Writes one DOT file per graph plus `manifest.jsonl`.

    :returns: path of the manifest
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    for item in graphs:
        (out_dir / f"{item.name}.dot").write_text(emit_dot(item.graph), encoding="utf-8")
    manifest = out_dir / "manifest.jsonl"
    write_manifest(manifest, [(f"{item.name}.dot", item.label) for item in graphs])
    return manifest


def generate_corpus(spec: SyntheticSpec, out_dir: Path) -> Path:
    return write_corpus(generate_graphs(spec), out_dir)


def _check_neighbours(graph: CallGraph) -> dict[str, bool]:
    labels = {node.node_id: node.label for node in graph.nodes}
    checked: dict[str, bool] = {}
    for edge in graph.edges:
        if labels[edge.dst] in CHECK_LABELS:
            checked[edge.src] = True
        if labels[edge.src] in CHECK_LABELS:
            checked[edge.dst] = True
    return checked


def find_unchecked_external_calls(graph: CallGraph) -> list[GraphEdge]:
    """External edges whose calling node has no adjacent check node, in edge order."""
    checked = _check_neighbours(graph)
    return [edge for edge in graph.external_edges() if not checked.get(edge.src, False)]
