"""
Call graphs: nodes are functions, edges are calls typed internal or external.

`build_call_graph` links the call sites of every parsed file of a project by
name. Calls that cannot be linked to a declaration become leaf nodes whose id is
the callee expression as written.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from . import print_messages
from .exceptions import NoSourcesFound, SourceSyntaxError
from .solidity_parser import (
    CallKind,
    CallSite,
    ContractInfo,
    FunctionDecl,
    ParseResult,
    ProjectIndex,
    classify_member_call,
    parse_source,
)

EdgeKind = CallKind


@dataclass(frozen=True, order=True, slots=True)
class GraphNode:
    node_id: str
    label: str


@dataclass(frozen=True, order=True, slots=True)
class GraphEdge:
    src: str
    dst: str
    kind: EdgeKind = EdgeKind.INTERNAL


@dataclass(frozen=True)
class CallGraph:
    """
    An immutable call graph in canonical form.

    Nodes are kept sorted by id and unique (the first label given for an id wins);
    edges are sorted and unique. Every edge endpoint must be a node.
    """

    nodes: tuple[GraphNode, ...] = ()
    edges: tuple[GraphEdge, ...] = ()

    def __post_init__(self) -> None:
        by_id: dict[str, GraphNode] = {}
        for node in self.nodes:
            by_id.setdefault(node.node_id, node)
        nodes = tuple(sorted(by_id.values()))
        edges = tuple(sorted(set(self.edges)))
        for edge in edges:
            for endpoint in (edge.src, edge.dst):
                if endpoint not in by_id:
                    raise ValueError(
                        f"edge {edge.src!r} -> {edge.dst!r} references unknown node {endpoint!r}"
                    )
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)

    @property
    def node_ids(self) -> list[str]:
        return [node.node_id for node in self.nodes]

    def index_of(self) -> dict[str, int]:
        """Position of every node id in `nodes`."""
        return {node.node_id: i for i, node in enumerate(self.nodes)}

    def external_edges(self) -> list[GraphEdge]:
        return [edge for edge in self.edges if edge.kind == EdgeKind.EXTERNAL]

    def label_of(self, node_id: str) -> str:
        for node in self.nodes:
            if node.node_id == node_id:
                return node.label
        raise KeyError(node_id)

    def summary(self) -> str:
        external = len(self.external_edges())
        return f"{len(self.nodes)} nodes, {len(self.edges)} edges, {external} external"


def _leaf_label(target: str) -> str:
    return target.rsplit(".", 1)[-1]


def _reclassify(site: CallSite, index: ProjectIndex) -> CallSite | None:
    """Re-applies the rule table with everything the project declares."""
    if site.receiver is None or site.from_header:
        return site
    classified = classify_member_call(
        site.receiver,
        site.receiver_type,
        site.member,
        index.get(site.caller.contract_name),
        index,
    )
    if classified is None:
        return None
    kind, target = classified
    if kind == site.kind and target == site.target:
        return site
    return CallSite(
        caller=site.caller,
        callee_expr=site.callee_expr,
        kind=kind,
        line=site.line,
        column=site.column,
        member=site.member,
        arg_count=site.arg_count,
        target=target,
        receiver=site.receiver,
        receiver_type=site.receiver_type,
        from_header=site.from_header,
    )


def _strip_type(type_name: str | None) -> str | None:
    if type_name is None:
        return None
    return type_name.removesuffix("[]").removesuffix(" payable")


def resolve_call(site: CallSite, index: ProjectIndex) -> FunctionDecl | None:
    """
    Finds the declaration a call site refers to.

    :returns: the declaration, or None when the callee is not declared in the project
    """
    contract = site.caller.contract_name
    if site.receiver is None:
        kinds = ("modifier",) if site.from_header else None
        found = index.find_function(contract, site.member, site.arg_count, kinds)
        if found is None and not site.from_header:
            # Free functions live under the empty contract name.
            found = index.find_function("", site.member, site.arg_count)
        return found
    if site.receiver == "this":
        return index.find_function(contract, site.member, site.arg_count)
    if site.receiver == "super":
        return index.find_function(contract, site.member, site.arg_count, skip_self=True)
    owners: list[str] = []
    if site.target != site.callee_expr:
        owners.append(site.target.rsplit(".", 1)[0])
    owners.append(site.receiver)
    receiver_type = _strip_type(site.receiver_type)
    if receiver_type is not None:
        owners.append(receiver_type)
    for owner in owners:
        if index.get(owner) is not None:
            found = index.find_function(owner, site.member, site.arg_count)
            if found is not None:
                return found
    return None


def build_call_graph(
    decls: Iterable[FunctionDecl],
    callsites: Iterable[CallSite],
    contracts: Iterable[ContractInfo] | None = None,
) -> CallGraph:
    """
    Links the declarations and call sites of one project into a call graph.

    :param decls: every declaration of the project
    :param callsites: every call site of the project
    :param contracts: contract summaries; without them only declared names are linked
    :returns: graph with a node per declaration plus a leaf per unresolved callee
    """
    decls = list(decls)
    index = ProjectIndex(contracts) if contracts is not None else ProjectIndex.from_decls(decls)
    nodes: list[GraphNode] = [GraphNode(decl.node_id, decl.base_name) for decl in decls]
    edges: list[GraphEdge] = []
    for original in callsites:
        site = _reclassify(original, index)
        if site is None:
            continue
        callee = resolve_call(site, index)
        if callee is not None:
            dst = callee.node_id
        elif site.from_header:
            # Header words that are not declared modifiers are base constructors or unknown.
            continue
        else:
            dst = site.target
            nodes.append(GraphNode(dst, _leaf_label(dst)))
        edges.append(GraphEdge(site.caller.node_id, dst, site.kind))
    return CallGraph(tuple(nodes), tuple(edges))


@dataclass
class ProjectExtraction:
    """Result of extracting one project: its graph and what went wrong per file."""

    name: str
    graph: CallGraph
    files: list[str] = field(default_factory=list)
    parse_results: list[ParseResult] = field(default_factory=list)
    errors: list[SourceSyntaxError] = field(default_factory=list)


def build_project_graph(name: str, sources: Mapping[str, str]) -> ProjectExtraction:
    """
    Parses every source of a project (in sorted file order) and links them.

    Files that cannot be tokenized are reported and skipped; parse errors inside a
    file are reported while the rest of the file is kept.

    :param name: project name
    :param sources: file name to source text
    """
    results: list[ParseResult] = []
    errors: list[SourceSyntaxError] = []
    for file in sorted(sources):
        try:
            result = parse_source(sources[file], file=file)
        except SourceSyntaxError as e:
            errors.append(e)
            continue
        results.append(result)
        errors.extend(result.errors)

    graph = build_call_graph(
        (decl for result in results for decl in result.decls),
        (site for result in results for site in result.callsites),
        [contract for result in results for contract in result.contracts],
    )
    print_messages.debug(f"project {name}: {graph.summary()}")
    return ProjectExtraction(name, graph, sorted(sources), results, errors)


def discover_projects(source_dir: Path) -> dict[str, list[Path]]:
    """
    Groups `.sol` files into projects.

    Every immediate subdirectory is one project holding all `.sol` files below it;
    every `.sol` file directly inside `source_dir` is a project of its own.

    :raises NoSourcesFound: when no `.sol` file exists under `source_dir`
    """
    if not source_dir.is_dir():
        raise NoSourcesFound(f"source directory does not exist: {source_dir}")
    projects: dict[str, list[Path]] = {}
    for entry in sorted(source_dir.iterdir()):
        if entry.is_dir():
            files = sorted(entry.rglob("*.sol"))
            if files:
                projects[entry.name] = files
        elif entry.suffix == ".sol":
            projects[entry.stem] = [entry]
    if not projects:
        raise NoSourcesFound(f"no .sol files found in {source_dir}")
    return projects


def extract_project(name: str, files: Sequence[Path], root: Path) -> ProjectExtraction:
    """Reads a project's files and builds its call graph; file names are relative to `root`."""
    sources = {
        path.relative_to(root).as_posix(): path.read_text(encoding="utf-8") for path in files
    }
    return build_project_graph(name, sources)
