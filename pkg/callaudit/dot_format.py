"""
Reading and writing call graphs as Graphviz DOT.

The writer emits one fixed layout, byte for byte::

    digraph G {
      "A.f" [label="f"];
      "A.f" -> "B.g" [color="orange"];
    }

The reader accepts that layout and Surya-style output: quoted or bare ids,
attribute lists, `node`/`edge`/`graph` defaults, edge chains and nested
`subgraph` clusters, which are flattened. An edge whose color differs from the
default is external.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from typing import Any, NamedTuple

from funcparserlib.lexer import LexerError, Token, make_tokenizer
from funcparserlib.parser import NoParseError, finished, forward_decl, many, maybe, oneplus, tok

from .call_graph import CallGraph, EdgeKind, GraphEdge, GraphNode
from .consts import EXTERNAL_EDGE_COLOR, SURYA_INTERNAL_EDGE_COLOR
from .exceptions import DotSyntaxError, UnknownAttributeWarning

KNOWN_ATTRIBUTES: frozenset[str] = frozenset(
    {
        "label", "color", "style", "fillcolor", "fontcolor", "fontname", "fontsize", "penwidth",
        "shape", "bgcolor", "ratio", "page", "compound", "arrowhead", "arrowtail", "arrowsize",
        "rankdir", "rank", "dir", "splines", "nodesep", "ranksep", "size", "margin", "width",
        "height", "fixedsize", "constraint", "weight", "headlabel", "taillabel", "xlabel",
        "tooltip", "URL", "href", "id", "class", "concentrate", "newrank", "overlap", "labelloc",
        "labeljust", "peripheries", "regular", "sides", "center", "layout", "lp", "pos",
    }
)  # fmt: skip

_SPECS = [
    ("comment", (r"/\*[\s\S]*?\*/",)),
    ("comment", (r"//[^\r\n]*",)),
    ("comment", (r"^#[^\r\n]*", re.MULTILINE)),
    ("space", (r"[ \t\r\n]+",)),
    ("name", (r"[A-Za-z\200-\U0010ffff_][A-Za-z\200-\U0010ffff_0-9]*",)),
    ("op", (r"->|--|[{};,=\[\]:]",)),
    ("number", (r"-?(?:\.[0-9]+|[0-9]+(?:\.[0-9]*)?)",)),
    ("string", (r'"(?:\\.|[^"\\])*"',)),
]
_USELESS = ("comment", "space")
_tokenizer = make_tokenizer(_SPECS)
_UNESCAPE = re.compile(r'\\(["\\])')


class _Attr(NamedTuple):
    name: str
    value: str | None


class _Node(NamedTuple):
    node_id: str
    attrs: list[_Attr]


class _Edge(NamedTuple):
    endpoints: list[Any]
    attrs: list[_Attr]
    undirected: bool


class _DefAttrs(NamedTuple):
    target: str
    attrs: list[_Attr]


class _SubGraph(NamedTuple):
    name: str | None
    stmts: list[Any]


class _Graph(NamedTuple):
    strict: str | None
    kind: str
    name: str | None
    stmts: list[Any]


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _unquote(token: Token) -> str:
    if token.type == "string":
        return _UNESCAPE.sub(r"\1", token.value[1:-1])
    return token.value


def emit_dot(graph: CallGraph) -> str:
    """
    Renders a call graph as DOT text.

    Nodes come first (sorted by id), then edges (sorted); external edges carry
    `color="orange"` and internal edges no attribute at all.
    """
    lines = ["digraph G {"]
    for node in graph.nodes:
        lines.append(f"  {_quote(node.node_id)} [label={_quote(node.label)}];")
    for edge in graph.edges:
        attrs = f' [color="{EXTERNAL_EDGE_COLOR}"]' if edge.kind == EdgeKind.EXTERNAL else ""
        lines.append(f"  {_quote(edge.src)} -> {_quote(edge.dst)}{attrs};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _tokenize(text: str) -> list[Token]:
    try:
        return [token for token in _tokenizer(text) if token.type not in _USELESS]
    except LexerError as e:
        line = e.place[0] if e.place else None
        raise DotSyntaxError(f"unexpected character: {e.msg!r}", line) from e


def _grammar() -> Any:
    def op(s: str) -> Any:
        return tok("op", s)

    def kw(s: str) -> Any:
        return tok("name", s)

    def flatten(groups: list[list[_Attr]]) -> list[_Attr]:
        return [attr for group in groups for attr in group]

    dot_id = (tok("name") | tok("number") | tok("string")).named("id") >> _unquote
    port = -op(":") + dot_id + maybe(-op(":") + dot_id)
    node_id = dot_id + -maybe(port)
    a_list = (
        dot_id + maybe(-op("=") + dot_id) + -maybe(op(",") | op(";"))
        >> (lambda args: _Attr(*args))
    )
    attr_list = many(-op("[") + many(a_list) + -op("]")) >> flatten
    attr_stmt = (kw("graph") | kw("node") | kw("edge")) + attr_list >> (
        lambda args: _DefAttrs(args[0].value, args[1])
    )
    graph_attr = dot_id + -op("=") + dot_id >> (lambda args: _DefAttrs("graph", [_Attr(*args)]))
    node_stmt = node_id + attr_list >> (lambda args: _Node(*args))

    subgraph = forward_decl()
    edge_op = op("->") | op("--")
    edge_rhs = edge_op + (subgraph | node_id)
    edge_stmt = (subgraph | node_id) + oneplus(edge_rhs) + attr_list >> (
        lambda args: _Edge(
            [args[0], *(rhs[1] for rhs in args[1])],
            args[2],
            any(rhs[0].value == "--" for rhs in args[1]),
        )
    )
    stmt = attr_stmt | edge_stmt | subgraph | graph_attr | node_stmt
    stmt_list = many(stmt + -maybe(op(";")))
    graph_body = -op("{") + stmt_list + -op("}")
    subgraph.define(
        maybe(-kw("subgraph") + maybe(dot_id)) + graph_body
        >> (lambda args: _SubGraph(args[0], args[1]))
    )
    graph = (
        maybe(kw("strict"))
        + (kw("digraph") | kw("graph"))
        + maybe(dot_id)
        + graph_body
        >> (lambda args: _Graph(args[0] and args[0].value, args[1].value, args[2], args[3]))
    )
    return graph + -finished


_DOT_GRAMMAR = _grammar()


@dataclass
class _Scope:
    node_defaults: dict[str, str | None] = field(default_factory=dict)
    edge_defaults: dict[str, str | None] = field(default_factory=dict)

    def child(self) -> _Scope:
        return _Scope(dict(self.node_defaults), dict(self.edge_defaults))


@dataclass
class _Collector:
    labels: dict[str, str] = field(default_factory=dict)
    explicit: set[str] = field(default_factory=set)
    edges: list[GraphEdge] = field(default_factory=list)
    warned: set[str] = field(default_factory=set)

    def check_attrs(self, attrs: list[_Attr]) -> None:
        for attr in attrs:
            if attr.name not in KNOWN_ATTRIBUTES and attr.name not in self.warned:
                self.warned.add(attr.name)
                warnings.warn(
                    f"ignoring unknown DOT attribute {attr.name!r}",
                    UnknownAttributeWarning,
                    stacklevel=4,
                )

    def add_node(self, node_id: str, label: str | None) -> None:
        if label is not None and label != "\\N":
            self.labels[node_id] = label
            self.explicit.add(node_id)
        elif node_id not in self.labels:
            self.labels[node_id] = node_id


def _edge_kind(attrs: dict[str, str | None], scope: _Scope) -> EdgeKind:
    color = attrs.get("color", scope.edge_defaults.get("color"))
    if color is None:
        label = attrs.get("label") or ""
        return EdgeKind.EXTERNAL if "external" in label.lower() else EdgeKind.INTERNAL
    defaults = {scope.edge_defaults.get("color"), SURYA_INTERNAL_EDGE_COLOR}
    return EdgeKind.INTERNAL if color in defaults else EdgeKind.EXTERNAL


def _walk(stmts: list[Any], scope: _Scope, out: _Collector) -> list[str]:
    """Flattens statements into `out`; returns the node ids mentioned, in order."""
    mentioned: list[str] = []
    for stmt in stmts:
        if isinstance(stmt, _DefAttrs):
            out.check_attrs(stmt.attrs)
            values = {attr.name: attr.value for attr in stmt.attrs}
            if stmt.target == "node":
                scope.node_defaults.update(values)
            elif stmt.target == "edge":
                scope.edge_defaults.update(values)
        elif isinstance(stmt, _Node):
            out.check_attrs(stmt.attrs)
            values = {attr.name: attr.value for attr in stmt.attrs}
            out.add_node(stmt.node_id, values.get("label", scope.node_defaults.get("label")))
            mentioned.append(stmt.node_id)
        elif isinstance(stmt, _SubGraph):
            mentioned.extend(_walk(stmt.stmts, scope.child(), out))
        elif isinstance(stmt, _Edge):
            if stmt.undirected:
                raise DotSyntaxError("undirected edge '--' in a digraph")
            out.check_attrs(stmt.attrs)
            groups: list[list[str]] = []
            for endpoint in stmt.endpoints:
                if isinstance(endpoint, _SubGraph):
                    groups.append(_walk(endpoint.stmts, scope.child(), out))
                else:
                    out.add_node(endpoint, None)
                    groups.append([endpoint])
            values = {attr.name: attr.value for attr in stmt.attrs}
            kind = _edge_kind(values, scope)
            for sources, targets in zip(groups, groups[1:], strict=False):
                for src in sources:
                    for dst in targets:
                        out.edges.append(GraphEdge(src, dst, kind))
            for group in groups:
                mentioned.extend(group)
    return mentioned


def parse_dot(text: str) -> CallGraph:
    """
    Reads a DOT digraph into a call graph.

    :param text: DOT source
    :returns: the flattened graph; nodes without a label are labeled by their id
    :raises DotSyntaxError: when the text is not a well-formed digraph
    """
    tokens = _tokenize(text)
    try:
        tree: _Graph = _DOT_GRAMMAR.parse(tokens)
    except NoParseError as e:
        line = None
        state = getattr(e, "state", None)
        position = getattr(state, "max", None)
        if tokens and position is not None:
            line = tokens[min(position, len(tokens) - 1)].start[0]
        raise DotSyntaxError(f"malformed DOT: {e.msg}", line) from e
    if tree.kind != "digraph":
        raise DotSyntaxError("expected a digraph, got an undirected graph")
    collector = _Collector()
    _walk(tree.stmts, _Scope(), collector)
    nodes = tuple(GraphNode(node_id, label) for node_id, label in collector.labels.items())
    return CallGraph(nodes, tuple(collector.edges))
