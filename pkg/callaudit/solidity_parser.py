"""
Declaration-level parser for a pragmatic subset of Solidity.

The grammar is written with funcparserlib combinators over the lexer's tokens.
Contracts, interfaces and libraries are parsed down to their members. Function,
constructor, modifier, fallback and receive bodies are not typed: they are kept
as nested bracket groups and scanned for call patterns only, and each call is
classified as internal or external with the rule table in `classify_member_call`.

Each top-level item and each contract member is matched on its own. A member
that does not match is reported as a `ParseError` at the farthest token the
grammar reached; parsing resumes at the next member or contract keyword, so one
broken function does not hide the rest of the file.
"""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, NamedTuple

from funcparserlib.parser import NoParseError, forward_decl, many, maybe, some

from .exceptions import ParseError
from .solidity_lexer import SourceToken, TokenKind, is_elementary_type, tokenize


class Visibility(StrEnum):
    PUBLIC = "public"
    EXTERNAL = "external"
    INTERNAL = "internal"
    PRIVATE = "private"


class CallKind(StrEnum):
    INTERNAL = "internal"
    EXTERNAL = "external"


@dataclass(frozen=True, slots=True)
class FunctionDecl:
    """
    A callable member of a contract.

    `function_name` is unique within its contract: overloads carry an
    `/argcount` suffix (and `#k` when the arity repeats). `base_name` is the
    name as written.
    """

    contract_name: str
    function_name: str
    base_name: str
    kind: str
    visibility: Visibility
    param_count: int
    body_span: tuple[int, int] | None
    line: int
    file: str | None = None

    @property
    def node_id(self) -> str:
        if not self.contract_name:
            return self.function_name
        return f"{self.contract_name}.{self.function_name}"


@dataclass(frozen=True, slots=True)
class CallSite:
    """
    One call expression found in a function body (or a modifier in its header).

    `callee_expr` is the callee as written, e.g. `rewardToken.transfer`.
    `target` is the name used to link the call: equal to `callee_expr` except for
    `using L for T` calls, where it is `L.member`.
    """

    caller: FunctionDecl
    callee_expr: str
    kind: CallKind
    line: int
    column: int
    member: str
    arg_count: int
    target: str
    receiver: str | None = None
    receiver_type: str | None = None
    from_header: bool = False


@dataclass
class ContractInfo:
    """What the linker needs to know about one contract, interface or library."""

    name: str
    kind: str
    bases: tuple[str, ...] = ()
    state_vars: dict[str, str] = field(default_factory=dict)
    usings: list[tuple[str, str]] = field(default_factory=list)
    functions: dict[str, list[FunctionDecl]] = field(default_factory=dict)
    type_names: set[str] = field(default_factory=set)
    file: str | None = None


@dataclass
class ParseResult:
    decls: list[FunctionDecl] = field(default_factory=list)
    callsites: list[CallSite] = field(default_factory=list)
    contracts: list[ContractInfo] = field(default_factory=list)
    imports: list[str] = field(default_factory=list)
    errors: list[ParseError] = field(default_factory=list)
    file: str | None = None


_FUNCTION_KEYWORDS = frozenset({"function", "constructor", "modifier", "fallback", "receive"})
_MEMBER_KEYWORDS = _FUNCTION_KEYWORDS | {"event", "struct", "enum", "error", "using"}
_UNIT_KEYWORDS = frozenset({"contract", "interface", "library", "abstract"})
_VISIBILITIES = frozenset(v.value for v in Visibility)
_STATE_VAR_MODIFIERS = frozenset(
    {"public", "private", "internal", "constant", "immutable", "override", "transient"}
)
_STORAGE_LOCATIONS = frozenset({"memory", "storage", "calldata"})

BUILTIN_FUNCTIONS: frozenset[str] = frozenset(
    {
        "require", "assert", "revert", "keccak256", "sha256", "sha3", "ripemd160",
        "ecrecover", "addmod", "mulmod", "selfdestruct", "suicide", "blockhash", "blobhash",
        "gasleft", "payable", "address", "type",
    }
)  # fmt: skip
BUILTIN_NAMESPACES: frozenset[str] = frozenset({"abi", "msg", "block", "tx", "bytes", "string"})
LOW_LEVEL_CALLS: frozenset[str] = frozenset({"call", "delegatecall", "staticcall", "send"})
ADDRESS_MEMBERS: frozenset[str] = LOW_LEVEL_CALLS | {"transfer", "balance", "code", "codehash"}
ARRAY_MEMBERS: frozenset[str] = frozenset({"push", "pop"})

_DEFAULT_VISIBILITY = {
    "function": Visibility.PUBLIC,
    "constructor": Visibility.PUBLIC,
    "fallback": Visibility.EXTERNAL,
    "receive": Visibility.EXTERNAL,
    "modifier": Visibility.INTERNAL,
}


def _is_address(type_name: str | None) -> bool:
    return type_name in ("address", "address payable")


def _is_value_type(type_name: str | None) -> bool:
    return type_name is not None and is_elementary_type(type_name) and not _is_address(type_name)


class ProjectIndex:
    """Contracts of one project by name, with inheritance-aware lookups."""

    def __init__(self, contracts: Iterable[ContractInfo]) -> None:
        self.contracts: dict[str, ContractInfo] = {}
        for contract in contracts:
            self.contracts.setdefault(contract.name, contract)
        self._type_names: set[str] = set(self.contracts)
        self._function_names: set[str] = set()
        for contract in self.contracts.values():
            self._type_names |= contract.type_names
            self._function_names |= set(contract.functions)

    @classmethod
    def from_decls(cls, decls: Iterable[FunctionDecl]) -> ProjectIndex:
        """Builds an index that knows only contract names and their functions."""
        contracts: dict[str, ContractInfo] = {}
        for decl in decls:
            info = contracts.setdefault(
                decl.contract_name, ContractInfo(decl.contract_name, "contract", file=decl.file)
            )
            info.functions.setdefault(decl.base_name, []).append(decl)
        return cls(contracts.values())

    def get(self, name: str | None) -> ContractInfo | None:
        if name is None:
            return None
        return self.contracts.get(name)

    def is_library(self, name: str) -> bool:
        info = self.contracts.get(name)
        return info is not None and info.kind == "library"

    def is_type_name(self, name: str) -> bool:
        return name in self._type_names

    def declares_function(self, name: str) -> bool:
        return name in self._function_names

    def linearize(self, name: str) -> list[ContractInfo]:
        """The contract followed by its parsed bases, breadth first, without repeats."""
        order: list[ContractInfo] = []
        seen: set[str] = set()
        queue: deque[str] = deque([name])
        while queue:
            current = queue.popleft()
            if current in seen:
                continue
            seen.add(current)
            info = self.contracts.get(current)
            if info is None:
                continue
            order.append(info)
            queue.extend(info.bases)
        return order

    def find_function(
        self,
        contract_name: str,
        name: str,
        arity: int,
        kinds: tuple[str, ...] | None = None,
        skip_self: bool = False,
    ) -> FunctionDecl | None:
        """
        Looks up `name` in a contract and then its bases.

        Among overloads the one with matching arity wins; otherwise the first declared.
        """
        chain = self.linearize(contract_name)
        if skip_self:
            chain = chain[1:]
        for info in chain:
            candidates = [
                decl
                for decl in info.functions.get(name, [])
                if kinds is None or decl.kind in kinds
            ]
            if not candidates:
                continue
            for decl in candidates:
                if decl.param_count == arity:
                    return decl
            return candidates[0]
        return None

    def state_var_type(self, contract_name: str, var: str) -> str | None:
        for info in self.linearize(contract_name):
            if var in info.state_vars:
                return info.state_vars[var]
        return None

    def inherits_from(self, contract_name: str, base: str) -> bool:
        return any(info.name == base for info in self.linearize(contract_name)[1:])


def classify_member_call(
    receiver: str,
    receiver_type: str | None,
    member: str,
    contract: ContractInfo | None,
    index: ProjectIndex,
) -> tuple[CallKind, str] | None:
    """
    Applies the external-call rule table to `receiver.member(...)`.

    :param receiver: receiver expression as written (`rewardToken`, `msg.sender`, `this`)
    :param receiver_type: declared type of the receiver when known
    :param member: the called member name
    :param contract: the contract containing the call
    :param index: contracts known to the project
    :returns: `(kind, target)`, or None when the expression is a builtin and not a call site
    """
    callee = f"{receiver}.{member}"
    if member in LOW_LEVEL_CALLS:
        return CallKind.EXTERNAL, callee
    if receiver == "this":
        return CallKind.EXTERNAL, callee
    if receiver == "super":
        return CallKind.INTERNAL, callee
    if receiver in BUILTIN_NAMESPACES or receiver.startswith("type("):
        return None
    if member in ARRAY_MEMBERS and (
        receiver_type is None or receiver_type.endswith("]") or receiver_type == "bytes"
    ):
        return None
    if index.is_library(receiver):
        return CallKind.INTERNAL, callee
    if contract is not None:
        if receiver in {lib for lib, _ in contract.usings}:
            return CallKind.INTERNAL, callee
        if index.inherits_from(contract.name, receiver):
            return CallKind.INTERNAL, callee
        for lib, target in contract.usings:
            if target not in ("*", receiver_type):
                continue
            library = index.get(lib)
            if library is not None:
                if member in library.functions:
                    return CallKind.INTERNAL, f"{lib}.{member}"
            elif _is_value_type(receiver_type) or (
                _is_address(receiver_type) and member not in ADDRESS_MEMBERS
            ):
                return CallKind.INTERNAL, f"{lib}.{member}"
    return CallKind.EXTERNAL, callee


@dataclass(frozen=True, slots=True)
class Group:
    """A bracketed run of tokens: `( ... )`, `[ ... ]` or `{ ... }`, with nested groups as items."""

    opener: SourceToken
    items: tuple[Item, ...]
    closer: SourceToken

    @property
    def bracket(self) -> str:
        return self.opener.text

    @property
    def text(self) -> str:
        return self.opener.text + "".join(item.text for item in self.items) + self.closer.text

    @property
    def arg_count(self) -> int:
        if not self.items:
            return 0
        return 1 + sum(1 for item in self.items if _is_punct(item, ","))


Item = SourceToken | Group


class _Statement(NamedTuple):
    end: SourceToken


class _Import(NamedTuple):
    paths: list[str]
    end: SourceToken


class _ContractHead(NamedTuple):
    kind: str
    name: str
    bases: tuple[str, ...]
    end: SourceToken


class _TypeDeclaration(NamedTuple):
    name: str
    end: SourceToken


class _StateVariable(NamedTuple):
    type_text: str
    name: str
    end: SourceToken


class _Using(NamedTuple):
    library: str | None
    target: str
    end: SourceToken


class _FunctionStart(NamedTuple):
    kind: str
    name: str
    line: int


class _HeaderCall(NamedTuple):
    token: SourceToken
    arg_count: int


class _FunctionHeader(NamedTuple):
    name: str
    kind: str
    visibility: Visibility
    params: list[tuple[str, str | None]]
    body: Group | None
    line: int
    header_calls: list[_HeaderCall]
    end: SourceToken


_BRACKETS = {"(": ")", "[": "]", "{": "}"}
_BRACKET_TEXTS = frozenset("()[]{}")
# Longest local declaration the body scanner tries to match, in items.
_LOCAL_WINDOW = 16


def _is_punct(item: object, text: str) -> bool:
    return isinstance(item, SourceToken) and item.kind == TokenKind.PUNCTUATION and item.text == text


def _is_bracket(item: object) -> bool:
    return (
        isinstance(item, SourceToken)
        and item.kind == TokenKind.PUNCTUATION
        and item.text in _BRACKET_TEXTS
    )


def _group_of(item: object, bracket: str) -> Group | None:
    if isinstance(item, Group) and item.bracket == bracket:
        return item
    return None


def _token(kind: TokenKind, text: str | None = None, name: str | None = None) -> Any:
    def matches(item: object) -> bool:
        return isinstance(item, SourceToken) and item.kind == kind and text in (None, item.text)

    return some(matches).named(name or repr(text))


def _kw(text: str) -> Any:
    return _token(TokenKind.KEYWORD, text)


def _punct(text: str) -> Any:
    return _token(TokenKind.PUNCTUATION, text)


def _keyword_in(words: Iterable[str], name: str) -> Any:
    allowed = frozenset(words)
    return some(
        lambda item: isinstance(item, SourceToken)
        and item.kind == TokenKind.KEYWORD
        and item.text in allowed
    ).named(name)


def _name(expected: str) -> Any:
    return some(lambda item: isinstance(item, SourceToken) and item.is_name).named(expected)


def _identifier(expected: str) -> Any:
    return _token(TokenKind.IDENTIFIER, name=expected)


def _make_group(args: Any) -> Group:
    opener, items, closer = args
    return Group(opener, tuple(items), closer)


_nested = forward_decl()
_plain = some(lambda item: isinstance(item, SourceToken) and not _is_bracket(item)).named("a token")
_not_semicolon = some(
    lambda item: isinstance(item, SourceToken) and not _is_bracket(item) and not item.is_(";")
).named("a token")


def _bracketed(opener: str) -> Any:
    return _punct(opener) + many(_nested | _plain) + _punct(_BRACKETS[opener]) >> _make_group


_nested.define(_bracketed("(") | _bracketed("[") | _bracketed("{"))


def _grouped(opener: str) -> Any:
    """A bracket group, either still flat in the stream or already built by an outer pass."""
    built = some(lambda item: _group_of(item, opener) is not None)
    return (built | _bracketed(opener)).named(repr(opener))


def _nothing(_: Any) -> None:
    return None


# Statements run to the next top-level `;`; a stray closing bracket ends them with an error.
_rest = -many(_nested | _not_semicolon) + _punct(";")

_storage = _keyword_in(_STORAGE_LOCATIONS, "a storage location")


def _dotted(expected: str) -> Any:
    return _name(expected) + many(-_punct(".") + _name(expected)) >> (
        lambda args: ".".join(token.text for token in [args[0], *args[1]])
    )


def _value_type(args: Any) -> str:
    head, path, payable = args
    text = ".".join(token.text for token in [head, *path])
    if payable is not None and text == "address":
        return "address payable"
    return text


_type_word = some(
    lambda item: isinstance(item, SourceToken)
    and item.is_name
    and item.text not in _STATE_VAR_MODIFIERS
    and item.text not in ("mapping", "function")
).named("a type name")
_mapping_type = _kw("mapping") + -_grouped("(") >> (lambda _: "mapping")
_function_type = (
    _kw("function")
    + -maybe(_grouped("("))
    + -many(
        _keyword_in(("external", "internal", "view", "pure", "payable"), "function type attribute")
        | (_kw("returns") + maybe(_grouped("(")))
    )
    >> (lambda _: "function")
)
_named_type = (
    _type_word + many(-_punct(".") + _name("a type name")) + maybe(_kw("payable")) >> _value_type
)
_type = (_mapping_type | _function_type | _named_type).named("a type name") + many(
    _grouped("[")
) >> (lambda args: args[0] + "[]" * len(args[1]))

_param = _type + -maybe(_storage) + maybe(_identifier("parameter name"))

_STATEMENT = _name("a declaration") + _rest >> (lambda args: _Statement(args[1]))

_IMPORT = -_kw("import") + many(_nested | _not_semicolon) + _punct(";") >> (
    lambda args: _Import(
        [
            item.text[1:-1]
            for item in args[0]
            if isinstance(item, SourceToken)
            and item.kind == TokenKind.LITERAL
            and item.text[:1] in "\"'"
        ],
        args[1],
    )
)

_base = _dotted("base contract name") + -maybe(_grouped("("))
_CONTRACT_HEAD = (
    -maybe(_kw("abstract"))
    + _keyword_in(("contract", "interface", "library"), "contract, interface or library")
    + _name("contract name")
    + maybe(-_kw("is") + _base + many(-_punct(",") + _base))
    + _punct("{").named("'{' opening the contract body")
    >> (
        lambda args: _ContractHead(
            args[0].text,
            args[1].text,
            (args[2][0], *args[2][1]) if args[2] is not None else (),
            args[3],
        )
    )
)

_TYPE_DECLARATION = (
    _keyword_in(("event", "error"), "event or error") + _name("a name") + _rest
    >> (lambda args: _TypeDeclaration(args[1].text, args[2]))
) | (
    _keyword_in(("struct", "enum"), "struct or enum") + _name("a name") + _grouped("{")
    >> (lambda args: _TypeDeclaration(args[1].text, args[2].closer))
)

_state_modifier = (_kw("override") + -maybe(_grouped("("))) | _keyword_in(
    _STATE_VAR_MODIFIERS, "a state variable modifier"
)
_STATE_VARIABLE = (
    _type + -many(_state_modifier) + _identifier("state variable name") + _rest
    >> (lambda args: _StateVariable(args[0], args[1].text, args[2]))
)

# `using {f, g} for T` attaches free functions, not a library.
_USING = -_kw("using") + (
    (-_grouped("{") + _rest >> (lambda end: _Using(None, "", end)))
    | (
        _dotted("library name") + -_kw("for") + ((_punct("*") >> (lambda _: "*")) | _type) + _rest
        >> (lambda args: _Using(args[0], args[1], args[2]))
    )
)


def _named_function(args: Any) -> _FunctionStart:
    start, name = args
    if name is None:
        return _FunctionStart("fallback", "fallback", start.line)
    return _FunctionStart("function", name.text, start.line)


def _split_params(group: Group | None) -> list[tuple[str, str | None]]:
    if group is None:
        return []
    chunks: list[list[Item]] = [[]]
    for item in group.items:
        if _is_punct(item, ","):
            chunks.append([])
        else:
            chunks[-1].append(item)
    params: list[tuple[str, str | None]] = []
    for chunk in chunks:
        if not chunk:
            continue
        try:
            type_text, name = _param.parse(chunk)
        except NoParseError:
            params.append((chunk[0].text, None))
            continue
        params.append((type_text, name.text if name is not None else None))
    return params


def _function_header(args: Any) -> _FunctionHeader:
    start, params, header, end = args
    visibility = _DEFAULT_VISIBILITY[start.kind]
    calls: list[_HeaderCall] = []
    for item in header:
        if isinstance(item, Visibility):
            visibility = item
        elif isinstance(item, _HeaderCall):
            calls.append(item)
    body = end if isinstance(end, Group) else None
    return _FunctionHeader(
        name=start.name,
        kind=start.kind,
        visibility=visibility,
        params=_split_params(params),
        body=body,
        line=start.line,
        header_calls=calls,
        end=body.closer if body is not None else end,
    )


_header_keyword = some(
    lambda item: isinstance(item, SourceToken)
    and item.kind == TokenKind.KEYWORD
    and item.text not in ("returns", "override")
    and item.text not in _MEMBER_KEYWORDS
    and item.text not in _UNIT_KEYWORDS
).named("a function attribute")
_header_item = (
    (_keyword_in(_VISIBILITIES, "visibility") >> (lambda token: Visibility(token.text)))
    | (_kw("returns") + -_grouped("(") >> _nothing)
    | (_kw("override") + -maybe(_grouped("(")) >> _nothing)
    | (_header_keyword >> _nothing)
    | (
        _identifier("modifier invocation") + maybe(_grouped("("))
        >> (lambda args: _HeaderCall(args[0], args[1].arg_count if args[1] is not None else 0))
    )
)
_function_start = (
    (
        (_kw("function") + maybe(_name("function name")) >> _named_function)
        | (
            _keyword_in(("constructor", "fallback", "receive"), "function")
            >> (lambda token: _FunctionStart(token.text, token.text, token.line))
        )
    )
    + _grouped("(")
) | (
    _kw("modifier") + _name("modifier name")
    >> (lambda args: _FunctionStart("modifier", args[1].text, args[0].line))
) + maybe(_grouped("("))
_FUNCTION = (
    _function_start + many(_header_item) + (_grouped("{") | _punct(";")).named("function body")
    >> _function_header
)


def _is_local_type_head(item: object) -> bool:
    return isinstance(item, SourceToken) and (
        item.kind == TokenKind.IDENTIFIER
        or (item.kind == TokenKind.KEYWORD and is_elementary_type(item.text))
    )


_local_type_head = some(_is_local_type_head).named("a type name")


def _local_declaration(args: Any) -> tuple[str, SourceToken]:
    head, path, payable, dims, name = args
    type_text = ".".join(token.text for token in [head, *path])
    if payable is not None:
        type_text += " payable"
    return type_text + "[]" * len(dims), name


_LOCAL_DECLARATION = (
    _local_type_head
    + many(-_punct(".") + _identifier("a type name"))
    + maybe(_kw("payable"))
    + many(_grouped("["))
    + -maybe(_storage)
    + _identifier("variable name")
    >> _local_declaration
)


class _SourceParser:
    """Drives the declaration grammar over one file, one top-level item or member at a time."""

    def __init__(self, tokens: list[SourceToken], file: str | None) -> None:
        self.tokens: list[SourceToken] = [t for t in tokens if t.kind != TokenKind.COMMENT]
        self._positions: dict[int, int] = {t.offset: i for i, t in enumerate(self.tokens)}
        self._original: dict[int, int] = {t.offset: i for i, t in enumerate(tokens)}
        self.pos: int = 0
        self.file = file
        self.result = ParseResult(file=file)
        self._bodies: list[tuple[ContractInfo, FunctionDecl, _FunctionHeader]] = []

    def parse(self) -> ParseResult:
        while self.pos < len(self.tokens):
            start = self.pos
            try:
                self._parse_unit_member()
            except ParseError as e:
                self.result.errors.append(e)
                self._recover(_UNIT_KEYWORDS | {"pragma", "import"}, start + 1)
        self._scan_bodies()
        return self.result

    def _peek(self, k: int = 0) -> SourceToken | None:
        i = self.pos + k
        return self.tokens[i] if i < len(self.tokens) else None

    def _error_at(self, at: int, message: str, expected: str | None = None) -> ParseError:
        token = self.tokens[min(at, len(self.tokens) - 1)] if self.tokens else None
        line, column = (token.line, token.column) if token else (1, 1)
        return ParseError(message, line, column, self.file, expected)

    def _run(self, production: Any) -> Any:
        """Matches `production` at the current position and moves past it."""
        try:
            item = production.parse(self.tokens[self.pos :])
        except NoParseError as e:
            at = self.pos + e.state.max
            found = repr(self.tokens[at].text) if at < len(self.tokens) else "end of input"
            expected = e.state.parser.name if e.state.parser is not None else None
            raise self._error_at(at, f"unexpected {found}", expected or None) from None
        self.pos = self._positions[item.end.offset] + 1
        return item

    def _recover(self, stop_words: frozenset[str] | set[str], minimum: int) -> str | None:
        self.pos = max(self.pos, minimum)
        while (token := self._peek()) is not None:
            if token.kind == TokenKind.KEYWORD and token.text in stop_words:
                return token.text
            self.pos += 1
        return None

    def _parse_unit_member(self) -> None:
        token = self._peek()
        assert token is not None
        if token.is_("import"):
            self.result.imports.extend(self._run(_IMPORT).paths)
        elif token.text in _UNIT_KEYWORDS and token.kind == TokenKind.KEYWORD:
            self._parse_contract()
        elif token.is_("function"):
            # Free function: owned by no contract.
            free = ContractInfo("", "contract", file=self.file)
            self._finish_contract(free, [self._run(_FUNCTION)], register=False)
        elif token.text in ("struct", "enum"):
            self._run(_TYPE_DECLARATION)
        elif token.is_name:
            self._run(_STATEMENT)
        else:
            raise self._error_at(
                self.pos,
                f"unexpected {token.text!r}",
                "contract, interface, library, import or pragma",
            )

    def _parse_contract(self) -> None:
        head: _ContractHead = self._run(_CONTRACT_HEAD)
        info = ContractInfo(head.name, head.kind, head.bases, file=self.file)
        pending: list[_FunctionHeader] = []
        try:
            while True:
                token = self._peek()
                if token is None:
                    raise self._error_at(
                        self.pos, "unexpected end of input", f"'}}' closing {head.name}"
                    )
                if token.is_("}"):
                    self.pos += 1
                    break
                start = self.pos
                try:
                    self._parse_member(info, pending)
                except ParseError as e:
                    self.result.errors.append(e)
                    stop = self._recover(_MEMBER_KEYWORDS | _UNIT_KEYWORDS, start + 1)
                    if stop is None or stop in _UNIT_KEYWORDS:
                        break
        finally:
            self._finish_contract(info, pending)

    def _parse_member(self, info: ContractInfo, pending: list[_FunctionHeader]) -> None:
        token = self._peek()
        assert token is not None
        nxt = self._peek(1)
        if token.text in ("function", "constructor", "modifier") and token.kind == TokenKind.KEYWORD:
            pending.append(self._run(_FUNCTION))
        elif token.text in ("fallback", "receive") and nxt is not None and nxt.is_("("):
            pending.append(self._run(_FUNCTION))
        elif token.is_("using"):
            using: _Using = self._run(_USING)
            if using.library is not None:
                info.usings.append((using.library, using.target))
        elif token.text in ("event", "error", "struct", "enum") and nxt is not None and nxt.is_name:
            info.type_names.add(self._run(_TYPE_DECLARATION).name)
        elif token.is_("type"):
            self._run(_STATEMENT)
        else:
            variable: _StateVariable = self._run(_STATE_VARIABLE)
            info.state_vars[variable.name] = variable.type_text

    def _finish_contract(
        self, info: ContractInfo, pending: list[_FunctionHeader], register: bool = True
    ) -> None:
        arities: dict[str, int] = {}
        for item in pending:
            arities[item.name] = arities.get(item.name, 0) + 1
        seen: dict[tuple[str, int], int] = {}
        for item in pending:
            function_name = item.name
            if arities[item.name] > 1:
                function_name = f"{item.name}/{len(item.params)}"
                key = (item.name, len(item.params))
                seen[key] = seen.get(key, 0) + 1
                if seen[key] > 1:
                    function_name = f"{function_name}#{seen[key]}"
            body_span = None
            if item.body is not None:
                body_span = (
                    self._original[item.body.opener.offset],
                    self._original[item.body.closer.offset],
                )
            decl = FunctionDecl(
                contract_name=info.name,
                function_name=function_name,
                base_name=item.name,
                kind=item.kind,
                visibility=item.visibility,
                param_count=len(item.params),
                body_span=body_span,
                line=item.line,
                file=self.file,
            )
            info.functions.setdefault(item.name, []).append(decl)
            self.result.decls.append(decl)
            self._bodies.append((info, decl, item))
        if register:
            self.result.contracts.append(info)

    def _scan_bodies(self) -> None:
        index = ProjectIndex(self.result.contracts)
        for info, decl, item in self._bodies:
            for call in item.header_calls:
                self.result.callsites.append(
                    CallSite(
                        caller=decl,
                        callee_expr=call.token.text,
                        kind=CallKind.INTERNAL,
                        line=call.token.line,
                        column=call.token.column,
                        member=call.token.text,
                        arg_count=call.arg_count,
                        target=call.token.text,
                        from_header=True,
                    )
                )
            if item.body is None:
                continue
            scanner = _BodyScanner(decl, info, index, item.params)
            scanner.scan(item.body.items)
            self.result.callsites.extend(scanner.sites)


class _BodyScanner:
    """Finds call expressions in a function body and classifies them."""

    def __init__(
        self,
        decl: FunctionDecl,
        contract: ContractInfo,
        index: ProjectIndex,
        params: list[tuple[str, str | None]],
    ) -> None:
        self.decl = decl
        self.contract = contract
        self.index = index
        self.locals: dict[str, str] = {name: type_text for type_text, name in params if name}
        self.sites: list[CallSite] = []

    def scan(self, items: Sequence[Item]) -> None:
        i = 0
        while i < len(items):
            item = items[i]
            if isinstance(item, Group):
                self.scan(item.items)
                i += 1
                continue
            if item.is_("assembly"):
                i += 1
                while i < len(items) and _group_of(items[i], "{") is None:
                    i += 1
                i += 1
                continue
            if item.kind == TokenKind.KEYWORD and item.text in ("emit", "new"):
                nxt = items[i + 1] if i + 1 < len(items) else None
                if isinstance(nxt, SourceToken) and nxt.is_name:
                    i = self._chain(items, i + 1, suppress_first=True)
                else:
                    i += 1
                continue
            self._note_local(items, i)
            if self._starts_chain(items, i):
                prefix = "(...)" if i > 0 and _is_punct(items[i - 1], ".") else None
                i = self._chain(items, i, prefix=prefix)
                continue
            i += 1

    @staticmethod
    def _starts_chain(items: Sequence[Item], i: int) -> bool:
        token = items[i]
        assert isinstance(token, SourceToken)
        if token.kind == TokenKind.IDENTIFIER:
            return True
        if token.kind != TokenKind.KEYWORD:
            return False
        if token.text in ("this", "super"):
            return True
        followed_by_call = i + 1 < len(items) and _group_of(items[i + 1], "(") is not None
        return followed_by_call and (
            token.text in ("payable", "type") or is_elementary_type(token.text)
        )

    def _note_local(self, items: Sequence[Item], i: int) -> None:
        if not _is_local_type_head(items[i]) or (i > 0 and _is_punct(items[i - 1], ".")):
            return
        window = items[i : i + _LOCAL_WINDOW]
        try:
            type_text, name = _LOCAL_DECLARATION.parse(window)
        except NoParseError:
            return
        after = i + next(k for k, item in enumerate(window) if item is name) + 1
        follower = items[after] if after < len(items) else None
        if follower is None or any(_is_punct(follower, text) for text in ("=", ";", ",")):
            self.locals[name.text] = type_text

    def _type_of(self, name: str) -> str | None:
        if name in self.locals:
            return self.locals[name]
        if name == "this":
            return self.contract.name
        return self.index.state_var_type(self.contract.name, name) or self.contract.state_vars.get(
            name
        )

    def _conversion_type(self, name: str) -> str | None:
        if name == "payable":
            return "address payable"
        if is_elementary_type(name):
            return name
        if self.index.is_type_name(name):
            return name
        if name[:1].isupper() and not self.index.declares_function(name):
            return name
        return None

    def _chain(
        self,
        items: Sequence[Item],
        i: int,
        suppress_first: bool = False,
        prefix: str | None = None,
    ) -> int:
        token = items[i]
        assert isinstance(token, SourceToken)
        if prefix is not None:
            parts = [prefix, "." + token.text]
            current_type: str | None = None
        else:
            parts = [token.text]
            current_type = self._type_of(token.text)
        receiver_type: str | None = None
        name_token = token
        after_name = True
        first_call = True
        j = i + 1
        while j < len(items):
            item = items[j]
            nxt = items[j + 1] if j + 1 < len(items) else None
            if _is_punct(item, ".") and isinstance(nxt, SourceToken) and nxt.is_name:
                receiver_type = current_type
                name_token = nxt
                parts.append("." + nxt.text)
                joined = "".join(parts)
                current_type = "address" if joined in ("msg.sender", "tx.origin") else None
                after_name = True
                j += 2
                continue
            if (options := _group_of(item, "{")) is not None and after_name:
                # Call options `{value: v}` only count when a call follows.
                if _group_of(nxt, "(") is None:
                    break
                self.scan(options.items)
                j += 1
                continue
            if (call := _group_of(item, "(")) is not None:
                result_type: str | None = None
                if after_name:
                    if suppress_first and first_call:
                        result_type = self._conversion_type(parts[-1].lstrip("."))
                    else:
                        result_type = self._record(parts, receiver_type, name_token, call.arg_count)
                self.scan(call.items)
                parts.append(call.text)
                current_type = result_type
                first_call = False
                after_name = False
                j += 1
                continue
            if (subscript := _group_of(item, "[")) is not None:
                self.scan(subscript.items)
                parts.append(subscript.text)
                current_type = None
                after_name = False
                j += 1
                continue
            break
        return j

    def _record(
        self, parts: list[str], receiver_type: str | None, name_token: SourceToken, arg_count: int
    ) -> str | None:
        """Records a call site; returns the resulting type for conversions."""
        if len(parts) == 1:
            name = parts[0]
            if name in BUILTIN_FUNCTIONS and name != "payable" and name != "address":
                return None
            if not self.index.declares_function(name):
                conversion = self._conversion_type(name)
                if conversion is not None:
                    return conversion
            self.sites.append(
                CallSite(
                    caller=self.decl,
                    callee_expr=name,
                    kind=CallKind.INTERNAL,
                    line=name_token.line,
                    column=name_token.column,
                    member=name,
                    arg_count=arg_count,
                    target=name,
                )
            )
            return None

        receiver = "".join(parts[:-1])
        member = parts[-1][1:]
        classified = classify_member_call(
            receiver, receiver_type, member, self.contract, self.index
        )
        if classified is None:
            return None
        kind, target = classified
        self.sites.append(
            CallSite(
                caller=self.decl,
                callee_expr=f"{receiver}.{member}",
                kind=kind,
                line=name_token.line,
                column=name_token.column,
                member=member,
                arg_count=arg_count,
                target=target,
                receiver=receiver,
                receiver_type=receiver_type,
            )
        )
        return None


def parse_contracts(
    tokens: list[SourceToken], *, file: str | None = None, strict: bool = False
) -> ParseResult:
    """
    Parses contract-level declarations and the call sites in their bodies.

    :param tokens: output of `tokenize`
    :param file: file name recorded on declarations and errors
    :param strict: raise the first `ParseError` instead of recovering
    :returns: declarations, call sites, contract summaries, imports and recovered errors
    :raises ParseError: in strict mode, on the first malformed construct
    """
    result = _SourceParser(tokens, file).parse()
    if strict and result.errors:
        raise result.errors[0]
    return result


def parse_source(source: str, *, file: str | None = None, strict: bool = False) -> ParseResult:
    """Tokenizes and parses one source unit."""
    return parse_contracts(tokenize(source, file=file), file=file, strict=strict)
