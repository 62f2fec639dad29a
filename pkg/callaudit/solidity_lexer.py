"""
Lexical analysis of Solidity source.

The lexer is a funcparserlib regex tokenizer. Whitespace is matched but not
emitted; every emitted token keeps its 1-based line/column and its character
offset, so the original text (whitespace included) can be rebuilt from the
token stream and the source.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import StrEnum

from funcparserlib.lexer import LexerError, make_tokenizer

from .exceptions import SourceSyntaxError, UnterminatedComment, UnterminatedString


class TokenKind(StrEnum):
    KEYWORD = "keyword"
    IDENTIFIER = "identifier"
    PUNCTUATION = "punctuation"
    LITERAL = "literal"
    COMMENT = "comment"


@dataclass(frozen=True, slots=True)
class SourceToken:
    """One lexical unit of a Solidity source file."""

    kind: TokenKind
    text: str
    line: int
    column: int
    offset: int

    def is_(self, text: str) -> bool:
        """True for a keyword or punctuation token spelled `text`."""
        return self.text == text and self.kind in (TokenKind.KEYWORD, TokenKind.PUNCTUATION)

    @property
    def is_name(self) -> bool:
        return self.kind in (TokenKind.IDENTIFIER, TokenKind.KEYWORD)


KEYWORDS: frozenset[str] = frozenset(
    {
        "abstract", "anonymous", "as", "assembly", "break", "calldata", "catch", "constant",
        "constructor", "continue", "contract", "delete", "do", "else", "emit", "enum", "error",
        "event", "external", "fallback", "false", "for", "function", "global", "if",
        "immutable", "import", "indexed", "interface", "internal", "is", "let", "library",
        "mapping", "memory", "modifier", "new", "override", "payable", "pragma", "private",
        "public", "pure", "receive", "return", "returns", "storage", "struct", "super", "this",
        "throw", "true", "try", "type", "unchecked", "using", "var", "view", "virtual", "while",
    }
)  # fmt: skip

_ELEMENTARY_TYPE = re.compile(
    r"address|bool|string|byte|bytes(?:[1-9]|[12][0-9]|3[0-2])?|u?int(?:8|16|24|32|40|48|56|64|72|80|88|96|104|112|120|128|136|144|152|160|168|176|184|192|200|208|216|224|232|240|248|256)?|u?fixed(?:\d+x\d+)?"
)

_LITERAL_WORDS: frozenset[str] = frozenset({"true", "false"})

_SPECS = [
    ("comment", (r"//[^\r\n]*",)),
    ("comment", (r"/\*[\s\S]*?\*/",)),
    ("open_comment", (r"/\*[\s\S]*",)),
    ("space", (r"[ \t\r\n\f\v]+",)),
    ("string", (r'(?:hex|unicode)?"(?:\\.|[^"\\\r\n])*"',)),
    ("string", (r"(?:hex|unicode)?'(?:\\.|[^'\\\r\n])*'",)),
    ("open_string", (r"""(?:hex|unicode)?(?:"(?:\\.|[^"\\\r\n])*|'(?:\\.|[^'\\\r\n])*)""",)),
    (
        "number",
        (r"0[xX][0-9a-fA-F_]+|(?:\d[\d_]*(?:\.\d[\d_]*)?|\.\d[\d_]*)(?:[eE][-+]?\d+)?",),
    ),
    ("name", (r"[A-Za-z_$][A-Za-z0-9_$]*",)),
    (
        "op",
        (
            r">>>=|>>=|<<=|>>>|\*\*|&&|\|\||\+\+|--|->|=>|==|!=|<=|>=|<<|>>|\+=|-=|\*=|/=|%=|&=|\|=|\^=|:="
            r"|[-+*/%&|^~!<>=?:;,.(){}\[\]@]",
        ),
    ),
]

_tokenizer = make_tokenizer(_SPECS)


def is_elementary_type(name: str) -> bool:
    """True for Solidity's built-in value type names (`uint256`, `address`, `bytes32`, ...)."""
    return _ELEMENTARY_TYPE.fullmatch(name) is not None


def _classify(token_type: str, value: str) -> TokenKind:
    if token_type == "comment":
        return TokenKind.COMMENT
    if token_type in ("string", "number"):
        return TokenKind.LITERAL
    if token_type == "op":
        return TokenKind.PUNCTUATION
    if value in _LITERAL_WORDS:
        return TokenKind.LITERAL
    if value in KEYWORDS or is_elementary_type(value):
        return TokenKind.KEYWORD
    return TokenKind.IDENTIFIER


def tokenize(source: str, file: str | None = None) -> list[SourceToken]:
    """
    Breaks Solidity source into tokens.

    :param source: source text
    :param file: optional file name used in error messages
    :returns: keyword, identifier, punctuation, literal and comment tokens in order
    :raises UnterminatedString: when a string literal is not closed on its line
    :raises UnterminatedComment: when a block comment is never closed
    :raises SourceSyntaxError: on a character that starts no token
    """
    tokens: list[SourceToken] = []
    offset = 0
    try:
        for raw in _tokenizer(source):
            line, column = raw.start
            if raw.type == "open_string":
                raise UnterminatedString("unterminated string literal", line, column, file)
            if raw.type == "open_comment":
                raise UnterminatedComment("unterminated block comment", line, column, file)
            if raw.type != "space":
                tokens.append(
                    SourceToken(_classify(raw.type, raw.value), raw.value, line, column, offset)
                )
            offset += len(raw.value)
    except LexerError as e:
        line, column = e.place
        raise SourceSyntaxError(f"unexpected character in line {e.msg!r}", line, column, file) from e
    return tokens


def reconstruct(tokens: list[SourceToken], source: str) -> str:
    """
    Rebuilds the source from its tokens and the whitespace between them.

    :param tokens: output of `tokenize(source)`
    :param source: the text that was tokenized
    :returns: a string equal to `source`
    """
    parts: list[str] = []
    cursor = 0
    for token in tokens:
        gap = source[cursor : token.offset]
        if gap.strip():
            raise ValueError(f"token stream skips non-whitespace text at offset {cursor}")
        parts.append(gap)
        parts.append(token.text)
        cursor = token.offset + len(token.text)
    trailing = source[cursor:]
    if trailing.strip():
        raise ValueError(f"token stream skips non-whitespace text at offset {cursor}")
    parts.append(trailing)
    return "".join(parts)
