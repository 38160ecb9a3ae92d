"""Lightweight SQL tokenizer for the SELECT-statement subset we analyze.

Tokens are classified as keyword, identifier, string, number, operator,
punctuation or comment. Keywords are recognized case-insensitively; text
inside string literals and comments never produces keyword tokens, which is
what keeps literal 'JOIN'/'WHERE' strings out of the feature counts.
"""

from __future__ import annotations

from dataclasses import dataclass

KEYWORDS = frozenset("""
    ALL ALTER AND ANY AS ASC BETWEEN BY CASE CONNECT CREATE CROSS DELETE DESC
    DISTINCT DROP ELSE END ESCAPE EXCEPT EXISTS FETCH FIRST FOR FROM FULL
    GROUP HAVING IN INNER INSERT INTERSECT INTO IS JOIN LEFT LIKE LIMIT MINUS
    NATURAL NEXT NOCYCLE NOT NULL OFFSET ON ONLY OR ORDER OUTER OVER PARTITION
    PRIOR RIGHT ROWS SELECT SET SIBLINGS SOME START TABLE THEN UNION UNIQUE
    UPDATE USING VALUES WHEN WHERE WITH
""".split())

KEYWORD = "keyword"
IDENTIFIER = "identifier"
STRING = "string"
NUMBER = "number"
OPERATOR = "operator"
PUNCT = "punct"
COMMENT = "comment"

_PUNCT_CHARS = "(),;."
_MULTI_OPS = ("<=", ">=", "<>", "!=", "^=", "||", "**", ":=", "=>")
_SINGLE_OPS = "=<>+-*/%^!&|:?@"
_IDENT_START = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CONT = _IDENT_START | frozenset("0123456789$#")


class SqlTokenizeError(Exception):
    """Raised on malformed lexical input; carries the offending position."""

    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} at position {position}")


@dataclass(frozen=True)
class SqlToken:
    kind: str
    text: str
    pos: int

    @property
    def upper(self) -> str:
        return self.text.upper()

    def is_keyword(self, *names: str) -> bool:
        return self.kind == KEYWORD and self.text.upper() in names


def tokenize_sql(sql: str) -> list[SqlToken]:
    """Tokenize a SQL statement; raises SqlTokenizeError with a position
    for unterminated strings, quoted identifiers and block comments."""
    if not sql or not sql.strip():
        raise SqlTokenizeError("empty SQL text", 0)

    tokens: list[SqlToken] = []
    i = 0
    n = len(sql)
    while i < n:
        ch = sql[i]
        if ch.isspace():
            i += 1
            continue
        # line comment
        if ch == "-" and sql.startswith("--", i):
            end = sql.find("\n", i)
            end = n if end == -1 else end
            tokens.append(SqlToken(COMMENT, sql[i:end], i))
            i = end
            continue
        # block comment
        if ch == "/" and sql.startswith("/*", i):
            end = sql.find("*/", i + 2)
            if end == -1:
                raise SqlTokenizeError("unterminated block comment", i)
            tokens.append(SqlToken(COMMENT, sql[i:end + 2], i))
            i = end + 2
            continue
        # string literal with '' escaping
        if ch == "'":
            j = i + 1
            while True:
                j = sql.find("'", j)
                if j == -1:
                    raise SqlTokenizeError("unterminated string literal", i)
                if j + 1 < n and sql[j + 1] == "'":
                    j += 2
                    continue
                break
            tokens.append(SqlToken(STRING, sql[i:j + 1], i))
            i = j + 1
            continue
        # quoted identifier
        if ch == '"':
            j = sql.find('"', i + 1)
            if j == -1:
                raise SqlTokenizeError("unterminated quoted identifier", i)
            tokens.append(SqlToken(IDENTIFIER, sql[i + 1:j], i))
            i = j + 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and sql[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (sql[j].isdigit() or (sql[j] == "." and not seen_dot)):
                if sql[j] == ".":
                    # two dots is the range operator, not a decimal point
                    if j + 1 < n and sql[j + 1] == ".":
                        break
                    seen_dot = True
                j += 1
            if j < n and sql[j] in "eE":
                k = j + 1
                if k < n and sql[k] in "+-":
                    k += 1
                if k < n and sql[k].isdigit():
                    j = k
                    while j < n and sql[j].isdigit():
                        j += 1
            tokens.append(SqlToken(NUMBER, sql[i:j], i))
            i = j
            continue
        if ch in _IDENT_START:
            j = i + 1
            while j < n and sql[j] in _IDENT_CONT:
                j += 1
            text = sql[i:j]
            kind = KEYWORD if text.upper() in KEYWORDS else IDENTIFIER
            tokens.append(SqlToken(kind, text, i))
            i = j
            continue
        if ch in _PUNCT_CHARS:
            tokens.append(SqlToken(PUNCT, ch, i))
            i += 1
            continue
        two = sql[i:i + 2]
        if two in _MULTI_OPS:
            tokens.append(SqlToken(OPERATOR, two, i))
            i += 2
            continue
        if ch in _SINGLE_OPS:
            tokens.append(SqlToken(OPERATOR, ch, i))
            i += 1
            continue
        raise SqlTokenizeError(f"unexpected character {ch!r}", i)
    return tokens


def strip_comments(tokens: list[SqlToken]) -> list[SqlToken]:
    return [t for t in tokens if t.kind != COMMENT]
