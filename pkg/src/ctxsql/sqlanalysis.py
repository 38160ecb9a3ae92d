"""SQL feature extraction, complexity scoring, percentile banding and
schema validation.

The parser here is a pragmatic SELECT-subset walker, not a full grammar:
it understands joins, comma FROM lists, subqueries in FROM/WHERE/select
list, CTEs, GROUP BY/HAVING/ORDER BY and set operators, which is enough to
count the features the complexity score consumes and to resolve identifier
references against a schema catalog. DDL/DML statements are rejected.

Counting rules:
  * number_of_tables: distinct (name, alias) table references over all
    FROM/JOIN clauses at every nesting depth; each FROM-subquery counts as
    one reference.
  * number_of_joins: explicit JOIN keywords plus (n - 1) implicit joins per
    comma-separated FROM list of n sources.
  * number_of_where_clauses: atomic predicates across all WHERE clauses at
    any depth, split on top-level AND/OR with parenthesized groups recursed;
    ON-clause predicates are join plumbing and are not counted.
  * has_aggregation: COUNT/SUM/AVG/MIN/MAX used as a function call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .catalog import SchemaCatalog
from .sqltokens import (
    IDENTIFIER, KEYWORD, NUMBER, OPERATOR, PUNCT, STRING,
    SqlToken, strip_comments, tokenize_sql,
)

LOW = "low"
MEDIUM = "medium"
HIGH = "high"

AGGREGATE_FUNCTIONS = frozenset({"COUNT", "SUM", "AVG", "MIN", "MAX"})

_SET_OPS = frozenset({"UNION", "INTERSECT", "MINUS", "EXCEPT"})
_CLAUSE_KWS = frozenset({
    "WHERE", "GROUP", "HAVING", "ORDER", "CONNECT", "START",
    "FETCH", "OFFSET", "LIMIT", "FOR",
})
_JOIN_STARTERS = frozenset({"JOIN", "INNER", "LEFT", "RIGHT", "FULL", "CROSS", "NATURAL"})
_ALIAS_TERMINALS = frozenset({IDENTIFIER, NUMBER, STRING})


class SqlAnalysisError(Exception):
    """Base class for SQL analysis failures."""


class NonSelectError(SqlAnalysisError):
    """The statement is not a SELECT/WITH query (DDL/DML are out of scope)."""


class SqlParseError(SqlAnalysisError):
    """The statement could not be walked by the SELECT-subset parser."""


@dataclass(frozen=True)
class SqlFeatures:
    number_of_tables: int
    number_of_joins: int
    number_of_where_clauses: int
    has_group_by: bool
    has_order: bool
    has_aggregation: bool

    def __post_init__(self):
        if min(self.number_of_tables, self.number_of_joins,
               self.number_of_where_clauses) < 0:
            raise ValueError("feature counts must be nonnegative")

    def as_dict(self) -> dict:
        return {
            "number_of_tables": self.number_of_tables,
            "number_of_joins": self.number_of_joins,
            "number_of_where_clauses": self.number_of_where_clauses,
            "has_group_by": self.has_group_by,
            "has_order": self.has_order,
            "has_aggregation": self.has_aggregation,
        }


def complexity_score(features: SqlFeatures, time_to_create: int = 0) -> int:
    """Additive complexity score: creation time plus table, join and
    predicate counts, plus one point per set flag."""
    if time_to_create < 0:
        raise ValueError("time_to_create must be >= 0")
    score = time_to_create
    score += features.number_of_tables
    score += features.number_of_joins
    score += features.number_of_where_clauses
    if features.has_group_by:
        score += 1
    if features.has_order:
        score += 1
    if features.has_aggregation:
        score += 1
    return score


# ---------------------------------------------------------------------------
# parsing

@dataclass
class SourceRef:
    """One entry of a FROM list: a named table/CTE or an inline subquery."""
    name: Optional[str]          # uppercase; None for subqueries
    alias: Optional[str]
    pos: int
    is_cte: bool = False


@dataclass
class Scope:
    """One SELECT scope; parent links give correlated subqueries visibility."""
    parent: Optional["Scope"]
    sources: list[SourceRef] = field(default_factory=list)
    column_refs: list[tuple[Optional[str], str, int]] = field(default_factory=list)


@dataclass
class ParsedQuery:
    scopes: list[Scope]
    cte_names: set[str]
    table_keys: list[tuple]
    explicit_joins: int
    implicit_joins: int
    where_atoms: int
    has_group_by: bool
    has_order: bool
    has_aggregation: bool

    def features(self) -> SqlFeatures:
        return SqlFeatures(
            number_of_tables=len(set(self.table_keys)),
            number_of_joins=self.explicit_joins + self.implicit_joins,
            number_of_where_clauses=self.where_atoms,
            has_group_by=self.has_group_by,
            has_order=self.has_order,
            has_aggregation=self.has_aggregation,
        )


class _Parser:
    def __init__(self, tokens: list[SqlToken]):
        self.toks = tokens
        self.i = 0
        self.scopes: list[Scope] = []
        self.cte_names: set[str] = set()
        self.table_keys: list[tuple] = []
        self.explicit_joins = 0
        self.implicit_joins = 0
        self.where_atoms = 0
        self.has_group_by = False
        self.has_order = False
        self.has_aggregation = False
        self._subquery_serial = 0

    # -- cursor helpers

    def peek(self, off: int = 0) -> Optional[SqlToken]:
        j = self.i + off
        return self.toks[j] if j < len(self.toks) else None

    def take(self) -> SqlToken:
        t = self.peek()
        if t is None:
            raise SqlParseError("unexpected end of statement")
        self.i += 1
        return t

    def expect_punct(self, text: str) -> SqlToken:
        t = self.peek()
        if t is None or t.kind != PUNCT or t.text != text:
            found = t.text if t else "end of statement"
            raise SqlParseError(f"expected {text!r}, found {found!r}")
        return self.take()

    def expect_keyword(self, name: str) -> SqlToken:
        t = self.peek()
        if t is None or not t.is_keyword(name):
            found = t.text if t else "end of statement"
            raise SqlParseError(f"expected {name}, found {found!r}")
        return self.take()

    def _at_punct(self, text: str) -> bool:
        t = self.peek()
        return t is not None and t.kind == PUNCT and t.text == text

    # -- grammar walk

    def parse_statement(self) -> ParsedQuery:
        first = self.peek()
        if first is None:
            raise NonSelectError("empty statement")
        if not (first.is_keyword("SELECT", "WITH") or
                (first.kind == PUNCT and first.text == "(")):
            raise NonSelectError(
                f"not a SELECT statement (starts with {first.text!r})")
        self.parse_query(None)
        while self._at_punct(";"):
            self.take()
        if self.peek() is not None:
            raise SqlParseError(
                f"unexpected trailing token {self.peek().text!r}")
        return ParsedQuery(
            scopes=self.scopes,
            cte_names=self.cte_names,
            table_keys=self.table_keys,
            explicit_joins=self.explicit_joins,
            implicit_joins=self.implicit_joins,
            where_atoms=self.where_atoms,
            has_group_by=self.has_group_by,
            has_order=self.has_order,
            has_aggregation=self.has_aggregation,
        )

    def parse_query(self, parent: Optional[Scope]) -> None:
        t = self.peek()
        if t is not None and t.is_keyword("WITH"):
            self._parse_ctes(parent)
        while True:
            t = self.peek()
            if t is not None and t.kind == PUNCT and t.text == "(":
                self.take()
                self.parse_query(parent)
                self.expect_punct(")")
                # a parenthesized branch may carry trailing ORDER BY etc.
                self._parse_trailing_clauses(None)
            else:
                self.expect_keyword("SELECT")
                self._parse_select_body(parent)
            t = self.peek()
            if t is not None and t.kind == KEYWORD and t.upper in _SET_OPS:
                self.take()
                nxt = self.peek()
                if nxt is not None and nxt.is_keyword("ALL", "DISTINCT"):
                    self.take()
                continue
            return

    def _parse_ctes(self, parent: Optional[Scope]) -> None:
        self.expect_keyword("WITH")
        while True:
            name = self.take()
            if name.kind != IDENTIFIER:
                raise SqlParseError(f"expected CTE name, found {name.text!r}")
            self.cte_names.add(name.upper)
            if self._at_punct("("):
                self._skip_balanced_parens()
            self.expect_keyword("AS")
            self.expect_punct("(")
            self.parse_query(parent)
            self.expect_punct(")")
            if self._at_punct(","):
                self.take()
                continue
            return

    def _skip_balanced_parens(self) -> None:
        self.expect_punct("(")
        depth = 1
        while depth:
            t = self.take()
            if t.kind == PUNCT and t.text == "(":
                depth += 1
            elif t.kind == PUNCT and t.text == ")":
                depth -= 1

    def _parse_select_body(self, parent: Optional[Scope]) -> None:
        scope = Scope(parent=parent)
        self.scopes.append(scope)
        t = self.peek()
        if t is not None and t.is_keyword("DISTINCT", "UNIQUE", "ALL"):
            self.take()
        self._scan_expr(scope, stops=_CLAUSE_KWS | {"FROM"})
        t = self.peek()
        if t is not None and t.is_keyword("FROM"):
            self.take()
            self._parse_from(scope)
        self._parse_trailing_clauses(scope)

    def _parse_trailing_clauses(self, scope: Optional[Scope]) -> None:
        if scope is None:
            scope = self.scopes[-1] if self.scopes else Scope(parent=None)
        while True:
            t = self.peek()
            if t is None or t.kind != KEYWORD:
                return
            u = t.upper
            if u == "WHERE":
                self.take()
                start = self.i
                self._scan_expr(scope, stops=_CLAUSE_KWS)
                self.where_atoms += _count_atoms(self.toks[start:self.i])
            elif u == "GROUP":
                self.take()
                self.expect_keyword("BY")
                self.has_group_by = True
                self._scan_expr(scope, stops=_CLAUSE_KWS)
            elif u == "HAVING":
                self.take()
                self._scan_expr(scope, stops=_CLAUSE_KWS)
            elif u == "ORDER":
                self.take()
                nxt = self.peek()
                if nxt is not None and nxt.is_keyword("SIBLINGS"):
                    self.take()
                self.expect_keyword("BY")
                self.has_order = True
                self._scan_expr(scope, stops=_CLAUSE_KWS)
            elif u in ("CONNECT", "START"):
                self.take()
                nxt = self.peek()
                if nxt is not None and nxt.is_keyword("BY", "WITH"):
                    self.take()
                self._scan_expr(scope, stops=_CLAUSE_KWS)
            elif u in ("FETCH", "OFFSET", "LIMIT", "FOR"):
                self.take()
                self._scan_expr(scope, stops=_CLAUSE_KWS)
            else:
                return

    def _parse_from(self, scope: Scope) -> None:
        self._parse_source(scope)
        while True:
            t = self.peek()
            if t is None:
                return
            if t.kind == PUNCT and t.text == ",":
                self.take()
                self.implicit_joins += 1
                self._parse_source(scope)
                continue
            if t.kind == KEYWORD and t.upper in _JOIN_STARTERS:
                while True:
                    t = self.peek()
                    if t is not None and t.is_keyword(
                            "INNER", "LEFT", "RIGHT", "FULL", "OUTER", "CROSS", "NATURAL"):
                        self.take()
                        continue
                    break
                self.expect_keyword("JOIN")
                self.explicit_joins += 1
                self._parse_source(scope)
                t = self.peek()
                if t is not None and t.is_keyword("ON"):
                    self.take()
                    # ON predicates are join plumbing: scanned for column
                    # references but never counted as WHERE atoms
                    self._scan_expr(scope, stops=_CLAUSE_KWS | _JOIN_STARTERS,
                                    stop_comma=True)
                elif t is not None and t.is_keyword("USING"):
                    self.take()
                    self._skip_balanced_parens()
                continue
            return

    def _parse_source(self, scope: Scope) -> None:
        t = self.peek()
        if t is None:
            raise SqlParseError("expected table source, found end of statement")
        if t.kind == PUNCT and t.text == "(":
            nxt = self.peek(1)
            if nxt is not None and nxt.is_keyword("SELECT", "WITH"):
                self.take()
                self.parse_query(scope)
                self.expect_punct(")")
                self._subquery_serial += 1
                alias = self._try_alias()
                scope.sources.append(SourceRef(None, alias, t.pos))
                self.table_keys.append(("\x00subquery", self._subquery_serial))
                return
            # parenthesized join tree: sources land in the same scope
            self.take()
            self._parse_from(scope)
            self.expect_punct(")")
            self._try_alias()
            return
        if t.kind != IDENTIFIER:
            raise SqlParseError(f"expected table name, found {t.text!r}")
        parts = [self.take()]
        while self._at_punct("."):
            self.take()
            nxt = self.take()
            if nxt.kind != IDENTIFIER:
                raise SqlParseError(f"expected name after '.', found {nxt.text!r}")
            parts.append(nxt)
        name = parts[-1].upper
        alias = self._try_alias()
        scope.sources.append(SourceRef(name, alias, t.pos,
                                       is_cte=name in self.cte_names))
        self.table_keys.append((name, alias))

    def _try_alias(self) -> Optional[str]:
        t = self.peek()
        if t is not None and t.is_keyword("AS"):
            self.take()
            t = self.take()
            if t.kind != IDENTIFIER:
                raise SqlParseError(f"expected alias after AS, found {t.text!r}")
            return t.upper
        if t is not None and t.kind == IDENTIFIER:
            self.take()
            return t.upper
        return None

    def _scan_expr(self, scope: Scope, stops: frozenset[str] | set[str],
                   stop_comma: bool = False) -> None:
        """Walk expression tokens until a depth-0 boundary, collecting column
        references and aggregation calls; subqueries recurse into new scopes."""
        depth = 0
        prev: Optional[SqlToken] = None
        while True:
            t = self.peek()
            if t is None:
                return
            if t.kind == PUNCT:
                if t.text == "(":
                    nxt = self.peek(1)
                    if nxt is not None and nxt.is_keyword("SELECT", "WITH"):
                        self.take()
                        self.parse_query(scope)
                        self.expect_punct(")")
                        prev = SqlToken(PUNCT, ")", t.pos)
                        continue
                    depth += 1
                elif t.text == ")":
                    if depth == 0:
                        return
                    depth -= 1
                elif t.text in (",", ";") and depth == 0 and stop_comma:
                    return
                prev = self.take()
                continue
            if t.kind == KEYWORD and depth == 0 and (
                    t.upper in stops or t.upper in _SET_OPS):
                return
            if t.kind == IDENTIFIER:
                self._scan_identifier(scope, prev)
                prev = SqlToken(IDENTIFIER, t.text, t.pos)
                continue
            prev = self.take()

    def _scan_identifier(self, scope: Scope, prev: Optional[SqlToken]) -> None:
        t = self.take()
        # DATE '2024-01-01' style literals: prefix word, not a column
        nxt = self.peek()
        if t.upper in ("DATE", "TIMESTAMP", "INTERVAL") and \
                nxt is not None and nxt.kind == STRING:
            return
        parts = [t]
        star = False
        while self._at_punct("."):
            nxt = self.peek(1)
            if nxt is not None and nxt.kind == IDENTIFIER:
                self.take()
                parts.append(self.take())
                continue
            if nxt is not None and nxt.kind == OPERATOR and nxt.text == "*":
                self.take()
                self.take()
                star = True
            break
        after = self.peek()
        if after is not None and after.kind == PUNCT and after.text == "(":
            # function call; record aggregation, arguments scan in main loop
            if parts[-1].upper in AGGREGATE_FUNCTIONS:
                self.has_aggregation = True
            return
        if star:
            # qualified star: validate the qualifier only
            scope.column_refs.append((parts[-1].upper, "*", parts[0].pos))
            return
        if len(parts) >= 2:
            scope.column_refs.append((parts[-2].upper, parts[-1].upper, parts[0].pos))
            return
        # bare identifier directly after an expression terminal or AS is an alias
        if prev is not None and (prev.kind in _ALIAS_TERMINALS or
                                 (prev.kind == PUNCT and prev.text == ")") or
                                 prev.is_keyword("END", "AS")):
            return
        scope.column_refs.append((None, t.upper, t.pos))


def _count_atoms(tokens: list[SqlToken]) -> int:
    """Count atomic predicates: split on depth-0 AND/OR (BETWEEN's AND and
    CASE bodies excluded), recursing into fully parenthesized groups."""
    segments: list[list[SqlToken]] = []
    cur: list[SqlToken] = []
    depth = 0
    pending_between = 0
    case_depth = 0
    for t in tokens:
        if t.kind == PUNCT and t.text == "(":
            depth += 1
        elif t.kind == PUNCT and t.text == ")":
            depth -= 1
        elif depth == 0 and t.kind == KEYWORD:
            u = t.upper
            if u == "CASE":
                case_depth += 1
            elif u == "END" and case_depth:
                case_depth -= 1
            elif case_depth == 0:
                if u == "BETWEEN":
                    pending_between += 1
                elif u == "AND" and pending_between:
                    pending_between -= 1
                elif u in ("AND", "OR"):
                    segments.append(cur)
                    cur = []
                    continue
        cur.append(t)
    segments.append(cur)

    total = 0
    for seg in segments:
        while seg and seg[0].is_keyword("NOT"):
            seg = seg[1:]
        if not seg:
            continue
        if _fully_parenthesized(seg):
            inner = seg[1:-1]
            if inner and inner[0].is_keyword("SELECT", "WITH"):
                total += 1
            else:
                total += _count_atoms(inner)
        else:
            total += 1
    return total


def _fully_parenthesized(tokens: list[SqlToken]) -> bool:
    if len(tokens) < 2:
        return False
    if not (tokens[0].kind == PUNCT and tokens[0].text == "("):
        return False
    if not (tokens[-1].kind == PUNCT and tokens[-1].text == ")"):
        return False
    depth = 0
    for idx, t in enumerate(tokens):
        if t.kind == PUNCT and t.text == "(":
            depth += 1
        elif t.kind == PUNCT and t.text == ")":
            depth -= 1
            if depth == 0:
                return idx == len(tokens) - 1
    return False


def parse_sql(sql: str) -> ParsedQuery:
    """Tokenize and walk a SELECT statement; raises NonSelectError for
    DDL/DML and SqlTokenizeError/SqlParseError for malformed input."""
    tokens = strip_comments(tokenize_sql(sql))
    return _Parser(tokens).parse_statement()


def extract_features(sql: str) -> SqlFeatures:
    return parse_sql(sql).features()


# ---------------------------------------------------------------------------
# percentile banding

def nearest_rank(sorted_values: list, q: float):
    """Nearest-rank percentile: value at 1-based index ceil(q * n)."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("empty value list")
    idx = min(max(math.ceil(q * n), 1), n)
    return sorted_values[idx - 1]


@dataclass(frozen=True)
class ScoreBanding:
    """Band per input score plus the thresholds that produced them."""
    bands: tuple[str, ...]
    p25: float
    p75: float
    method: str = "nearest-rank"

    def counts(self) -> dict[str, int]:
        return {b: sum(1 for x in self.bands if x == b) for b in (LOW, MEDIUM, HIGH)}


def categorize_scores(scores: list[int]) -> ScoreBanding:
    """Band scores by quartile: strictly below p25 is low, strictly above
    p75 is high, everything else (the IQR) is medium."""
    if not scores:
        raise ValueError("cannot band an empty score list")
    ordered = sorted(scores)
    p25 = nearest_rank(ordered, 0.25)
    p75 = nearest_rank(ordered, 0.75)
    bands = tuple(
        LOW if s < p25 else HIGH if s > p75 else MEDIUM
        for s in scores
    )
    return ScoreBanding(bands=bands, p25=p25, p75=p75)


def five_number_summary(scores: list[int]) -> tuple:
    """(min, p25, median, p75, max); quartiles by nearest rank, median by
    the usual middle / mean-of-middle-pair rule."""
    if not scores:
        raise ValueError("cannot summarize an empty score list")
    ordered = sorted(scores)
    n = len(ordered)
    if n % 2:
        median = ordered[n // 2]
    else:
        median = (ordered[n // 2 - 1] + ordered[n // 2]) / 2
    return (ordered[0], nearest_rank(ordered, 0.25), median,
            nearest_rank(ordered, 0.75), ordered[-1])


# ---------------------------------------------------------------------------
# schema validation

@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    unknown_tables: tuple[str, ...]
    unknown_columns: tuple[tuple[str, str], ...]  # (table-or-alias context, column)
    notes: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "unknown_tables": list(self.unknown_tables),
            "unknown_columns": [list(pair) for pair in self.unknown_columns],
            "notes": list(self.notes),
        }


def _resolve_qualifier(scope: Scope, qualifier: str) -> Optional[SourceRef]:
    cursor: Optional[Scope] = scope
    while cursor is not None:
        for src in cursor.sources:
            if src.alias == qualifier:
                return src
            if src.alias is None and src.name == qualifier:
                return src
        cursor = cursor.parent
    # fall back to matching a named source that also has an alias
    cursor = scope
    while cursor is not None:
        for src in cursor.sources:
            if src.name == qualifier:
                return src
        cursor = cursor.parent
    return None


def _in_scope_tables(scope: Scope, catalog: SchemaCatalog) -> tuple[list, bool]:
    """Catalog tables visible from a scope, plus whether any opaque source
    (subquery or CTE) is visible."""
    tables = []
    opaque = False
    seen = set()
    cursor: Optional[Scope] = scope
    while cursor is not None:
        for src in cursor.sources:
            if src.name is None or src.is_cte:
                opaque = True
            elif catalog.has_table(src.name):
                if src.name not in seen:
                    seen.add(src.name)
                    tables.append(catalog.table(src.name))
        cursor = cursor.parent
    return tables, opaque


def validate_against_schema(sql: str, catalog: SchemaCatalog) -> ValidationReport:
    """Resolve every table reference and qualified column reference against
    the catalog. Unqualified columns resolve when exactly one in-scope table
    carries them; ambiguity or absence is noted without failing."""
    parsed = parse_sql(sql)

    unknown_tables: list[str] = []
    unknown_columns: list[tuple[str, str]] = []
    notes: list[str] = []

    def add_unknown_table(name: str) -> None:
        if name not in unknown_tables:
            unknown_tables.append(name)

    def add_unknown_column(context: str, column: str) -> None:
        if (context, column) not in unknown_columns:
            unknown_columns.append((context, column))

    for scope in parsed.scopes:
        for src in scope.sources:
            if src.name is None or src.is_cte:
                continue
            if not catalog.has_table(src.name):
                add_unknown_table(src.name)

    for scope in parsed.scopes:
        for qualifier, column, _pos in scope.column_refs:
            if qualifier is not None:
                src = _resolve_qualifier(scope, qualifier)
                if src is not None:
                    if src.name is None or src.is_cte:
                        continue  # opaque source; columns not checkable
                    if not catalog.has_table(src.name):
                        continue  # table already reported as unknown
                    if column != "*" and not catalog.table(src.name).has_column(column):
                        context = src.name if qualifier == src.name \
                            else f"{qualifier}->{src.name}"
                        add_unknown_column(context, column)
                elif catalog.has_table(qualifier):
                    if column != "*" and not catalog.table(qualifier).has_column(column):
                        add_unknown_column(qualifier, column)
                else:
                    notes.append(
                        f"unresolved qualifier {qualifier!r} for column {column!r}")
                continue
            tables, opaque = _in_scope_tables(scope, catalog)
            matches = [t for t in tables if t.has_column(column)]
            if len(matches) == 1:
                continue
            if len(matches) > 1:
                names = ", ".join(t.name for t in matches)
                notes.append(f"ambiguous unqualified column {column!r} ({names})")
            elif opaque:
                notes.append(
                    f"unqualified column {column!r} may come from a subquery or CTE")
            else:
                notes.append(
                    f"unqualified column {column!r} not found in any in-scope table")

    return ValidationReport(
        ok=not unknown_tables and not unknown_columns,
        unknown_tables=tuple(unknown_tables),
        unknown_columns=tuple(unknown_columns),
        notes=tuple(notes),
    )
