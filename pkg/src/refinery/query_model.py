"""SQL predicate extraction and literal rewriting.

Parses a single SELECT statement, identifies refinable predicates in its
outermost WHERE/HAVING clauses, and rewrites their literals to produce
refined queries. Only the literal spans of refinable predicates are ever
touched; everything else in the query text is preserved verbatim.

Refinable shapes:
  - ``<attr> <op> <number>`` with op in {<, <=, =, >=, >}
  - ``<attr> IN ('a', 'b', ...)`` over string literals
  - ``<attr> BETWEEN <lo> AND <hi>`` (decomposed into >= lo and <= hi)

``<attr>`` is a bare (optionally qualified) column name or a function call
such as COUNT(*) or SUM(x). NOT IN, LIKE, IS, column-to-column comparisons
and predicates inside nested query blocks are left untouched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ArityMismatch, KindMismatch, NoRefinablePredicates, QuerySyntaxError

NUMERIC_OPS = ("<", "<=", "=", ">=", ">")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|--[^\n]*|/\*.*?\*/)
  | (?P<string>'(?:[^']|'')*')
  | (?P<qident>"(?:[^"]|"")*"|`(?:[^`]|``)*`)
  | (?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<word>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<symbol><=|>=|<>|!=|\|\||[<>=+\-*/%(),.;])
    """,
    re.VERBOSE | re.DOTALL,
)

_KEYWORDS = {
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "ORDER", "LIMIT",
    "OFFSET", "AS", "AND", "OR", "NOT", "IN", "BETWEEN", "LIKE", "GLOB",
    "IS", "NULL", "CASE", "WHEN", "THEN", "ELSE", "END", "JOIN", "INNER",
    "LEFT", "RIGHT", "FULL", "OUTER", "CROSS", "NATURAL", "ON", "USING",
    "DISTINCT", "ASC", "DESC", "UNION", "ALL", "EXCEPT", "INTERSECT",
    "EXISTS", "CAST", "WITH", "RECURSIVE", "COLLATE", "ESCAPE",
}

_CLAUSE_STARTERS = ("FROM", "WHERE", "GROUP", "HAVING", "ORDER", "LIMIT")


@dataclass(frozen=True)
class Token:
    kind: str  # string | number | word | symbol
    text: str
    start: int
    end: int

    def upper(self) -> str:
        return self.text.upper()


def tokenize(sql: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            raise QuerySyntaxError(f"unexpected character {sql[pos]!r} at offset {pos}")
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        kind = "word" if m.lastgroup == "qident" else m.lastgroup
        tokens.append(Token(kind, m.group(), m.start(), m.end()))
    return tokens


@dataclass(frozen=True)
class RefinablePredicate:
    """One ``<attribute, operator, literal>`` triple from WHERE or HAVING."""

    id: int
    attribute: str
    attribute_kind: str        # base | derived
    clause: str                # where | having
    operator: str              # one of NUMERIC_OPS, or IN
    literal: float | frozenset[str]
    value_kind: str            # numeric | categorical
    literal_span: tuple[int, int]
    # Full span of "attr IN (...)", used to render an empty set as FALSE.
    predicate_span: tuple[int, int] | None = None
    integer_literal: bool = False

    def __post_init__(self):
        if (self.value_kind == "categorical") != (self.operator == "IN"):
            raise KindMismatch("categorical value_kind requires the IN operator")


@dataclass(frozen=True)
class Assignment:
    """One refined literal per refinable predicate, in predicate order."""

    values: tuple[float | frozenset[str], ...]

    @staticmethod
    def of(*values) -> "Assignment":
        return Assignment(tuple(
            frozenset(v) if isinstance(v, (set, frozenset, list, tuple)) else float(v)
            for v in values
        ))


@dataclass(frozen=True)
class ParsedQuery:
    original_sql: str
    predicates: tuple[RefinablePredicate, ...]
    referenced_tables: tuple[tuple[str, str], ...]   # (table, alias)
    referenced_columns: tuple[tuple[str | None, str], ...]  # (qualifier, column)
    clauses: dict = field(compare=False, hash=False, default_factory=dict)

    @property
    def alias_map(self) -> dict[str, str]:
        out = {}
        for table, alias in self.referenced_tables:
            out[alias.lower()] = table
            out[table.lower()] = table
        return out


def _matching_paren(tokens: list[Token], i: int) -> int:
    """Index of the RPAREN matching the LPAREN at i."""
    depth = 0
    for j in range(i, len(tokens)):
        t = tokens[j]
        if t.text == "(":
            depth += 1
        elif t.text == ")":
            depth -= 1
            if depth == 0:
                return j
    raise QuerySyntaxError("unbalanced parentheses")


def _skip_case(tokens: list[Token], i: int) -> int:
    """Index just past the END matching the CASE at i."""
    depth = 0
    for j in range(i, len(tokens)):
        u = tokens[j].upper()
        if tokens[j].kind == "word":
            if u == "CASE":
                depth += 1
            elif u == "END":
                depth -= 1
                if depth == 0:
                    return j + 1
    raise QuerySyntaxError("CASE without matching END")


def _is_subquery_group(tokens: list[Token], lparen: int) -> bool:
    j = lparen + 1
    return j < len(tokens) and tokens[j].kind == "word" and tokens[j].upper() in ("SELECT", "WITH")


def _split_clauses(tokens: list[Token]) -> dict[str, tuple[int, int]]:
    """Map clause name to its [start, end) token range in the outer block.

    Clause keys: select, from, where, group_by, having, tail (ORDER BY
    onwards). Ranges cover the tokens after the introducing keyword(s).
    """
    # Skip a leading WITH ... prologue: CTE bodies are parenthesized, so the
    # outer SELECT is the first depth-0 SELECT keyword.
    starts: list[tuple[str, int, int]] = []  # (clause, kw_index, body_start)
    depth = 0
    i = 0
    while i < len(tokens):
        t = tokens[i]
        if t.text == "(":
            depth += 1
        elif t.text == ")":
            depth -= 1
        elif depth == 0 and t.kind == "word":
            u = t.upper()
            if u in ("UNION", "INTERSECT", "EXCEPT"):
                raise QuerySyntaxError("compound SELECT (UNION/INTERSECT/EXCEPT) is not supported")
            if u == "SELECT" and not any(c == "select" for c, _, _ in starts):
                starts.append(("select", i, i + 1))
            elif u == "FROM":
                starts.append(("from", i, i + 1))
            elif u == "WHERE":
                starts.append(("where", i, i + 1))
            elif u == "GROUP":
                starts.append(("group_by", i, i + 2))  # skip BY
            elif u == "HAVING":
                starts.append(("having", i, i + 1))
            elif u in ("ORDER", "LIMIT") and not any(c == "tail" for c, _, _ in starts):
                starts.append(("tail", i, i))
        i += 1
    if not starts or starts[0][0] != "select":
        raise QuerySyntaxError("not a SELECT statement")
    clauses: dict[str, tuple[int, int]] = {}
    for idx, (name, _, body) in enumerate(starts):
        end = starts[idx + 1][1] if idx + 1 < len(starts) else len(tokens)
        clauses[name] = (body, end)
    return clauses


def _match_attribute(tokens: list[Token], i: int, end: int, sql: str) -> tuple[str, str, int] | None:
    """Try to read an attribute at i: (text, kind, next_index) or None."""
    if i >= end or tokens[i].kind != "word" or tokens[i].upper() in _KEYWORDS:
        return None
    if i + 1 < end and tokens[i + 1].text == "(":
        close = _matching_paren(tokens, i + 1)
        if close >= end or _is_subquery_group(tokens, i + 1):
            return None
        text = sql[tokens[i].start:tokens[close].end]
        return text, "derived", close + 1
    if i + 2 < end and tokens[i + 1].text == "." and tokens[i + 2].kind == "word":
        return f"{tokens[i].text}.{tokens[i + 2].text}", "base", i + 3
    return tokens[i].text, "base", i + 1


def _read_number(tokens: list[Token], i: int, end: int) -> tuple[float, tuple[int, int], bool, int] | None:
    """Optionally signed numeric literal at i: (value, span, is_int, next)."""
    sign = 1.0
    start_tok = i
    if i < end and tokens[i].text in ("-", "+"):
        sign = -1.0 if tokens[i].text == "-" else 1.0
        i += 1
    if i >= end or tokens[i].kind != "number":
        return None
    text = tokens[i].text
    is_int = re.fullmatch(r"\d+", text) is not None
    span = (tokens[start_tok].start, tokens[i].end)
    return sign * float(text), span, is_int, i + 1


def _unquote(s: str) -> str:
    return s[1:-1].replace("''", "'")


def _extract_predicates(tokens: list[Token], span: tuple[int, int], clause: str, sql: str) -> list[dict]:
    """Scan a clause token range for refinable predicates.

    Function-call arguments and nested query blocks are opaque; predicates
    under OR/NOT are extracted like any other (distance semantics unchanged).
    """
    found: list[dict] = []
    i, end = span
    while i < end:
        t = tokens[i]
        if t.text == "(":
            close = _matching_paren(tokens, i)
            if _is_subquery_group(tokens, i):
                i = close + 1   # nested block: preserved verbatim
            else:
                i += 1          # plain grouping: descend
            continue
        if t.kind == "word" and t.upper() == "CASE":
            i = _skip_case(tokens, i)
            continue
        attr = _match_attribute(tokens, i, end, sql)
        if attr is None:
            i += 1
            continue
        attr_text, attr_kind, j = attr
        pred = _match_comparison(tokens, i, j, end, attr_text, attr_kind, clause)
        if pred is not None:
            preds, j = pred
            found.extend(preds)
            i = j
            continue
        # Attribute not part of a refinable comparison; if it was a function
        # call we already consumed its argument list (opaque).
        i = j
    return found


def _match_comparison(tokens, attr_start, i, end, attr_text, attr_kind, clause):
    """Match the operator/literal part after an attribute, from index i."""
    if i >= end:
        return None
    t = tokens[i]
    u = t.upper()
    if t.kind == "symbol" and t.text in NUMERIC_OPS:
        num = _read_number(tokens, i + 1, end)
        if num is None:
            return None
        value, span, is_int, nxt = num
        return [dict(attribute=attr_text, attribute_kind=attr_kind, clause=clause,
                     operator=t.text, literal=value, value_kind="numeric",
                     literal_span=span, integer_literal=is_int)], nxt
    if t.kind == "word" and u == "IN":
        if i + 1 >= end or tokens[i + 1].text != "(":
            return None
        close = _matching_paren(tokens, i + 1)
        if close >= end or _is_subquery_group(tokens, i + 1):
            return None
        members = tokens[i + 2:close]
        texts = [m for m in members if m.text != ","]
        if not texts or any(m.kind != "string" for m in texts):
            return None   # numeric or expression IN-list: not refinable
        values = frozenset(_unquote(m.text) for m in texts)
        return [dict(attribute=attr_text, attribute_kind=attr_kind, clause=clause,
                     operator="IN", literal=values, value_kind="categorical",
                     literal_span=(tokens[i + 1].start, tokens[close].end),
                     predicate_span=(tokens[attr_start].start, tokens[close].end))], close + 1
    if t.kind == "word" and u == "BETWEEN":
        lo = _read_number(tokens, i + 1, end)
        if lo is None:
            return None
        lo_val, lo_span, lo_int, k = lo
        if k >= end or tokens[k].upper() != "AND":
            return None
        hi = _read_number(tokens, k + 1, end)
        if hi is None:
            return None
        hi_val, hi_span, hi_int, nxt = hi
        return [dict(attribute=attr_text, attribute_kind=attr_kind, clause=clause,
                     operator=">=", literal=lo_val, value_kind="numeric",
                     literal_span=lo_span, integer_literal=lo_int),
                dict(attribute=attr_text, attribute_kind=attr_kind, clause=clause,
                     operator="<=", literal=hi_val, value_kind="numeric",
                     literal_span=hi_span, integer_literal=hi_int)], nxt
    if t.kind == "word" and u == "NOT":
        # NOT IN / NOT BETWEEN: excluded shapes; skip past their literals.
        return None
    return None


def _parse_from_clause(tokens: list[Token], span: tuple[int, int]) -> list[tuple[str, str]]:
    tables: list[tuple[str, str]] = []
    i, end = span
    expect_table = True
    while i < end:
        t = tokens[i]
        if t.text == "(":
            i = _matching_paren(tokens, i) + 1   # derived table: out of scope
            expect_table = False
            continue
        if t.kind == "word":
            u = t.upper()
            if u == "JOIN" or t.text == ",":
                expect_table = True
                i += 1
                continue
            if u in ("INNER", "LEFT", "RIGHT", "FULL", "OUTER", "CROSS", "NATURAL"):
                i += 1
                continue
            if u in ("ON", "USING"):
                # Consume the join condition until the next JOIN or clause end.
                i += 1
                while i < end and not (tokens[i].kind == "word" and tokens[i].upper() in
                                       ("JOIN", "INNER", "LEFT", "RIGHT", "FULL", "CROSS", "NATURAL")) \
                        and tokens[i].text != ",":
                    if tokens[i].text == "(":
                        i = _matching_paren(tokens, i)
                    i += 1
                expect_table = True
                continue
            if expect_table:
                name = t.text
                alias = name
                j = i + 1
                if j < end and tokens[j].upper() == "AS":
                    j += 1
                if j < end and tokens[j].kind == "word" and tokens[j].upper() not in _KEYWORDS:
                    alias = tokens[j].text
                    j = j + 1
                tables.append((name, alias))
                expect_table = False
                i = j
                continue
        elif t.text == ",":
            expect_table = True
        i += 1
    return tables


def _collect_column_refs(tokens: list[Token], ranges: list[tuple[int, int]],
                         tables: list[tuple[str, str]]) -> list[tuple[str | None, str]]:
    """Candidate column references: descends into function calls, skips
    nested query blocks, output aliases and the tables themselves."""
    alias_names = {a.lower() for _, a in tables} | {t.lower() for t, _ in tables}
    select_aliases: set[str] = set()
    refs: list[tuple[str | None, str]] = []
    seen: set[tuple[str | None, str]] = set()
    for start, end in ranges:
        i = start
        while i < end:
            t = tokens[i]
            if t.text == "(" and _is_subquery_group(tokens, i):
                i = _matching_paren(tokens, i) + 1
                continue
            if t.kind == "word" and t.upper() == "AS":
                if i + 1 < end and tokens[i + 1].kind == "word":
                    select_aliases.add(tokens[i + 1].text.lower())
                    i += 2
                    continue
            if t.kind == "word" and t.upper() not in _KEYWORDS:
                if i + 1 < end and tokens[i + 1].text == "(":
                    i += 1   # function name
                    continue
                if i + 1 < end and tokens[i + 1].text == "." and tokens[i + 2].kind == "word":
                    ref = (t.text, tokens[i + 2].text)
                    i += 3
                else:
                    name = t.text
                    i += 1
                    if name.lower() in alias_names or name.lower() in select_aliases:
                        continue
                    ref = (None, name)
                if ref not in seen:
                    seen.add(ref)
                    refs.append(ref)
                continue
            i += 1
    return refs


def parse_query(sql: str) -> ParsedQuery:
    """Extract refinable predicates and structure from a single SELECT."""
    stripped = sql.strip()
    if not stripped:
        raise QuerySyntaxError("empty statement")
    tokens = tokenize(sql)
    # Reject multi-statement input (a single trailing semicolon is fine).
    semis = [k for k, t in enumerate(tokens) if t.text == ";"]
    if any(k != len(tokens) - 1 for k in semis):
        raise QuerySyntaxError("expected a single SELECT statement")
    if semis:
        tokens = tokens[:-1]
    clauses = _split_clauses(tokens)

    raw: list[dict] = []
    for clause in ("where", "having"):
        if clause in clauses:
            raw.extend(_extract_predicates(tokens, clauses[clause], clause, sql))
    if not raw:
        raise NoRefinablePredicates("query has no refinable predicates")
    raw.sort(key=lambda d: d["literal_span"][0])
    predicates = tuple(RefinablePredicate(id=n, **d) for n, d in enumerate(raw))

    tables = _parse_from_clause(tokens, clauses["from"]) if "from" in clauses else []
    col_ranges = [clauses[c] for c in ("select", "from", "where", "group_by", "having", "tail")
                  if c in clauses]
    columns = _collect_column_refs(tokens, col_ranges, tables)

    clause_texts = {name: sql[tokens[s].start:tokens[e - 1].end] if e > s else ""
                    for name, (s, e) in clauses.items()}
    return ParsedQuery(
        original_sql=sql,
        predicates=predicates,
        referenced_tables=tuple(tables),
        referenced_columns=tuple(columns),
        clauses=clause_texts,
    )


def baseline_assignment(q: ParsedQuery) -> Assignment:
    """The original query's own literals, position for position."""
    return Assignment(tuple(p.literal for p in q.predicates))


def format_number(value: float, integer_literal: bool) -> str:
    v = float(value)
    if integer_literal and v.is_integer():
        return str(int(v))
    return repr(v)


def _format_set(values: frozenset[str]) -> str:
    quoted = ", ".join("'" + v.replace("'", "''") + "'" for v in sorted(values))
    return f"({quoted})"


def check_assignment(q: ParsedQuery, theta: Assignment) -> None:
    if len(theta.values) != len(q.predicates):
        raise ArityMismatch(f"assignment has {len(theta.values)} values for "
                            f"{len(q.predicates)} predicates")
    for p, v in zip(q.predicates, theta.values):
        if p.value_kind == "numeric" and not isinstance(v, (int, float)):
            raise KindMismatch(f"predicate {p.id} ({p.attribute}) expects a number")
        if p.value_kind == "categorical" and not isinstance(v, frozenset):
            raise KindMismatch(f"predicate {p.id} ({p.attribute}) expects a set")


def apply_assignment(q: ParsedQuery, theta: Assignment) -> str:
    """Rewrite the query's refinable literals; byte-deterministic."""
    check_assignment(q, theta)
    edits: list[tuple[int, int, str]] = []
    for p, v in zip(q.predicates, theta.values):
        if p.value_kind == "numeric":
            edits.append((*p.literal_span, format_number(v, p.integer_literal)))
        elif v:
            edits.append((*p.literal_span, _format_set(v)))
        else:
            # Empty IN-list: render the whole predicate as a FALSE test.
            edits.append((*p.predicate_span, "(0 = 1)"))
    out = q.original_sql
    for start, end, text in sorted(edits, reverse=True):
        out = out[:start] + text + out[end:]
    return out
