"""Dataset loading, query execution, and query-conditioned profiling.

Tables come from CSV files (RFC 4180, header row, UTF-8) listed in a
manifest and are loaded into an in-memory SQLite database. Column types
are inferred from the data: a column whose non-empty values all look like
decimal numbers is numeric, everything else is categorical. Empty cells
become NULL and are excluded from profiles and domains.
"""

from __future__ import annotations

import csv
import json
import re
import sqlite3
import statistics
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ExecError, SchemaError, TypeInferenceError, UnknownColumn, UnknownTable
from .query_model import ParsedQuery

_NUMERIC_RE = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")

# Value distributions in prompts are capped to keep descriptions concise.
CATEGORICAL_CAP = 50


@dataclass(frozen=True)
class ColumnProfile:
    name: str
    dtype: str                      # numeric | categorical
    is_integer: bool = False
    mean: float | None = None
    std: float | None = None
    q1: float | None = None
    median: float | None = None
    q3: float | None = None
    min: float | None = None
    max: float | None = None
    distribution: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class TableDescription:
    table: str
    primary_key: str | None
    foreign_keys: tuple[dict, ...]
    profiles: tuple[ColumnProfile, ...]


@dataclass(frozen=True)
class DatabaseDescription:
    tables: tuple[TableDescription, ...]

    def to_text(self) -> str:
        """Structured-text rendering for prompt embedding."""
        blocks = []
        for t in self.tables:
            attrs = {}
            for p in t.profiles:
                if p.dtype == "numeric":
                    attrs[p.name] = {
                        "type": "int" if p.is_integer else "float",
                        "domain": [_disp(p.min), _disp(p.max)],
                        "stats": {"mean": _disp(p.mean), "std": _disp(p.std),
                                  "q1": _disp(p.q1), "median": _disp(p.median),
                                  "q3": _disp(p.q3)},
                    }
                else:
                    attrs[p.name] = {
                        "type": "category",
                        "domain": [v for v, _ in p.distribution],
                        "stats": {"distribution": [{"value": v, "p": _disp(f)}
                                                   for v, f in p.distribution]},
                    }
            block = {"table": t.table, "primary_key": t.primary_key,
                     "foreign_keys": list(t.foreign_keys), "attributes": attrs}
            blocks.append(json.dumps(block, indent=2, ensure_ascii=False))
        return "\n".join(blocks)


def _disp(x: float | None) -> float | None:
    if x is None:
        return None
    r = round(float(x), 4)
    return int(r) if float(r).is_integer() else r


@dataclass(frozen=True)
class ResultSet:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def column(self, name: str) -> list:
        lowered = [c.lower() for c in self.columns]
        try:
            i = lowered.index(name.lower())
        except ValueError:
            raise UnknownColumn(f"result has no column {name!r} (has {list(self.columns)})")
        return [r[i] for r in self.rows]


def canonical_scalar(v) -> str:
    if v is None:
        return "NULL"
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, float)):
        f = float(v)
        return str(int(f)) if f.is_integer() else repr(f)
    return str(v)


def canonical_row(row: tuple) -> tuple[str, ...]:
    return tuple(canonical_scalar(v) for v in row)


@dataclass
class _TableInfo:
    name: str
    columns: list[str]
    dtypes: dict[str, str]
    integer_cols: set[str]
    row_count: int
    primary_key: str | None = None
    foreign_keys: list[dict] = field(default_factory=list)


class CatalogHandle:
    """Loaded dataset; supports concurrent read-only execution."""

    def __init__(self):
        self._conn = sqlite3.connect(":memory:", check_same_thread=False)
        self._lock = threading.Lock()
        self.tables: dict[str, _TableInfo] = {}
        self.executions = 0   # query counter, used by cache tests

    def close(self):
        self._conn.close()

    # -- case-insensitive lookups --

    def table_info(self, name: str) -> _TableInfo:
        for key, info in self.tables.items():
            if key.lower() == name.lower():
                return info
        raise UnknownTable(f"table {name!r} is not loaded")

    def column_name(self, table: str, name: str) -> str:
        info = self.table_info(table)
        for col in info.columns:
            if col.lower() == name.lower():
                return col
        raise UnknownColumn(f"table {info.name!r} has no column {name!r}")


def _looks_numeric(value: str) -> bool:
    return _NUMERIC_RE.fullmatch(value.strip()) is not None


def _infer_types(header: list[str], rows: list[list[str]]) -> tuple[dict[str, str], set[str]]:
    dtypes: dict[str, str] = {}
    integer_cols: set[str] = set()
    for i, col in enumerate(header):
        values = [r[i] for r in rows if r[i] != ""]
        if values and all(_looks_numeric(v) for v in values):
            dtypes[col] = "numeric"
            if all(float(v).is_integer() for v in values):
                integer_cols.add(col)
        else:
            dtypes[col] = "categorical"
    return dtypes, integer_cols


def load_dataset(manifest: dict | list, base_dir: str | Path | None = None) -> CatalogHandle:
    """Load every table in the manifest into a fresh catalog.

    Manifest shape: {"tables": [{"table_name", "csv_path", "primary_key"?,
    "foreign_keys"?}, ...]} or the table list directly. Relative csv paths
    resolve against base_dir.
    """
    entries = manifest["tables"] if isinstance(manifest, dict) else manifest
    base = Path(base_dir) if base_dir is not None else Path(".")
    handle = CatalogHandle()
    for entry in entries:
        name = entry["table_name"]
        path = Path(entry["csv_path"])
        if not path.is_absolute():
            path = base / path
        if not path.exists():
            raise FileNotFoundError(f"csv for table {name!r} not found: {path}")
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError(f"{path}: missing header row")
            if len(set(header)) != len(header) or any(not h for h in header):
                raise SchemaError(f"{path}: duplicate or empty column names")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
                rows.append(row)
        dtypes, integer_cols = _infer_types(header, rows)
        _create_table(handle, name, header, rows, dtypes, integer_cols)
        info = handle.tables[name]
        info.primary_key = entry.get("primary_key")
        info.foreign_keys = list(entry.get("foreign_keys", []))
    return handle


def _create_table(handle, name, header, rows, dtypes, integer_cols):
    decls = []
    for col in header:
        if dtypes[col] == "numeric":
            decls.append(f'"{col}" {"INTEGER" if col in integer_cols else "REAL"}')
        else:
            decls.append(f'"{col}" TEXT')
    cur = handle._conn.cursor()
    cur.execute(f'CREATE TABLE "{name}" ({", ".join(decls)})')
    converted = []
    for row in rows:
        out = []
        for col, v in zip(header, row):
            if v == "":
                out.append(None)
            elif dtypes[col] == "numeric":
                try:
                    out.append(int(v) if col in integer_cols else float(v))
                except ValueError as e:
                    raise TypeInferenceError(f"{name}.{col}: {v!r} is not numeric") from e
            else:
                out.append(v)
        converted.append(out)
    cur.executemany(
        f'INSERT INTO "{name}" VALUES ({", ".join("?" * len(header))})', converted)
    handle._conn.commit()
    handle.tables[name] = _TableInfo(
        name=name, columns=list(header), dtypes=dtypes,
        integer_cols=integer_cols, row_count=len(rows))


def execute(handle: CatalogHandle, sql: str) -> ResultSet:
    """Run sql and materialize the result. Deterministic for ordered
    queries; unordered results come back in engine order and downstream
    consumers treat them as multisets."""
    with handle._lock:
        handle.executions += 1
        try:
            cur = handle._conn.execute(sql)
            rows = cur.fetchall()
        except sqlite3.Error as e:
            raise ExecError(str(e), sql=sql) from e
        columns = tuple(d[0] for d in cur.description) if cur.description else ()
    return ResultSet(columns=columns, rows=tuple(tuple(r) for r in rows))


def profile_column(handle: CatalogHandle, table: str, column: str) -> ColumnProfile:
    info = handle.table_info(table)
    col = handle.column_name(table, column)
    values = [v for (v,) in execute(handle, f'SELECT "{col}" FROM "{info.name}"').rows
              if v is not None]
    if info.dtypes[col] == "numeric":
        if not values:
            return ColumnProfile(name=col, dtype="numeric", is_integer=col in info.integer_cols)
        data = [float(v) for v in values]
        if len(data) == 1:
            q1 = med = q3 = data[0]
        else:
            q1, med, q3 = statistics.quantiles(data, n=4, method="inclusive")
        return ColumnProfile(
            name=col, dtype="numeric", is_integer=col in info.integer_cols,
            mean=statistics.fmean(data), std=statistics.pstdev(data),
            q1=q1, median=med, q3=q3, min=min(data), max=max(data))
    counts: dict[str, int] = {}
    for v in values:
        counts[str(v)] = counts.get(str(v), 0) + 1
    total = sum(counts.values())
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    dist = [(v, c / total) for v, c in ranked[:CATEGORICAL_CAP]]
    if len(ranked) > CATEGORICAL_CAP:
        dist.append(("(other)", sum(c for _, c in ranked[CATEGORICAL_CAP:]) / total))
    return ColumnProfile(name=col, dtype="categorical", distribution=tuple(dist))


def resolve_column(handle: CatalogHandle, q: ParsedQuery,
                   qualifier: str | None, name: str) -> tuple[str, str] | None:
    """Map a (qualifier, column) reference to (table, column).

    Qualified references must resolve; unqualified names that match no
    referenced table's columns return None (they are output aliases or
    expressions, not base attributes).
    """
    if qualifier is not None:
        table = q.alias_map.get(qualifier.lower())
        if table is None:
            raise UnknownTable(f"unknown table or alias {qualifier!r}")
        return table, handle.column_name(table, name)
    for table, _ in q.referenced_tables:
        info = handle.table_info(table)
        for col in info.columns:
            if col.lower() == name.lower():
                return info.name, col
    return None


def describe_for_query(handle: CatalogHandle, q: ParsedQuery) -> DatabaseDescription:
    """Q-conditioned description: only the query's tables, and only the
    attributes the query mentions."""
    wanted: dict[str, list[str]] = {}
    for table, _ in q.referenced_tables:
        info = handle.table_info(table)   # raises UnknownTable early
        wanted.setdefault(info.name, [])
    for qualifier, name in q.referenced_columns:
        resolved = resolve_column(handle, q, qualifier, name)
        if resolved is None:
            continue
        table, col = resolved
        if col not in wanted[table]:
            wanted[table].append(col)
    tables = []
    for table, cols in wanted.items():
        info = handle.table_info(table)
        profiles = tuple(profile_column(handle, table, c) for c in cols)
        tables.append(TableDescription(
            table=info.name, primary_key=info.primary_key,
            foreign_keys=tuple(info.foreign_keys), profiles=profiles))
    return DatabaseDescription(tables=tuple(tables))
