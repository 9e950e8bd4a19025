"""Refinement subspaces and the maximal search domain.

A subspace assigns each refinable predicate an admissible range: a closed
numeric interval, or a set-inclusion pair (cmin, cmax) for categorical
predicates. The domain is the widest subspace: data min/max for numeric
base attributes, the full distinct-value set for categorical ones, and
probed min/max for derived attributes (aggregates in HAVING).
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass

from . import catalog
from .catalog import CatalogHandle, execute, resolve_column
from .errors import ArityMismatch, EmptyRange, ProbeFailure, UnknownColumn
from .query_model import Assignment, ParsedQuery

GRID_LIMIT = 10_000


@dataclass(frozen=True)
class NumericRange:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise EmptyRange(f"numeric range [{self.lo}, {self.hi}] is empty")

    def contains(self, value) -> bool:
        return isinstance(value, (int, float)) and self.lo <= float(value) <= self.hi


@dataclass(frozen=True)
class CategoricalRange:
    cmin: frozenset[str]
    cmax: frozenset[str]

    def __post_init__(self):
        if not self.cmin <= self.cmax:
            raise EmptyRange("cmin must be a subset of cmax")

    def contains(self, value) -> bool:
        return isinstance(value, frozenset) and self.cmin <= value <= self.cmax


PredicateRange = NumericRange | CategoricalRange


@dataclass(frozen=True)
class Subspace:
    ranges: tuple[PredicateRange, ...]


@dataclass(frozen=True)
class SubspaceDomain:
    """Maximal admissible ranges, one per predicate, plus rendering and
    sampling metadata (attribute names, integer snapping flags)."""

    ranges: tuple[PredicateRange, ...]
    attributes: tuple[str, ...]
    integer_flags: tuple[bool, ...]
    probe_bounds: dict = None   # per derived predicate: both probe variants

    def as_subspace(self) -> Subspace:
        return Subspace(self.ranges)

    def to_text(self) -> str:
        """Structured-text rendering in the shared domain-listing shape."""
        items = []
        for attr, r in zip(self.attributes, self.ranges):
            if isinstance(r, NumericRange):
                rng = {"min_val": _num(r.lo), "max_val": _num(r.hi)}
            else:
                rng = {"min_val": sorted(r.cmin), "max_val": sorted(r.cmax)}
            items.append({"attribute": attr, "value_range": rng})
        return json.dumps(items, indent=2, ensure_ascii=False)


def _num(x: float):
    return int(x) if float(x).is_integer() else x


def contains(theta_space: Subspace, theta: Assignment) -> bool:
    """True iff every predicate's value lies in its admitted range."""
    if len(theta_space.ranges) != len(theta.values):
        raise ArityMismatch(
            f"subspace has {len(theta_space.ranges)} ranges, assignment has "
            f"{len(theta.values)} values")
    return all(r.contains(v) for r, v in zip(theta_space.ranges, theta.values))


def clamp_to_domain(dom: SubspaceDomain, theta_space: Subspace) -> Subspace:
    if len(dom.ranges) != len(theta_space.ranges):
        raise ArityMismatch("subspace arity does not match domain")
    clamped: list[PredicateRange] = []
    for d, r in zip(dom.ranges, theta_space.ranges):
        if isinstance(d, NumericRange) and isinstance(r, NumericRange):
            lo, hi = max(d.lo, r.lo), min(d.hi, r.hi)
            if lo > hi:
                raise EmptyRange(f"[{r.lo}, {r.hi}] does not intersect domain [{d.lo}, {d.hi}]")
            clamped.append(NumericRange(lo, hi))
        elif isinstance(d, CategoricalRange) and isinstance(r, CategoricalRange):
            clamped.append(CategoricalRange(r.cmin & d.cmax, r.cmax & d.cmax))
        else:
            raise ArityMismatch("range kind does not match domain at same position")
    return Subspace(tuple(clamped))


def sample_within(theta_space: Subspace, rng: random.Random,
                  integer_flags: tuple[bool, ...] | None = None) -> Assignment:
    """Uniform draw: numeric uniform on [lo, hi] (snapped for integer
    columns), categorical cmin plus each optional element with p=1/2."""
    values = []
    for i, r in enumerate(theta_space.ranges):
        if isinstance(r, NumericRange):
            v = rng.uniform(r.lo, r.hi)
            if integer_flags and integer_flags[i]:
                v = _snap_int(v, r)
            values.append(float(v))
        else:
            chosen = set(r.cmin)
            for item in sorted(r.cmax - r.cmin):
                if rng.random() < 0.5:
                    chosen.add(item)
            values.append(frozenset(chosen))
    return Assignment(tuple(values))


def _snap_int(v: float, r: NumericRange) -> float:
    import math
    snapped = float(round(v))
    lo_i, hi_i = math.ceil(r.lo), math.floor(r.hi)
    if lo_i > hi_i:
        return v   # interval contains no integer; keep the raw draw
    return float(min(max(snapped, lo_i), hi_i))


def derive_domain(handle: CatalogHandle, q: ParsedQuery, *,
                  use_where_filtered_bounds: bool = False,
                  fallback_bounds: dict | None = None) -> SubspaceDomain:
    """Compute the maximal range per predicate.

    Derived attributes are probed by stripping HAVING and wrapping the
    grouped aggregate in an outer MIN/MAX; bounds are computed both with
    and without the baseline WHERE filter, and the unfiltered (wider) pair
    is used unless use_where_filtered_bounds is set. When a probe cannot
    run, fallback_bounds[predicate_id] = [lo, hi] takes over, otherwise
    ProbeFailure is raised.
    """
    ranges: list[PredicateRange] = []
    flags: list[bool] = []
    probe_bounds: dict[int, dict] = {}
    for p in q.predicates:
        if p.attribute_kind == "derived":
            try:
                variants = {
                    "unfiltered": _probe(handle, q, p.attribute, with_where=False),
                    "where_filtered": _probe(handle, q, p.attribute, with_where=True),
                }
                probe_bounds[p.id] = {k: [v[0], v[1]] for k, v in variants.items()}
                lo, hi, is_int = variants["where_filtered" if use_where_filtered_bounds
                                          else "unfiltered"]
            except ProbeFailure:
                if fallback_bounds and p.id in fallback_bounds:
                    lo, hi = fallback_bounds[p.id]
                    is_int = float(lo).is_integer() and float(hi).is_integer()
                else:
                    raise
            ranges.append(NumericRange(float(lo), float(hi)))
            flags.append(is_int)
            continue
        resolved = resolve_column(handle, q, *_split_attr(p.attribute))
        if resolved is None:
            raise UnknownColumn(f"cannot resolve predicate attribute {p.attribute!r}")
        table, col = resolved
        info = handle.table_info(table)
        if p.value_kind == "numeric":
            rs = execute(handle, f'SELECT MIN("{col}"), MAX("{col}") FROM "{table}"')
            lo, hi = rs.rows[0]
            if lo is None:
                raise ProbeFailure(f"column {table}.{col} has no values")
            ranges.append(NumericRange(float(lo), float(hi)))
            flags.append(col in info.integer_cols)
        else:
            rs = execute(handle, f'SELECT DISTINCT "{col}" FROM "{table}" '
                                 f'WHERE "{col}" IS NOT NULL')
            dom = frozenset(str(v) for (v,) in rs.rows)
            ranges.append(CategoricalRange(frozenset(), dom))
            flags.append(False)
    return SubspaceDomain(ranges=tuple(ranges), attributes=tuple(p.attribute for p in q.predicates),
                          integer_flags=tuple(flags), probe_bounds=probe_bounds)


def _split_attr(attribute: str) -> tuple[str | None, str]:
    if "." in attribute:
        qualifier, name = attribute.split(".", 1)
        return qualifier, name
    return None, attribute


def _probe(handle: CatalogHandle, q: ParsedQuery, aggregate: str,
           with_where: bool) -> tuple[float, float, bool]:
    """Min/max of a grouped aggregate, via HAVING-stripped query rewrite."""
    clauses = q.clauses
    if "from" not in clauses:
        raise ProbeFailure("query has no FROM clause to probe against")
    inner = f'SELECT {aggregate} AS v FROM {clauses["from"]}'
    if with_where and clauses.get("where"):
        inner += f' WHERE {clauses["where"]}'
    if clauses.get("group_by"):
        inner += f' GROUP BY {clauses["group_by"]}'
    probe_sql = (f'SELECT MIN(v), MAX(v), '
                 f'SUM(CASE WHEN v != CAST(v AS INTEGER) THEN 1 ELSE 0 END) '
                 f'FROM ({inner})')
    try:
        rs = execute(handle, probe_sql)
    except catalog.ExecError as e:
        raise ProbeFailure(f"probe query failed: {e}") from e
    lo, hi, fractional = rs.rows[0]
    if lo is None:
        raise ProbeFailure("probe produced no groups")
    return float(lo), float(hi), not fractional


def enumerate_assignments(dom: SubspaceDomain, limit: int = GRID_LIMIT) -> list[Assignment]:
    """Full grid over an enumerable domain: consecutive integers for
    integer-snapped numeric predicates, every subset of each categorical
    domain. Raises when a predicate is continuous or the grid exceeds
    ``limit``."""
    import math
    axes: list[list] = []
    for r, is_int, attr in zip(dom.ranges, dom.integer_flags, dom.attributes):
        if isinstance(r, NumericRange):
            if not is_int:
                raise EmptyRange(f"predicate {attr!r} is continuous; grid enumeration "
                                 f"needs integer-valued columns")
            axes.append([float(v) for v in range(math.ceil(r.lo), math.floor(r.hi) + 1)])
        else:
            items = sorted(r.cmax)
            subsets = [frozenset(c) for n in range(len(items) + 1)
                       for c in itertools.combinations(items, n)]
            axes.append(subsets)
    size = 1
    for axis in axes:
        size *= len(axis)
        if size > limit:
            raise EmptyRange(f"assignment grid has more than {limit} points")
    return [Assignment(tuple(combo)) for combo in itertools.product(*axes)]
