"""In-memory bag-semantics relational engine.

Relations are named schemas over multisets of tuples.  The module provides
the basic operators (filter, semi-join, natural join, projection, grouping),
two evaluators for normalized conjunctive queries (a left-deep baseline and
a join-tree based semi-join evaluator), and a simple cardinality estimator
based on distinct-value counts.
"""

from __future__ import annotations

import csv
import json
import operator
from abc import ABC, abstractmethod
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    AggregateOverNonNumeric,
    EmptyAggregate,
    InvalidJoinTree,
    TypeMismatch,
    UnknownAttribute,
)

_OPS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}

AGG_FUNCTIONS = ("MIN", "MAX", "COUNT", "SUM", "AVG")


@dataclass(frozen=True)
class Predicate:
    """Single-relation comparison against a literal."""

    attribute: str
    op: str
    literal: object

    def matches(self, value):
        if _is_number(value) != _is_number(self.literal):
            raise TypeMismatch(
                f"cannot compare {value!r} with literal {self.literal!r}"
            )
        return _OPS[self.op](value, self.literal)


@dataclass
class Relation:
    name: str
    schema: list
    rows: list = field(default_factory=list)

    def __post_init__(self):
        self.schema = list(self.schema)
        if len(set(self.schema)) != len(self.schema):
            raise ValueError(f"duplicate attribute in schema of {self.name}")
        self.rows = [tuple(r) for r in self.rows]
        for r in self.rows:
            if len(r) != len(self.schema):
                raise ValueError(
                    f"row arity {len(r)} != schema arity {len(self.schema)} "
                    f"in relation {self.name}"
                )

    def column(self, attr):
        idx = self._index(attr)
        return [r[idx] for r in self.rows]

    def _index(self, attr):
        try:
            return self.schema.index(attr)
        except ValueError:
            raise UnknownAttribute(f"{attr} not in {self.name}{tuple(self.schema)}")

    def as_multiset(self, attr_order=None):
        """Counter of tuples, optionally with columns reordered."""
        if attr_order is None:
            attr_order = sorted(self.schema)
        idxs = [self._index(a) for a in attr_order]
        return Counter(tuple(r[i] for i in idxs) for r in self.rows)

    def __len__(self):
        return len(self.rows)


@dataclass
class Database:
    tables: dict = field(default_factory=dict)

    def add(self, rel: Relation):
        if rel.name in self.tables:
            raise ValueError(f"duplicate table {rel.name}")
        self.tables[rel.name] = rel

    def table(self, name):
        if name not in self.tables:
            raise UnknownAttribute(f"unknown table {name}")
        return self.tables[name]


@dataclass
class OpCounter:
    joins: int = 0
    semijoins: int = 0
    filters: int = 0
    aggregates: int = 0
    intermediate_tuples: int = 0  # summed output sizes of (semi-)joins


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def relations_equal(a: Relation, b: Relation) -> bool:
    """Multiset equality up to column order."""
    if set(a.schema) != set(b.schema):
        return False
    return a.as_multiset() == b.as_multiset()


# ---------------------------------------------------------------------------
# basic operators
# ---------------------------------------------------------------------------

def apply_filter(rel: Relation, preds, counter: OpCounter | None = None) -> Relation:
    idx = {p: rel._index(p.attribute) for p in preds}
    rows = [r for r in rel.rows if all(p.matches(r[idx[p]]) for p in preds)]
    if counter is not None:
        counter.filters += 1
    return Relation(rel.name, rel.schema, rows)


def _shared(left: Relation, right: Relation):
    rset = set(right.schema)
    return [a for a in left.schema if a in rset]


def semi_join(left: Relation, right: Relation, counter: OpCounter | None = None) -> Relation:
    shared = _shared(left, right)
    if counter is not None:
        counter.semijoins += 1
    if not shared:
        rows = list(left.rows) if right.rows else []
    else:
        li = [left._index(a) for a in shared]
        ri = [right._index(a) for a in shared]
        keys = {tuple(r[i] for i in ri) for r in right.rows}
        rows = [r for r in left.rows if tuple(r[i] for i in li) in keys]
    if counter is not None:
        counter.intermediate_tuples += len(rows)
    return Relation(left.name, left.schema, rows)


def natural_join(left: Relation, right: Relation, counter: OpCounter | None = None) -> Relation:
    shared = _shared(left, right)
    if counter is not None:
        counter.joins += 1
    li = [left._index(a) for a in shared]
    extra = [a for a in right.schema if a not in shared]
    ei = [right._index(a) for a in extra]
    ri = [right._index(a) for a in shared]
    buckets = defaultdict(list)
    for r in right.rows:
        buckets[tuple(r[i] for i in ri)].append(tuple(r[i] for i in ei))
    rows = []
    for l in left.rows:
        key = tuple(l[i] for i in li)
        for tail in buckets.get(key, ()):
            rows.append(l + tail)
    if counter is not None:
        counter.intermediate_tuples += len(rows)
    return Relation(f"({left.name}*{right.name})", left.schema + extra, rows)


def project(rel: Relation, attrs, counter: OpCounter | None = None) -> Relation:
    idxs = [rel._index(a) for a in attrs]
    rows = [tuple(r[i] for i in idxs) for r in rel.rows]
    return Relation(rel.name, list(attrs), rows)


@dataclass(frozen=True)
class Aggregate:
    fn: str  # MIN | MAX | COUNT | SUM | AVG
    attribute: str | None  # None only for COUNT(*)
    distinct: bool = False

    def label(self):
        inner = self.attribute if self.attribute is not None else "*"
        if self.distinct:
            inner = f"distinct {inner}"
        return f"{self.fn.lower()}({inner})"


def _agg_value(agg: Aggregate, values):
    if agg.fn == "COUNT":
        if agg.attribute is None:
            return len(values)
        return len(set(values)) if agg.distinct else len(values)
    if agg.distinct:
        values = list(set(values))
    if not values:
        raise EmptyAggregate(f"{agg.label()} over empty input")
    if agg.fn == "MIN":
        return min(values)
    if agg.fn == "MAX":
        return max(values)
    if any(not _is_number(v) for v in values):
        raise AggregateOverNonNumeric(f"{agg.label()} over non-numeric values")
    if agg.fn == "SUM":
        return sum(values)
    if agg.fn == "AVG":
        return sum(values) / len(values)
    raise ValueError(f"unknown aggregate {agg.fn}")


def group_aggregate(rel: Relation, grouping, aggs, counter: OpCounter | None = None) -> Relation:
    aggs = [a if isinstance(a, Aggregate) else Aggregate(*a) for a in aggs]
    gidx = [rel._index(g) for g in grouping]
    aidx = [rel._index(a.attribute) if a.attribute is not None else None for a in aggs]
    if counter is not None:
        counter.aggregates += 1
    if not grouping and not rel.rows:
        # closed scalar model: no NULL stand-in for empty aggregates
        raise EmptyAggregate("aggregate over empty ungrouped relation")
    groups = {}
    order = []
    for r in rel.rows:
        key = tuple(r[i] for i in gidx)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(r)
    schema = list(grouping)
    for a in aggs:
        label = a.label()
        while label in schema:
            label += "_"
        schema.append(label)
    rows = []
    for key in order:
        members = groups[key]
        vals = []
        for a, i in zip(aggs, aidx):
            col = [m[i] for m in members] if i is not None else members
            vals.append(_agg_value(a, col))
        rows.append(key + tuple(vals))
    return Relation(f"agg({rel.name})", schema, rows)


# ---------------------------------------------------------------------------
# query evaluation over a NormalizedCQ
# ---------------------------------------------------------------------------

def atom_relation(cq, atom, db: Database, counter: OpCounter | None = None) -> Relation:
    """Renamed, filtered relation for one query atom.

    Attributes are renamed to join-class ids; if two attributes of the atom
    fall into the same class, the implied intra-atom equality is applied and
    one column kept.
    """
    base = db.table(atom.table)
    renaming = dict(atom.renaming)
    for col in base.schema:
        renaming.setdefault(col, f"{atom.alias}.{col}")
    seen = {}
    keep = []  # (source index, class id)
    eq_groups = defaultdict(list)
    for i, col in enumerate(base.schema):
        cid = renaming[col]
        eq_groups[cid].append(i)
        if cid not in seen:
            seen[cid] = i
            keep.append((i, cid))
    rows = base.rows
    dup_groups = [idxs for idxs in eq_groups.values() if len(idxs) > 1]
    if dup_groups:
        rows = [
            r for r in rows
            if all(len({r[i] for i in idxs}) == 1 for idxs in dup_groups)
        ]
    rel = Relation(atom.alias, [cid for _, cid in keep],
                   [tuple(r[i] for i, _ in keep) for r in rows])
    preds = cq.filters.get(atom.alias, [])
    if preds:
        rel = apply_filter(rel, preds, counter)
    return rel


def project_columns(rel: Relation, columns) -> Relation:
    """Projection that tolerates repeated columns (labels get suffixed)."""
    idxs = [rel._index(c) for c in columns]
    labels, seen = [], {}
    for c in columns:
        seen[c] = seen.get(c, 0) + 1
        labels.append(c if seen[c] == 1 else f"{c}#{seen[c]}")
    rows = [tuple(r[i] for i in idxs) for r in rel.rows]
    return Relation(rel.name, labels, rows)


def _apply_output(rel: Relation, output, counter: OpCounter | None = None) -> Relation:
    if output.kind == "enumeration":
        return project_columns(rel, output.columns)
    return group_aggregate(rel, output.group_by, output.aggregates, counter)


def evaluate_baseline(cq, db: Database, counter: OpCounter | None = None) -> Relation:
    """Filters, then left-deep natural joins in FROM order, then output."""
    rel = None
    for atom in cq.atoms:
        r = atom_relation(cq, atom, db, counter)
        rel = r if rel is None else natural_join(rel, r, counter)
    return _apply_output(rel, cq.output, counter)


def _check_connectedness(tree, cq):
    containing = defaultdict(set)
    for i, atom in enumerate(cq.atoms):
        for cid in set(atom.renaming.values()):
            containing[cid].add(i)
    adj = defaultdict(set)
    for node, parent in tree.parent.items():
        if parent is not None:
            adj[node].add(parent)
            adj[parent].add(node)
    for cid, nodes in containing.items():
        if len(nodes) <= 1:
            continue
        start = next(iter(nodes))
        stack, seen = [start], {start}
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v in nodes and v not in seen:
                    seen.add(v)
                    stack.append(v)
        if seen != nodes:
            raise InvalidJoinTree(
                f"attribute class {cid} not connected in join tree"
            )


def _postorder(tree):
    out = []

    def rec(u):
        for c in tree.children_of(u):
            rec(c)
        out.append(u)

    rec(tree.root)
    return out


def semi_join_reduce(tree, cq, db: Database, counter: OpCounter | None = None):
    """Preparatory filters plus the two semi-join passes.

    Returns per-node relations after the full reduction (every surviving
    tuple extends to at least one answer of the join query).
    """
    _check_connectedness(tree, cq)
    rels = {i: atom_relation(cq, atom, db, counter) for i, atom in enumerate(cq.atoms)}
    order = _postorder(tree)
    for u in order:  # bottom-up semi-joins
        for c in tree.children_of(u):
            rels[u] = semi_join(rels[u], rels[c], counter)
    for u in reversed(order):  # top-down semi-joins
        for c in tree.children_of(u):
            rels[c] = semi_join(rels[c], rels[u], counter)
    return rels


def evaluate_yannakakis(tree, cq, db: Database, counter: OpCounter | None = None) -> Relation:
    """Join-tree based evaluation.

    For guarded set-safe aggregate queries (the tree's zero-materialization
    flag), only the preparatory filters and the bottom-up semi-join pass are
    run, and the aggregate is applied to the root relation.  Otherwise all
    three passes run, projecting away attributes that are needed neither by
    the output nor further up the tree.
    """
    _check_connectedness(tree, cq)
    rels = {i: atom_relation(cq, atom, db, counter) for i, atom in enumerate(cq.atoms)}
    order = _postorder(tree)
    for u in order:
        for c in tree.children_of(u):
            rels[u] = semi_join(rels[u], rels[c], counter)
    if tree.oma_flag:
        return _apply_output(rels[tree.root], cq.output, counter)
    for u in reversed(order):
        for c in tree.children_of(u):
            rels[c] = semi_join(rels[c], rels[u], counter)
    output_attrs = set(cq.output.needed_classes())
    joined = {}
    for u in order:
        acc = rels[u]
        for c in tree.children_of(u):
            acc = natural_join(acc, joined[c], counter)
        parent = tree.parent[u]
        if parent is None:
            keep = [a for a in acc.schema if a in output_attrs]
        else:
            up = set(rels[parent].schema)
            keep = [a for a in acc.schema if a in output_attrs or a in up]
        if keep != acc.schema:
            acc = project(acc, keep)
        joined[u] = acc
    return _apply_output(joined[tree.root], cq.output, counter)


# ---------------------------------------------------------------------------
# cardinality estimation (stand-in for optimizer estimates)
# ---------------------------------------------------------------------------

@dataclass
class EstimateSet:
    table_rows: list  # exact post-filter row counts, FROM order
    join_rows: list  # per-join estimates for the left-deep join sequence
    total_cost: float


_NDV_SAMPLE_ROWS = 512


def _atom_stats(cq, atom, db: Database):
    """Post-filter row count and per-join-class distinct counts for one atom.

    Scans the base table once instead of materialising the renamed relation;
    only join-class attributes can be shared between atoms, so distinct
    counts are limited to those.  Distinct counts come from a deterministic
    prefix sample so the decision path stays cheap on large tables.
    """
    base = db.table(atom.table)
    renaming = dict(atom.renaming)
    groups = defaultdict(list)  # class id -> base column indexes
    for i, col in enumerate(base.schema):
        groups[renaming.get(col, f"{atom.alias}.{col}")].append(i)
    dup = [ix for ix in groups.values() if len(ix) > 1]
    preds = []
    for p in cq.filters.get(atom.alias, []):
        if p.attribute not in groups:
            raise UnknownAttribute(f"{p.attribute} not in {atom.alias}")
        preds.append((p, groups[p.attribute][0]))
    rows = base.rows
    if dup or preds:
        rows = [
            r for r in rows
            if all(len({r[i] for i in ix}) == 1 for ix in dup)
            and all(p.matches(r[i]) for p, i in preds)
        ]
    sample = rows if len(rows) <= _NDV_SAMPLE_ROWS else rows[:_NDV_SAMPLE_ROWS]
    ndv = {
        cid: len({r[ix[0]] for r in sample})
        for cid in set(renaming.values())
        for ix in (groups[cid],)
    }
    return len(rows), ndv


def estimate_cardinalities(cq, db: Database) -> EstimateSet:
    """Exact post-filter counts plus distinct-value join-size estimates.

    The per-join estimate for A joining B on shared attributes x is
    |A| * |B| / prod_x max(ndv_A(x), ndv_B(x)).
    """
    stats = [_atom_stats(cq, atom, db) for atom in cq.atoms]
    table_rows = [n for n, _ in stats]
    join_rows = []
    est = float(table_rows[0]) if stats else 0.0
    ndv = dict(stats[0][1]) if stats else {}
    for nrows, r_ndv in stats[1:]:
        shared = [a for a in r_ndv if a in ndv]
        denom = 1.0
        for a in shared:
            denom *= max(ndv[a], r_ndv[a], 1)
        est = est * nrows / denom
        join_rows.append(est)
        for a, v in r_ndv.items():
            ndv[a] = min(ndv[a], v) if a in ndv else v
    total = float(sum(join_rows) + sum(table_rows))
    return EstimateSet(table_rows, join_rows, total)


# ---------------------------------------------------------------------------
# table ingestion
# ---------------------------------------------------------------------------

def _infer_column(values):
    def all_parse(cast):
        try:
            for v in values:
                cast(v)
            return True
        except ValueError:
            return False

    if all_parse(int):
        return int
    if all_parse(float):
        return float
    return str


_TYPE_CASTS = {"int64": int, "float64": float, "string": str}


def load_table(path, name=None, schema_file=None) -> Relation:
    """Load a headered CSV; types inferred unless a sidecar schema is given."""
    path = Path(path)
    name = name or path.stem
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        raw = [row for row in reader]
    casts = None
    if schema_file is not None:
        with open(schema_file) as fh:
            spec = json.load(fh)
        casts = [_TYPE_CASTS[spec[col]] for col in header]
    else:
        casts = [_infer_column([row[i] for row in raw]) for i in range(len(header))]
    rows = [tuple(c(v) for c, v in zip(casts, row)) for row in raw]
    return Relation(name, header, rows)


def save_database(db: Database, directory):
    """Write each table as a headered CSV that load_database can read back."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for rel in db.tables.values():
        with open(directory / f"{rel.name}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(rel.schema)
            writer.writerows(rel.rows)


def load_database(directory) -> Database:
    db = Database()
    directory = Path(directory)
    for path in sorted(directory.glob("*.csv")):
        sidecar = path.with_suffix(".schema.json")
        db.add(load_table(path, schema_file=sidecar if sidecar.exists() else None))
    return db


# ---------------------------------------------------------------------------
# DBMS adapter (interface only; no concrete driver ships with the package)
# ---------------------------------------------------------------------------

class DbmsAdapter(ABC):
    """Minimal surface a live database driver would have to implement."""

    @abstractmethod
    def execute(self, statement: str) -> list:
        """Run one SQL statement, returning result rows (possibly empty)."""

    @abstractmethod
    def close(self) -> None:
        """Release the connection."""
