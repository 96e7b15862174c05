"""Dataset ingestion and circuit compilation.

Two local model families keep the audit pipeline self-contained: a naive Bayes
compiler and a Chow-Liu tree compiler.  Both emit decision-rooted circuits
whose two class branches share one variable decomposition, so every structural
property the bounds need holds by construction.  All parameters carry additive
smoothing, keeping every sum weight strictly positive.
"""

from __future__ import annotations

import csv
import io
import statistics
import warnings
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

from .circuit import Circuit, Leaf, Node, Product, Schema, Sum, Variable
from .errors import DatasetError

Structure = Literal["nb", "chowliu"]


@dataclass
class LearnConfig:
    smoothing: float = 1.0
    structure: Structure = "nb"
    numeric_bins: int = 4

    def check(self) -> None:
        if self.smoothing <= 0:
            raise ValueError("smoothing pseudo-count must be > 0")
        if self.numeric_bins < 2:
            raise ValueError("numeric_bins must be >= 2")


@dataclass
class Dataset:
    schema: Schema
    rows: List[Tuple[int, ...]]
    weights: Optional[List[float]] = None

    def check(self) -> None:
        arities = [v.arity for v in self.schema.variables]
        for r, row in enumerate(self.rows):
            if len(row) != len(arities):
                raise DatasetError(f"row {r}: {len(row)} cells for {len(arities)} variables")
            for i, val in enumerate(row):
                if not 0 <= val < arities[i]:
                    raise DatasetError(f"row {r}: value {val} out of range for variable {i}")
        if self.weights is not None and len(self.weights) != len(self.rows):
            raise DatasetError("one weight per row required")
        d = self.schema.decision_index
        seen = {row[d] for row in self.rows}
        if seen != {0, 1}:
            raise DatasetError("need at least one row per decision value")

    def row_weight(self, r: int) -> float:
        return 1.0 if self.weights is None else self.weights[r]

    @property
    def total_weight(self) -> float:
        return float(len(self.rows)) if self.weights is None else sum(self.weights)


def load_dataset(csv_text: str, schema_config: dict) -> Dataset:
    """Build a Dataset from RFC-4180-style CSV text and a schema config.

    Config keys: decision (column name), positive (favorable label),
    sensitive (list of column names), types (name -> "categorical"|"numeric",
    default categorical), bins (equal-frequency bin count for numeric columns,
    default 4).  Numeric columns are discretized at sample quantiles;
    single-valued columns are dropped with a warning; rows with empty cells
    are rejected.
    """
    reader = csv.reader(io.StringIO(csv_text))
    table = [row for row in reader if row]
    if not table:
        raise DatasetError("empty CSV")
    header = [h.strip() for h in table[0]]
    body = table[1:]
    if not body:
        raise DatasetError("CSV has no data rows")
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise DatasetError(f"row {r + 2}: {len(row)} cells, header has {len(header)}")
        if any(cell.strip() == "" for cell in row):
            raise DatasetError(f"row {r + 2}: missing value")

    decision_col = schema_config.get("decision")
    if decision_col not in header:
        raise DatasetError(f"decision column {decision_col!r} not in CSV header")
    positive_label = schema_config.get("positive")
    sensitive_cols = list(schema_config.get("sensitive", []))
    types = dict(schema_config.get("types", {}))
    bins = int(schema_config.get("bins", 4))
    if bins < 2:
        raise DatasetError("bins must be >= 2")
    for name in sensitive_cols + list(types):
        if name not in header:
            raise DatasetError(f"unknown column {name!r} in schema config")
    if types.get(decision_col, "categorical") != "categorical":
        raise DatasetError("decision column must be categorical")

    columns: List[Tuple[str, Tuple[str, ...], List[int]]] = []
    for j, name in enumerate(header):
        raw = [row[j].strip() for row in body]
        if types.get(name, "categorical") == "numeric":
            try:
                nums = [float(tok) for tok in raw]
            except ValueError as exc:
                raise DatasetError(f"non-numeric token in numeric column {name!r}: {exc}")
            edges = sorted(set(statistics.quantiles(nums, n=bins, method="inclusive"))) \
                if len(set(nums)) > 1 else []
            # a value equal to an edge belongs to the lower bin
            codes = [bisect_left(edges, v) for v in nums]
            labels = tuple(f"q{i}" for i in range(len(edges) + 1))
            # quantile ties can leave empty bins; reindex to the used ones
            used = sorted(set(codes))
            remap = {u: i for i, u in enumerate(used)}
            codes = [remap[cd] for cd in codes]
            labels = tuple(labels[u] for u in used)
        else:
            labels_list: List[str] = []
            index: Dict[str, int] = {}
            codes = []
            for tok in raw:
                if tok not in index:
                    index[tok] = len(labels_list)
                    labels_list.append(tok)
                codes.append(index[tok])
            labels = tuple(labels_list)
        if len(labels) < 2:
            if name == decision_col:
                raise DatasetError("decision column has a single value")
            warnings.warn(f"dropping single-valued column {name!r}")
            if name in sensitive_cols:
                sensitive_cols.remove(name)
            continue
        columns.append((name, labels, codes))

    names = [cname for cname, _, _ in columns]
    if decision_col not in names:
        raise DatasetError("decision column was dropped")
    d_idx = names.index(decision_col)
    d_labels = columns[d_idx][1]
    if len(d_labels) != 2:
        raise DatasetError(f"decision column must be binary; levels: {d_labels}")
    if positive_label not in d_labels:
        raise DatasetError(f"positive label {positive_label!r} not among {d_labels}")
    sens = frozenset(names.index(s) for s in sensitive_cols)
    variables = tuple(Variable(cname, len(labels), labels) for cname, labels, _ in columns)
    schema = Schema(variables, d_idx, d_labels.index(positive_label), sens)
    rows = [tuple(columns[i][2][r] for i in range(len(columns))) for r in range(len(body))]
    ds = Dataset(schema, rows)
    ds.check()
    return ds


# -- counting -------------------------------------------------------------------


def _class_weights(ds: Dataset) -> Tuple[float, float]:
    d = ds.schema.decision_index
    out = [0.0, 0.0]
    for r, row in enumerate(ds.rows):
        out[row[d]] += ds.row_weight(r)
    return out[0], out[1]


def _smoothed_priors(ds: Dataset, alpha: float) -> Tuple[float, float]:
    n0, n1 = _class_weights(ds)
    total = n0 + n1 + 2 * alpha
    return (n0 + alpha) / total, (n1 + alpha) / total


# -- naive Bayes -----------------------------------------------------------------


def learn_naive_bayes(ds: Dataset, cfg: LearnConfig) -> Circuit:
    """Class-prior mixture of per-feature value sums; one branch per decision
    value over the same feature list."""
    cfg.check()
    ds.check()
    schema = ds.schema
    alpha = cfg.smoothing
    d = schema.decision_index
    feats = schema.feature_indices()

    counts: Dict[Tuple[int, int, int], float] = {}
    class_w = [0.0, 0.0]
    for r, row in enumerate(ds.rows):
        w = ds.row_weight(r)
        cls = row[d]
        class_w[cls] += w
        for v in feats:
            key = (cls, v, row[v])
            counts[key] = counts.get(key, 0.0) + w

    nodes: List[Node] = []

    def add(node_factory) -> int:
        nid = len(nodes)
        nodes.append(node_factory(nid))
        return nid

    leaf_ids: Dict[Tuple[int, int], int] = {}
    for v in [d] + list(feats):
        for val in range(schema.variables[v].arity):
            leaf_ids[(v, val)] = add(lambda i, v=v, val=val: Leaf(i, v, val))

    branch_ids = []
    for cls in (0, 1):
        children = [leaf_ids[(d, cls)]]
        for v in feats:
            arity = schema.variables[v].arity
            denom = class_w[cls] + alpha * arity
            weights = tuple((counts.get((cls, v, val), 0.0) + alpha) / denom
                            for val in range(arity))
            kids = tuple(leaf_ids[(v, val)] for val in range(arity))
            children.append(add(lambda i, k=kids, w=weights: Sum(i, k, w)))
        branch_ids.append(add(lambda i, ch=tuple(children): Product(i, ch)))

    p0, p1 = _smoothed_priors(ds, alpha)
    root = add(lambda i: Sum(i, (branch_ids[0], branch_ids[1]), (p0, p1)))
    return Circuit(schema, nodes, root)


# -- Chow-Liu tree -----------------------------------------------------------------


def mutual_information(ds: Dataset, a: int, b: int) -> float:
    """Empirical mutual information between two variables, in nats."""
    import math

    joint: Dict[Tuple[int, int], float] = {}
    ma: Dict[int, float] = {}
    mb: Dict[int, float] = {}
    total = 0.0
    for r, row in enumerate(ds.rows):
        w = ds.row_weight(r)
        total += w
        joint[(row[a], row[b])] = joint.get((row[a], row[b]), 0.0) + w
        ma[row[a]] = ma.get(row[a], 0.0) + w
        mb[row[b]] = mb.get(row[b], 0.0) + w
    out = 0.0
    for (va, vb), w in joint.items():
        p = w / total
        out += p * math.log(p / ((ma[va] / total) * (mb[vb] / total)))
    return max(out, 0.0)


def chow_liu_edges(ds: Dataset) -> List[Tuple[int, int]]:
    """Maximum-spanning-tree edges over the features by mutual information.

    Ties break toward the lowest (i, j) variable-index pair, so the tree is a
    pure function of the empirical distribution.
    """
    feats = ds.schema.feature_indices()
    scored = []
    for ai in range(len(feats)):
        for bi in range(ai + 1, len(feats)):
            i, j = feats[ai], feats[bi]
            scored.append((-mutual_information(ds, i, j), i, j))
    scored.sort()
    parent = {v: v for v in feats}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    edges = []
    for _, i, j in scored:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            edges.append((i, j))
        if len(edges) == len(feats) - 1:
            break
    return edges


def learn_chow_liu(ds: Dataset, cfg: LearnConfig) -> Circuit:
    """One tree over the features, shared by both decision branches; per-class
    parameters estimated on the class-filtered rows."""
    cfg.check()
    ds.check()
    schema = ds.schema
    feats = schema.feature_indices()
    if len(feats) < 2:
        raise DatasetError("Chow-Liu needs at least 2 non-decision variables")
    alpha = cfg.smoothing
    d = schema.decision_index

    edges = chow_liu_edges(ds)
    adj: Dict[int, List[int]] = {v: [] for v in feats}
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    root_var = feats[0]
    parent_of: Dict[int, Optional[int]] = {root_var: None}
    order = [root_var]
    queue = [root_var]
    while queue:
        v = queue.pop(0)
        for w in sorted(adj[v]):
            if w not in parent_of:
                parent_of[w] = v
                order.append(w)
                queue.append(w)

    # class-conditional counts
    class_w = [0.0, 0.0]
    node_counts: Dict[Tuple[int, int, int], float] = {}          # (cls, var, val)
    edge_counts: Dict[Tuple[int, int, int, int, int], float] = {}  # (cls, child, cval, parent, pval)
    for r, row in enumerate(ds.rows):
        w = ds.row_weight(r)
        cls = row[d]
        class_w[cls] += w
        for v in feats:
            node_counts[(cls, v, row[v])] = node_counts.get((cls, v, row[v]), 0.0) + w
        for v in order[1:]:
            p = parent_of[v]
            key = (cls, v, row[v], p, row[p])
            edge_counts[key] = edge_counts.get(key, 0.0) + w

    def root_weight(cls: int, val: int) -> float:
        arity = schema.variables[root_var].arity
        return (node_counts.get((cls, root_var, val), 0.0) + alpha) / (class_w[cls] + alpha * arity)

    def edge_weight(cls: int, child: int, cval: int, pval: int) -> float:
        p = parent_of[child]
        arity = schema.variables[child].arity
        denom = node_counts.get((cls, p, pval), 0.0) + alpha * arity
        return (edge_counts.get((cls, child, cval, p, pval), 0.0) + alpha) / denom

    children_of: Dict[int, List[int]] = {v: [] for v in feats}
    for v in order[1:]:
        children_of[parent_of[v]].append(v)

    nodes: List[Node] = []

    def add(node) -> int:
        nodes.append(node)
        return node.id

    leaf_ids: Dict[Tuple[int, int], int] = {}
    for v in [d] + list(feats):
        for val in range(schema.variables[v].arity):
            nid = len(nodes)
            leaf_ids[(v, val)] = add(Leaf(nid, v, val))

    def build_subtree_sum(cls: int, var: int, weight_fn) -> int:
        """Sum over var's values of (leaf x child subtrees) products."""
        kids = []
        for val in range(schema.variables[var].arity):
            parts = [leaf_ids[(var, val)]]
            for w in children_of[var]:
                parts.append(build_child_sum(cls, w, val))
            if len(parts) == 1:
                kids.append(parts[0])
            else:
                nid = len(nodes)
                kids.append(add(Product(nid, tuple(parts))))
        weights = tuple(weight_fn(val) for val in range(schema.variables[var].arity))
        nid = len(nodes)
        return add(Sum(nid, tuple(kids), weights))

    memo: Dict[Tuple[int, int, int], int] = {}

    def build_child_sum(cls: int, var: int, parent_val: int) -> int:
        key = (cls, var, parent_val)
        if key in memo:
            return memo[key]
        sid = build_subtree_sum(cls, var, lambda val: edge_weight(cls, var, val, parent_val))
        memo[key] = sid
        return sid

    branch_ids = []
    for cls in (0, 1):
        top = build_subtree_sum(cls, root_var, lambda val: root_weight(cls, val))
        nid = len(nodes)
        branch_ids.append(add(Product(nid, (leaf_ids[(d, cls)], top))))

    p0, p1 = _smoothed_priors(ds, alpha)
    nid = len(nodes)
    root = add(Sum(nid, (branch_ids[0], branch_ids[1]), (p0, p1)))
    return Circuit(schema, nodes, root)
