"""Probabilistic circuit core: file format, validation, marginal queries.

A circuit is a rooted DAG of indicator leaves, product nodes, and weighted
sum nodes over a categorical variable catalog (the schema).  One of the
variables is the binary decision variable; a subset of the others is marked
sensitive.  Evaluation with partial evidence is a single bottom-up pass:
leaves of unobserved variables evaluate to 1, so the root value is the
unnormalized marginal of the evidence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import (
    IncompatibleStructure,
    ParseError,
    SchemaError,
    StructureError,
    ZeroEvidence,
)

# Sorted (variable index, value index) pairs; the decision variable never appears.
Assignment = Tuple[Tuple[int, int], ...]

LEAF, PRODUCT, SUM = 0, 1, 2


@dataclass(frozen=True)
class Variable:
    name: str
    arity: int
    labels: Tuple[str, ...]


@dataclass(frozen=True)
class Schema:
    """Variable catalog: names, arities, decision variable, sensitive subset."""

    variables: Tuple[Variable, ...]
    decision_index: int
    positive_value: int
    sensitive_indices: frozenset[int]

    def validate(self) -> None:
        names = set()
        for i, v in enumerate(self.variables):
            if v.arity < 2:
                raise SchemaError(f"variable {v.name} has arity {v.arity} < 2")
            if len(v.labels) != v.arity:
                raise SchemaError(f"variable {v.name}: {len(v.labels)} labels for arity {v.arity}")
            if len(set(v.labels)) != v.arity:
                raise SchemaError(f"variable {v.name} has duplicate value labels")
            if v.name in names:
                raise SchemaError(f"duplicate variable name {v.name}")
            names.add(v.name)
        if not 0 <= self.decision_index < len(self.variables):
            raise SchemaError("decision variable index out of range")
        if self.variables[self.decision_index].arity != 2:
            raise SchemaError("decision variable must be binary")
        if not 0 <= self.positive_value < 2:
            raise SchemaError("positive decision value out of range")
        if self.decision_index in self.sensitive_indices:
            raise SchemaError("decision variable cannot be sensitive")
        for s in self.sensitive_indices:
            if not 0 <= s < len(self.variables):
                raise SchemaError(f"sensitive index {s} out of range")

    @property
    def negative_value(self) -> int:
        return 1 - self.positive_value

    def feature_indices(self) -> Tuple[int, ...]:
        """All variable indices except the decision variable, in schema order."""
        return tuple(i for i in range(len(self.variables)) if i != self.decision_index)

    def var_by_name(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise SchemaError(f"unknown variable {name}")


@dataclass(frozen=True)
class Leaf:
    id: int
    var: int
    value: int


@dataclass(frozen=True)
class Product:
    id: int
    children: Tuple[int, ...]


@dataclass(frozen=True)
class Sum:
    id: int
    children: Tuple[int, ...]
    weights: Tuple[float, ...]


Node = Union[Leaf, Product, Sum]


@dataclass
class StructureReport:
    smooth: bool
    decomposable: bool
    deterministic: bool
    decision_rooted: bool
    compatible: bool
    # Same-scope product pairs across the two decision branches -> child id pairs.
    branch_pairing: Optional[Dict[Tuple[int, int], Tuple[Tuple[int, int], ...]]] = None
    problems: List[str] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return (self.smooth and self.decomposable and self.deterministic
                and self.decision_rooted and self.compatible)


@dataclass(frozen=True)
class DecisionBranches:
    """Top decomposition of a decision-rooted circuit.

    children[v] are the non-decision children of the root product for decision
    value v; theta[v] is the root mixture weight on that product.
    """

    children: Tuple[Tuple[int, ...], ...]
    theta: Tuple[float, ...]

    def positive(self, schema: Schema) -> Tuple[Tuple[int, ...], float]:
        v = schema.positive_value
        return self.children[v], self.theta[v]

    def negative(self, schema: Schema) -> Tuple[Tuple[int, ...], float]:
        v = schema.negative_value
        return self.children[v], self.theta[v]


class Circuit:
    """Immutable circuit; all query methods are read-only."""

    def __init__(self, schema: Schema, nodes: Sequence[Node], root_id: int):
        schema.validate()
        self.schema = schema
        self.nodes: Tuple[Node, ...] = tuple(nodes)
        self.root_id = root_id
        self._check_wellformed()
        self.scopes: Tuple[frozenset, ...] = self._compute_scopes()
        # Flat arrays for the evaluation loop.
        self._kind = [LEAF if isinstance(n, Leaf) else PRODUCT if isinstance(n, Product) else SUM
                      for n in self.nodes]
        self._partition_value: Optional[float] = None
        self._report: Optional[StructureReport] = None
        self._branches: Optional[DecisionBranches] = None

    # -- construction checks ------------------------------------------------

    def _check_wellformed(self) -> None:
        n = len(self.nodes)
        if n == 0:
            raise StructureError("circuit has no nodes")
        if not 0 <= self.root_id < n:
            raise StructureError(f"root id {self.root_id} out of range")
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise StructureError(f"node ids must be dense; found {node.id} at position {i}")
            if isinstance(node, Leaf):
                if not 0 <= node.var < len(self.schema.variables):
                    raise StructureError(f"leaf {i}: unknown variable {node.var}")
                if not 0 <= node.value < self.schema.variables[node.var].arity:
                    raise StructureError(f"leaf {i}: value {node.value} out of range")
            else:
                if not node.children:
                    raise StructureError(f"inner node {i} has no children")
                for c in node.children:
                    if not 0 <= c < i:
                        raise StructureError(f"node {i}: child {c} does not precede it")
                if isinstance(node, Sum):
                    if len(node.weights) != len(node.children):
                        raise StructureError(f"sum {i}: weight/child count mismatch")
                    if any(w <= 0 for w in node.weights):
                        raise StructureError(f"sum {i}: weights must be > 0")

    def _compute_scopes(self) -> Tuple[frozenset, ...]:
        scopes: List[frozenset] = []
        for node in self.nodes:
            if isinstance(node, Leaf):
                scopes.append(frozenset((node.var,)))
            else:
                s: frozenset = frozenset()
                for c in node.children:
                    s = s | scopes[c]
                scopes.append(s)
        return tuple(scopes)

    # -- evaluation -----------------------------------------------------------

    def value(self, observed: Mapping[int, int], node_id: Optional[int] = None) -> float:
        """Unnormalized bottom-up evaluation under the observed variable map."""
        vals = self.values(observed)
        return vals[self.root_id if node_id is None else node_id]

    def values(self, observed: Mapping[int, int]) -> List[float]:
        """One feedforward pass; returns the value of every node."""
        out = [0.0] * len(self.nodes)
        kind = self._kind
        for i, node in enumerate(self.nodes):
            k = kind[i]
            if k == LEAF:
                ov = observed.get(node.var)
                out[i] = 1.0 if (ov is None or ov == node.value) else 0.0
            elif k == PRODUCT:
                v = 1.0
                for c in node.children:
                    v *= out[c]
                    if v == 0.0:
                        break
                out[i] = v
            else:
                v = 0.0
                ws = node.weights
                cs = node.children
                for j in range(len(cs)):
                    v += ws[j] * out[cs[j]]
                out[i] = v
        return out

    @property
    def partition_value(self) -> float:
        """Root value with no evidence; divides every marginal (weights need not
        be locally normalized)."""
        if self._partition_value is None:
            z = self.value({})
            if z <= 0.0:
                raise StructureError(f"circuit normalizes to {z}; expected > 0")
            self._partition_value = z
        return self._partition_value

    # -- cached structure ----------------------------------------------------

    @property
    def report(self) -> StructureReport:
        if self._report is None:
            self._report = validate_structure(self)
        return self._report

    def decision_branches(self) -> DecisionBranches:
        if self._branches is None:
            self._branches = _extract_branches(self)
        return self._branches

    @property
    def num_features(self) -> int:
        return len(self.schema.variables) - 1

    def __repr__(self) -> str:
        return (f"Circuit({len(self.nodes)} nodes, root {self.root_id}, "
                f"{len(self.schema.variables)} vars)")


# -- assignments --------------------------------------------------------------

def as_assignment(schema: Schema, e: Union[Mapping[int, int], Iterable[Tuple[int, int]]]) -> Assignment:
    """Canonicalize evidence to a sorted (var, value) tuple and validate it."""
    pairs = sorted(e.items()) if isinstance(e, Mapping) else sorted(e)
    seen = set()
    for var, val in pairs:
        if var == schema.decision_index:
            raise SchemaError("assignments must not mention the decision variable")
        if not 0 <= var < len(schema.variables):
            raise SchemaError(f"variable index {var} out of range")
        if var in seen:
            raise SchemaError(f"variable {var} assigned twice")
        seen.add(var)
        if not 0 <= val < schema.variables[var].arity:
            raise SchemaError(f"value {val} out of range for variable {var}")
    return tuple(pairs)


def _observed(schema: Schema, e: Assignment, decision: Optional[int]) -> Dict[int, int]:
    obs = dict(e)
    if decision is not None:
        if not 0 <= decision < 2:
            raise SchemaError(f"decision value {decision} out of range")
        obs[schema.decision_index] = decision
    return obs


# -- queries -------------------------------------------------------------------

def marginal(c: Circuit, e: Union[Mapping[int, int], Assignment], decision: Optional[int] = None) -> float:
    """P(e [, D=decision]) in [0, 1]."""
    a = as_assignment(c.schema, e)
    return c.value(_observed(c.schema, a, decision)) / c.partition_value


def conditional_decision(c: Circuit, e: Union[Mapping[int, int], Assignment]) -> float:
    """P(d | e) for the favorable decision value d.

    Raises ZeroEvidence when P(e) = 0.
    """
    a = as_assignment(c.schema, e)
    pe = c.value(_observed(c.schema, a, None))
    if pe <= 0.0:
        raise ZeroEvidence(f"P(e) = 0 for e = {a}")
    pde = c.value(_observed(c.schema, a, c.schema.positive_value))
    return pde / pe


# -- structural validation ------------------------------------------------------

def validate_structure(c: Circuit) -> StructureReport:
    """Check smoothness, decomposability, determinism, decision-rootedness and
    branch compatibility.  Never raises; failures are reported.

    Determinism is certified by a per-variable support-projection witness: two
    sum children are disjoint when some variable's possible value sets do not
    intersect.  The witness is sound and exact for value-branching sums (the
    only kind the compilers emit); exotic circuits may be reported
    non-deterministic conservatively.
    """
    problems: List[str] = []
    smooth = True
    decomposable = True
    for node in c.nodes:
        if isinstance(node, Sum):
            first = c.scopes[node.children[0]]
            if any(c.scopes[ch] != first for ch in node.children[1:]):
                smooth = False
                problems.append(f"sum {node.id} mixes child scopes")
        elif isinstance(node, Product):
            seen: frozenset = frozenset()
            for ch in node.children:
                if seen & c.scopes[ch]:
                    decomposable = False
                    problems.append(f"product {node.id} has overlapping child scopes")
                    break
                seen = seen | c.scopes[ch]

    supports = _support_projections(c)
    deterministic = True
    for node in c.nodes:
        if isinstance(node, Sum):
            chs = node.children
            for i in range(len(chs)):
                for j in range(i + 1, len(chs)):
                    if not _witnessed_disjoint(supports[chs[i]], supports[chs[j]]):
                        deterministic = False
                        problems.append(f"sum {node.id}: children {chs[i]},{chs[j]} "
                                        "not witnessed support-disjoint")
                        break
                if not deterministic:
                    break

    decision_rooted = True
    branches: Optional[DecisionBranches] = None
    try:
        branches = _extract_branches(c)
    except StructureError as exc:
        decision_rooted = False
        problems.append(str(exc))

    compatible = False
    pairing: Optional[Dict[Tuple[int, int], Tuple[Tuple[int, int], ...]]] = None
    if decision_rooted and smooth and decomposable and branches is not None:
        try:
            pairing = _branch_pairing(c, branches)
            compatible = True
        except IncompatibleStructure as exc:
            problems.append(str(exc))

    return StructureReport(smooth, decomposable, deterministic, decision_rooted,
                           compatible, pairing, problems)


def _support_projections(c: Circuit) -> List[Dict[int, frozenset]]:
    """Per node: variable -> set of values attainable on its support."""
    out: List[Dict[int, frozenset]] = []
    for node in c.nodes:
        if isinstance(node, Leaf):
            out.append({node.var: frozenset((node.value,))})
        elif isinstance(node, Product):
            merged: Dict[int, frozenset] = {}
            for ch in node.children:
                merged.update(out[ch])
            out.append(merged)
        else:
            union: Dict[int, frozenset] = {}
            for ch in node.children:
                for var, vals in out[ch].items():
                    union[var] = union.get(var, frozenset()) | vals
            out.append(union)
    return out


def _witnessed_disjoint(a: Dict[int, frozenset], b: Dict[int, frozenset]) -> bool:
    for var, vals in a.items():
        if var in b and not (vals & b[var]):
            return True
    return False


def _extract_branches(c: Circuit) -> DecisionBranches:
    """Root sum over decision values; each child a product holding exactly one
    decision indicator."""
    root = c.nodes[c.root_id]
    d = c.schema.decision_index
    arity = c.schema.variables[d].arity
    if not isinstance(root, Sum):
        raise StructureError("not decision-rooted: root is not a sum")
    by_value: Dict[int, Tuple[Tuple[int, ...], float]] = {}
    for ch, w in zip(root.children, root.weights):
        prod = c.nodes[ch]
        if not isinstance(prod, Product):
            raise StructureError(f"not decision-rooted: root child {ch} is not a product")
        dleaves = [c.nodes[g] for g in prod.children
                   if isinstance(c.nodes[g], Leaf) and c.nodes[g].var == d]
        if len(dleaves) != 1:
            raise StructureError(f"not decision-rooted: root child {ch} holds "
                                 f"{len(dleaves)} decision indicators")
        val = dleaves[0].value
        if val in by_value:
            raise StructureError(f"not decision-rooted: decision value {val} appears twice")
        rest = tuple(g for g in prod.children if c.nodes[g].id != dleaves[0].id)
        by_value[val] = (rest, w)
    if set(by_value) != set(range(arity)):
        raise StructureError("not decision-rooted: root does not cover every decision value")
    children = tuple(by_value[v][0] for v in range(arity))
    theta = tuple(by_value[v][1] for v in range(arity))
    return DecisionBranches(children, theta)


def _branch_pairing(c: Circuit, branches: DecisionBranches) -> Dict[Tuple[int, int], Tuple[Tuple[int, int], ...]]:
    """Recursively pair the two branches' product decompositions by scope.

    Also verifies the global compatibility condition: every same-scope product
    pair across the branches decomposes its scope identically.
    """
    pairing: Dict[Tuple[int, int], Tuple[Tuple[int, int], ...]] = {}
    pos, _ = branches.positive(c.schema)
    neg, _ = branches.negative(c.schema)
    seen = set()

    def pair_lists(ns: Sequence[int], ms: Sequence[int], where: str) -> Tuple[Tuple[int, int], ...]:
        by_scope = {c.scopes[m]: m for m in ms}
        if len(by_scope) != len(ms):
            raise IncompatibleStructure(f"{where}: duplicate child scopes")
        pairs = []
        for n in sorted(ns, key=lambda i: sorted(c.scopes[i])):
            sc = c.scopes[n]
            if sc not in by_scope:
                raise IncompatibleStructure(f"{where}: no partner with scope {sorted(sc)}")
            pairs.append((n, by_scope[sc]))
        return tuple(pairs)

    def walk(n: int, m: int) -> None:
        if (n, m) in seen:
            return
        seen.add((n, m))
        if c.scopes[n] != c.scopes[m]:
            raise IncompatibleStructure(f"nodes {n},{m} have different scopes")
        a, b = c.nodes[n], c.nodes[m]
        if isinstance(a, Leaf) and isinstance(b, Leaf):
            return
        if isinstance(a, Product) and isinstance(b, Product):
            pairs = pair_lists(a.children, b.children, f"products {n},{m}")
            pairing[(n, m)] = pairs
            for x, y in pairs:
                walk(x, y)
            return
        if isinstance(a, Sum) and isinstance(b, Sum):
            for x in a.children:
                for y in b.children:
                    walk(x, y)
            return
        raise IncompatibleStructure(f"nodes {n},{m} have mismatched kinds")

    top = pair_lists(pos, neg, "decision branches")
    pairing[(-1, -1)] = top
    for x, y in top:
        walk(x, y)

    # Global condition: any same-scope product pair decomposes identically.
    prods_pos = _branch_nodes(c, pos)
    prods_neg = _branch_nodes(c, neg)
    for n in prods_pos:
        if not isinstance(c.nodes[n], Product):
            continue
        for m in prods_neg:
            if not isinstance(c.nodes[m], Product) or c.scopes[n] != c.scopes[m]:
                continue
            parts_n = sorted(c.scopes[ch] for ch in c.nodes[n].children)
            parts_m = sorted(c.scopes[ch] for ch in c.nodes[m].children)
            if parts_n != parts_m:
                raise IncompatibleStructure(
                    f"products {n},{m} share scope but decompose differently")
    return pairing


def _branch_nodes(c: Circuit, roots: Sequence[int]) -> List[int]:
    """All node ids reachable from the given branch roots."""
    seen: set = set()
    stack = list(roots)
    while stack:
        i = stack.pop()
        if i in seen:
            continue
        seen.add(i)
        node = c.nodes[i]
        if not isinstance(node, Leaf):
            stack.extend(node.children)
    return sorted(seen)


# -- file format -----------------------------------------------------------------

def parse_circuit(text: str) -> Circuit:
    """Parse the line-oriented circuit format (see write_circuit for the grammar)."""
    variables: Dict[int, Variable] = {}
    decision: Optional[Tuple[int, str]] = None
    sensitive: List[int] = []
    nodes: Dict[int, Node] = {}
    root_id: Optional[int] = None
    header_seen = False

    def fail(msg: str, ln: int):
        raise ParseError(msg, line=ln)

    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if not header_seen:
            if toks != ["pc", "v1"]:
                fail("missing header", ln)
            header_seen = True
            continue
        tag = toks[0]
        try:
            if tag == "var":
                idx, name, arity = int(toks[1]), toks[2], int(toks[3])
                labels = tuple(toks[4:])
                if idx in variables:
                    fail(f"duplicate variable index {idx}", ln)
                if len(labels) != arity:
                    fail(f"variable {name}: expected {arity} labels", ln)
                variables[idx] = Variable(name, arity, labels)
            elif tag == "decision":
                decision = (int(toks[1]), toks[2])
            elif tag == "sensitive":
                sensitive = [int(t) for t in toks[1:]]
            elif tag == "L":
                nid, var, val = int(toks[1]), int(toks[2]), int(toks[3])
                if nid in nodes:
                    fail(f"duplicate node id {nid}", ln)
                nodes[nid] = Leaf(nid, var, val)
            elif tag == "P":
                nid, k = int(toks[1]), int(toks[2])
                children = tuple(int(t) for t in toks[3:])
                if len(children) != k:
                    fail(f"product {nid}: expected {k} children", ln)
                if nid in nodes:
                    fail(f"duplicate node id {nid}", ln)
                for ch in children:
                    if ch not in nodes:
                        fail(f"product {nid}: unknown child {ch}", ln)
                nodes[nid] = Product(nid, children)
            elif tag == "S":
                nid, k = int(toks[1]), int(toks[2])
                rest = toks[3:]
                if len(rest) != 2 * k:
                    fail(f"sum {nid}: expected {k} (child, weight) pairs", ln)
                children = tuple(int(rest[2 * i]) for i in range(k))
                weights = tuple(float(rest[2 * i + 1]) for i in range(k))
                if nid in nodes:
                    fail(f"duplicate node id {nid}", ln)
                for ch in children:
                    if ch not in nodes:
                        fail(f"sum {nid}: unknown child {ch}", ln)
                for w in weights:
                    if not w > 0.0:
                        fail(f"sum {nid}: weight {w} is not > 0", ln)
                nodes[nid] = Sum(nid, children, weights)
            elif tag == "root":
                root_id = int(toks[1])
            else:
                fail(f"unknown directive {tag!r}", ln)
        except (ValueError, IndexError):
            fail(f"malformed {tag!r} line", ln)

    if not header_seen:
        raise ParseError("missing header")
    if root_id is None:
        raise ParseError("missing root")
    if not variables:
        raise ParseError("no variables declared")
    if decision is None:
        raise ParseError("missing decision declaration")
    n_vars = len(variables)
    if set(variables) != set(range(n_vars)):
        raise ParseError("variable indices must be dense from 0")
    var_list = tuple(variables[i] for i in range(n_vars))
    d_idx, d_label = decision
    if d_idx not in variables:
        raise ParseError(f"decision variable {d_idx} not declared")
    if d_label not in variables[d_idx].labels:
        raise ParseError(f"decision value label {d_label!r} not among "
                         f"{variables[d_idx].labels}")
    pos = variables[d_idx].labels.index(d_label)
    schema = Schema(var_list, d_idx, pos, frozenset(sensitive))
    if set(nodes) != set(range(len(nodes))):
        raise ParseError("node ids must be dense from 0")
    if root_id not in nodes:
        raise ParseError(f"root {root_id} is not a node")
    node_list = [nodes[i] for i in range(len(nodes))]
    try:
        return Circuit(schema, node_list, root_id)
    except (SchemaError, StructureError) as exc:
        raise ParseError(str(exc)) from exc


def write_circuit(c: Circuit) -> str:
    """Serialize to the circuit file format.

    Weights use repr(), which round-trips doubles exactly, so a re-parsed
    circuit answers every query identically.
    """
    out: List[str] = ["pc v1"]
    for i, v in enumerate(c.schema.variables):
        out.append(f"var {i} {v.name} {v.arity} " + " ".join(v.labels))
    d = c.schema.decision_index
    out.append(f"decision {d} {c.schema.variables[d].labels[c.schema.positive_value]}")
    if c.schema.sensitive_indices:
        out.append("sensitive " + " ".join(str(s) for s in sorted(c.schema.sensitive_indices)))
    for node in c.nodes:
        if isinstance(node, Leaf):
            out.append(f"L {node.id} {node.var} {node.value}")
        elif isinstance(node, Product):
            out.append(f"P {node.id} {len(node.children)} "
                       + " ".join(str(ch) for ch in node.children))
        else:
            parts = " ".join(f"{ch} {w!r}" for ch, w in zip(node.children, node.weights))
            out.append(f"S {node.id} {len(node.children)} {parts}")
    out.append(f"root {c.root_id}")
    return "\n".join(out) + "\n"
