"""Independent oracles for the test suite.

Everything here recomputes quantities from first principles: the joint is an
exhaustive enumeration of complete states, scores come from subset sums of
that joint, extremes and pattern sets from explicit loops, and the divergence
from a grid search.  None of it reuses the library's query, table, or bound
code paths.
"""

from __future__ import annotations

import itertools
import math
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from pcfa.circuit import Circuit, Leaf, Product, Schema, Sum, Variable


class JointOracle:
    """Exhaustive joint over (decision value, feature states)."""

    def __init__(self, c: Circuit):
        self.circuit = c
        self.schema = c.schema
        self.feats = list(c.schema.feature_indices())
        self.arities = [c.schema.variables[v].arity for v in self.feats]
        self.sens = sorted(c.schema.sensitive_indices)
        n_states = 1
        for a in self.arities:
            n_states *= a
        idx = np.arange(n_states)
        digits = {}
        stride = n_states
        for v, a in zip(self.feats, self.arities):
            stride //= a
            digits[v] = (idx // stride) % a

        slabs = []
        for dval in (0, 1):
            vals: List[np.ndarray] = []
            for node in c.nodes:
                if isinstance(node, Leaf):
                    if node.var == c.schema.decision_index:
                        vals.append(np.full(n_states, 1.0 if node.value == dval else 0.0))
                    else:
                        vals.append((digits[node.var] == node.value).astype(float))
                elif isinstance(node, Product):
                    acc = vals[node.children[0]].copy()
                    for ch in node.children[1:]:
                        acc = acc * vals[ch]
                    vals.append(acc)
                else:
                    acc = node.weights[0] * vals[node.children[0]]
                    for ch, w in zip(node.children[1:], node.weights[1:]):
                        acc = acc + w * vals[ch]
                    vals.append(acc)
            slabs.append(vals[c.root_id].reshape(self.arities))
        joint = np.stack(slabs)
        self.joint = joint / joint.sum()
        self.pos = c.schema.positive_value
        self._axis = {v: i for i, v in enumerate(self.feats)}
        self._build_flat_tables()

    def _build_flat_tables(self) -> None:
        """Every marginal of the joint, addressable by a mixed-radix code with
        an extra 'unassigned' digit per feature.  Filled one variable subset at
        a time from numpy axis reductions of the enumerated joint."""
        dims = [a + 1 for a in self.arities]
        psize = 1
        for d in dims:
            psize *= d
        stride = {}
        s = psize
        for v, d in zip(self.feats, dims):
            s //= d
            stride[v] = s
        self.offsets = {v: [(val - a) * stride[v] for val in range(a)]
                        for v, a in zip(self.feats, self.arities)}
        self.empty_index = sum(a * stride[v] for v, a in zip(self.feats, self.arities))
        fd = np.zeros(psize)
        fn = np.zeros(psize)
        jd_full = self.joint[self.pos]
        jn_full = self.joint[1 - self.pos]
        n = len(self.feats)
        for r in range(n + 1):
            for subset in itertools.combinations(range(n), r):
                keep = set(subset)
                drop = tuple(i for i in range(n) if i not in keep)
                jd = jd_full.sum(axis=drop) if drop else jd_full
                jn = jn_full.sum(axis=drop) if drop else jn_full
                base = self.empty_index
                idxs = np.zeros(1, dtype=np.int64)
                for i in subset:
                    v = self.feats[i]
                    a = self.arities[i]
                    col = (np.arange(a) - a) * stride[v]
                    idxs = (idxs[:, None] + col[None, :]).reshape(-1)
                fd[base + idxs] = jd.reshape(-1)
                fn[base + idxs] = jn.reshape(-1)
        self.fd: List[float] = fd.tolist()
        self.fn: List[float] = fn.tolist()

    # -- marginals -----------------------------------------------------------

    def index_of(self, assignment: Iterable[Tuple[int, int]]) -> int:
        idx = self.empty_index
        off = self.offsets
        for var, val in assignment:
            idx += off[var][val]
        return idx

    def masses(self, assignment: Iterable[Tuple[int, int]]) -> Tuple[float, float]:
        """(P(d, e), P(e)): flat reads of the enumerated marginal tables."""
        idx = self.index_of(assignment)
        d = self.fd[idx]
        return d, d + self.fn[idx]

    def prob(self, assignment, decision: Optional[int] = None) -> float:
        d, tot = self.masses(assignment)
        if decision is None:
            return tot
        return d if decision == self.pos else tot - d

    def cond(self, assignment) -> float:
        d, tot = self.masses(assignment)
        if tot <= 0.0:
            raise ZeroDivisionError("zero-mass evidence")
        return d / tot

    def delta(self, x, y) -> float:
        if not x:
            return 0.0
        return abs(self.cond(tuple(x) + tuple(y)) - self.cond(y))

    # -- pattern enumeration ---------------------------------------------------

    def all_scored(self) -> List[Tuple[Tuple, Tuple, float, float]]:
        """Every (x, y, delta, probability) with nonempty x and positive mass.

        Each assignment is recorded exactly once, at the step that creates it.
        """
        out: List[Tuple[Tuple, Tuple, float, float]] = []
        fd, fn = self.fd, self.fn
        sens = set(self.sens)
        feats = self.feats
        offsets = self.offsets
        arities = self.arities

        def record(x: Tuple, y: Tuple, idx_xy: int, idx_y: int):
            d_xy = fd[idx_xy]
            p_xy = d_xy + fn[idx_xy]
            if p_xy <= 0.0:
                return
            d_y = fd[idx_y]
            p_y = d_y + fn[idx_y]
            delta = abs(d_xy / p_xy - d_y / p_y)
            out.append((tuple(sorted(x)), tuple(sorted(y)), delta, p_xy))

        def rec(pos: int, x: Tuple, y: Tuple, idx_xy: int, idx_y: int):
            if pos == len(feats):
                return
            var = feats[pos]
            offs = offsets[var]
            for val in range(arities[pos]):
                o = offs[val]
                pair = ((var, val),)
                ixy = idx_xy + o
                if var in sens:
                    record(x + pair, y, ixy, idx_y)
                    rec(pos + 1, x + pair, y, ixy, idx_y)
                iy = idx_y + o
                if x:
                    record(x, y + pair, ixy, iy)
                rec(pos + 1, x, y + pair, ixy, iy)
            rec(pos + 1, x, y, idx_xy, idx_y)

        e = self.empty_index
        rec(0, (), (), e, e)
        return out

    def patterns_at(self, delta: float) -> Dict[Tuple[Tuple, Tuple], Tuple[float, float]]:
        return {(x, y): (d, p) for x, y, d, p in self.all_scored() if d > delta}

    # -- extremes ---------------------------------------------------------------

    def extreme_conditional(self, evidence, excluded: Iterable[int],
                            direction: str) -> float:
        """Extreme of P(d | evidence, u) over complete u of the optimizable
        variables; excluded ones marginalized (their digit stays unassigned)."""
        e = tuple(sorted(evidence))
        exc = set(excluded)
        evars = {v for v, _ in e}
        opt = [v for v in self.feats if v not in evars and v not in exc]
        base = self.index_of(e)
        fd, fn = self.fd, self.fn
        best = None
        for offs in itertools.product(*(self.offsets[v] for v in opt)):
            idx = base + sum(offs)
            d = fd[idx]
            tot = d + fn[idx]
            if tot <= 0.0:
                continue
            r = d / tot
            if best is None or (r > best if direction == "max" else r < best):
                best = r
        return 0.0 if best is None else best

    def partial_vs_complete_extrema(self, evidence
                                    ) -> Tuple[float, float, float, float]:
        """(partial max, complete max, partial min, complete min) of
        P(d | evidence, u), with u ranging over all partial assignments to the
        free variables versus complete ones only."""
        e = tuple(sorted(evidence))
        evars = {v for v, _ in e}
        free = [v for v in self.feats if v not in evars]
        fd, fn = self.fd, self.fn
        state = {"pmax": None, "pmin": None, "cmax": None, "cmin": None}

        def consider(idx: int, complete: bool):
            d = fd[idx]
            tot = d + fn[idx]
            if tot <= 0.0:
                return
            r = d / tot
            if state["pmax"] is None or r > state["pmax"]:
                state["pmax"] = r
            if state["pmin"] is None or r < state["pmin"]:
                state["pmin"] = r
            if complete:
                if state["cmax"] is None or r > state["cmax"]:
                    state["cmax"] = r
                if state["cmin"] is None or r < state["cmin"]:
                    state["cmin"] = r

        def rec(i: int, idx: int, skipped: bool):
            if i == len(free):
                consider(idx, not skipped)
                return
            offs = self.offsets[free[i]]
            for o in offs:
                rec(i + 1, idx + o, skipped)
            rec(i + 1, idx, True)

        rec(0, self.index_of(e), False)
        z = lambda v: 0.0 if v is None else v
        return z(state["pmax"]), z(state["cmax"]), z(state["pmin"]), z(state["cmin"])

    def argmax_sets(self, evidence) -> Tuple[Set[Tuple], Set[Tuple]]:
        """Complete-u argmax of P(d | e, u) and of P(e, u | d) / P(e, u | dbar),
        as sets of value tuples (ties within 1e-12 of the max)."""
        e = tuple(sorted(evidence))
        evars = {v for v, _ in e}
        free = [v for v in self.feats if v not in evars]
        pd_prior = self.prob((), decision=self.pos)
        pn_prior = 1.0 - pd_prior
        conds: Dict[Tuple, float] = {}
        ratios: Dict[Tuple, float] = {}
        for combo in itertools.product(*(range(self.schema.variables[v].arity) for v in free)):
            a = e + tuple(zip(free, combo))
            d, tot = self.masses(a)
            if tot <= 0.0:
                continue
            conds[combo] = d / tot
            n = tot - d
            lhs = d / pd_prior       # P(e, u | d)
            rhs = n / pn_prior       # P(e, u | dbar)
            ratios[combo] = math.inf if rhs == 0.0 else lhs / rhs
        if not conds:
            return set(), set()
        cmax = max(conds.values())
        rmax = max(ratios.values())
        set_a = {k for k, v in conds.items() if abs(v - cmax) <= 1e-12}
        if rmax is math.inf:
            set_b = {k for k, v in ratios.items() if v is math.inf}
        else:
            set_b = {k for k, v in ratios.items()
                     if v == math.inf or abs(v - rmax) <= 1e-12 * max(1.0, rmax)}
        return set_a, set_b

    def extensions_of(self, x, y, excluded: Iterable[int] = (),
                      limit: Optional[int] = None) -> List[Tuple[Tuple, Tuple]]:
        """Positive-mass extensions of (x, y) avoiding the excluded variables,
        the (x, y) assignment itself included when it has mass."""
        exc = set(excluded)
        assigned = {v for v, _ in x} | {v for v, _ in y}
        free = [v for v in self.feats if v not in assigned and v not in exc]
        out: List[Tuple[Tuple, Tuple]] = []
        fd, fn = self.fd, self.fn

        class Done(Exception):
            pass

        def emit(cx: Tuple, cy: Tuple, idx: int):
            if fd[idx] + fn[idx] > 0.0:
                out.append((tuple(sorted(cx)), tuple(sorted(cy))))
                if limit is not None and len(out) >= limit:
                    raise Done()

        def rec(pos: int, cx: Tuple, cy: Tuple, idx: int):
            if pos == len(free):
                return
            var = free[pos]
            offs = self.offsets[var]
            for val in range(len(offs)):
                pair = ((var, val),)
                i2 = idx + offs[val]
                if var in self.sens:
                    emit(cx + pair, cy, i2)
                    rec(pos + 1, cx + pair, cy, i2)
                emit(cx, cy + pair, i2)
                rec(pos + 1, cx, cy + pair, i2)
            rec(pos + 1, cx, cy, idx)

        base = self.index_of(tuple(x) + tuple(y))
        try:
            emit(tuple(x), tuple(y), base)
            rec(0, tuple(x), tuple(y), base)
        except Done:
            pass
        return out

    def extension_deltas(self, x, y, excluded: Iterable[int] = ()) -> List[float]:
        return [self.delta(cx, cy) for cx, cy in self.extensions_of(x, y, excluded)]

    # -- divergence by grid search -------------------------------------------------

    def divergence_grid(self, x, y, delta: float, steps: int = 1_000_000,
                        ) -> Optional[float]:
        """Minimal repair KL via a dense grid over the favorable-slab scale;
        None when no grid point is feasible."""
        exy = tuple(sorted(tuple(x) + tuple(y)))
        pd_xy, p_xy = self.masses(exy)
        pd_y, p_y = self.masses(y)
        pn_xy = p_xy - pd_xy
        if pd_xy <= 0.0 or pn_xy <= 0.0:
            alphas = np.linspace(0.0, 1.0, steps)  # degenerate slab: t in [0, p_xy]
            t = alphas * p_xy
        else:
            alpha_max = p_xy / pd_xy
            alphas = np.linspace(1e-12, alpha_max * (1 - 1e-12), steps)
            t = alphas * pd_xy
        q_d_xy = t
        gap = np.abs(q_d_xy / p_xy - (q_d_xy + pd_y - pd_xy) / p_y)
        feasible = gap <= delta
        if not feasible.any():
            return None
        with np.errstate(divide="ignore", invalid="ignore"):
            kl = np.zeros_like(t)
            if pd_xy > 0.0:
                kl = kl + pd_xy * np.log(pd_xy / t)
            if pn_xy > 0.0:
                kl = kl + pn_xy * np.log(pn_xy / (p_xy - t))
        kl = np.where(feasible, kl, np.inf)
        return float(np.nanmin(kl))

    def repair_check(self, x, y, delta: float, alpha: float,
                     tol: float = 1e-6) -> None:
        """Assert the reconstructed Q from alpha is a valid repair."""
        exy = tuple(sorted(tuple(x) + tuple(y)))
        pd_xy, p_xy = self.masses(exy)
        pn_xy = p_xy - pd_xy
        beta = (p_xy - alpha * pd_xy) / pn_xy if pn_xy > 0 else 1.0
        exy_vars = {v for v, _ in exy}
        exy_map = dict(exy)
        q = self.joint.copy()
        for combo in itertools.product(*(range(a) for a in self.arities)):
            in_block = all(combo[self._axis[v]] == exy_map[v] for v in exy_vars)
            if in_block:
                q[(self.pos,) + combo] *= alpha
                q[(1 - self.pos,) + combo] *= beta
        assert abs(q.sum() - 1.0) < tol, f"Q sums to {q.sum()}"
        # off-block entries untouched by construction; check the gap under Q
        jd, jn = q[self.pos], q[1 - self.pos]

        def qmass(assignment):
            sel = [slice(None)] * len(self.feats)
            for v, val in assignment:
                sel[self._axis[v]] = val
            return float(jd[tuple(sel)].sum()), float(jd[tuple(sel)].sum() + jn[tuple(sel)].sum())

        qd_xy, qx = qmass(exy)
        qd_y, qy = qmass(tuple(sorted(y)))
        gap = abs(qd_xy / qx - qd_y / qy)
        assert gap <= delta + 1e-9, f"repaired gap {gap} > {delta}"


# -- closed-form model oracles ------------------------------------------------------


def nb_joint(ds, alpha: float) -> Dict[Tuple[int, Tuple[int, ...]], float]:
    """Smoothed naive Bayes joint computed straight from counts."""
    schema = ds.schema
    d = schema.decision_index
    feats = schema.feature_indices()
    class_w = [0.0, 0.0]
    counts: Dict[Tuple[int, int, int], float] = {}
    for r, row in enumerate(ds.rows):
        w = ds.row_weight(r)
        class_w[row[d]] += w
        for v in feats:
            counts[(row[d], v, row[v])] = counts.get((row[d], v, row[v]), 0.0) + w
    total = class_w[0] + class_w[1] + 2 * alpha
    out = {}
    for cls in (0, 1):
        prior = (class_w[cls] + alpha) / total
        for combo in itertools.product(*(range(schema.variables[v].arity) for v in feats)):
            p = prior
            for v, val in zip(feats, combo):
                arity = schema.variables[v].arity
                p *= (counts.get((cls, v, val), 0.0) + alpha) / (class_w[cls] + alpha * arity)
            out[(cls, combo)] = p
    return out


def tree_bn_joint(ds, edges: Sequence[Tuple[int, int]], alpha: float
                  ) -> Dict[Tuple[int, Tuple[int, ...]], float]:
    """Forward evaluation of the class-conditional tree Bayes net."""
    schema = ds.schema
    d = schema.decision_index
    feats = list(schema.feature_indices())
    adj: Dict[int, List[int]] = {v: [] for v in feats}
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    root = feats[0]
    parent: Dict[int, Optional[int]] = {root: None}
    todo = [root]
    order = [root]
    while todo:
        v = todo.pop(0)
        for w in sorted(adj[v]):
            if w not in parent:
                parent[w] = v
                order.append(w)
                todo.append(w)

    class_w = [0.0, 0.0]
    node_counts: Dict[Tuple[int, int, int], float] = {}
    pair_counts: Dict[Tuple[int, int, int, int], float] = {}
    for r, row in enumerate(ds.rows):
        w = ds.row_weight(r)
        cls = row[d]
        class_w[cls] += w
        for v in feats:
            node_counts[(cls, v, row[v])] = node_counts.get((cls, v, row[v]), 0.0) + w
        for v in order[1:]:
            key = (cls, v, row[v], row[parent[v]])
            pair_counts[key] = pair_counts.get(key, 0.0) + w

    total = class_w[0] + class_w[1] + 2 * alpha
    pos_of = {v: i for i, v in enumerate(feats)}
    out = {}
    for cls in (0, 1):
        prior = (class_w[cls] + alpha) / total
        for combo in itertools.product(*(range(schema.variables[v].arity) for v in feats)):
            p = prior
            a0 = schema.variables[root].arity
            p *= (node_counts.get((cls, root, combo[pos_of[root]]), 0.0) + alpha) \
                / (class_w[cls] + alpha * a0)
            for v in order[1:]:
                pa = parent[v]
                av = schema.variables[v].arity
                num = pair_counts.get((cls, v, combo[pos_of[v]], combo[pos_of[pa]]), 0.0)
                den = node_counts.get((cls, pa, combo[pos_of[pa]]), 0.0)
                p *= (num + alpha) / (den + alpha * av)
            out[(cls, combo)] = p
    return out


# -- summary oracles -------------------------------------------------------------


def pareto_oracle(entries: Sequence[Tuple[float, float]]) -> List[int]:
    """Indices surviving the strict rule: for every other entry, better on at
    least one of (probability, delta)."""
    keep = []
    for i, (p, d) in enumerate(entries):
        ok = True
        for j, (p2, d2) in enumerate(entries):
            if i == j:
                continue
            if not (d > d2 or p > p2):
                ok = False
                break
        if ok:
            keep.append(i)
    return keep


def maximal_oracle(schema: Schema, sigma_keys: Set[Tuple], n_features: int) -> Set[Tuple]:
    out = set()
    for key in sigma_keys:
        x, y = key
        if len(x) + len(y) == n_features:
            continue
        has_ext = False
        for other in sigma_keys:
            if other == key:
                continue
            ox, oy = other
            if set(x) <= set(ox) and set(y) <= set(oy):
                has_ext = True
                break
        if not has_ext:
            out.add(key)
    return out


def candidates_oracle(schema: Schema, sigma_keys: Set[Tuple]) -> Set[Tuple]:
    from pcfa.patterns import Pattern, immediate_extensions

    memo: Dict[Tuple, bool] = {}

    def ok(key) -> bool:
        hit = memo.get(key)
        if hit is not None:
            return hit
        memo[key] = True
        good = True
        for ext in immediate_extensions(schema, Pattern(*key)):
            ek = ext.key()
            if ek not in sigma_keys or not ok(ek):
                good = False
                break
        memo[key] = good
        return good

    return {k for k in sigma_keys if ok(k)}


def minimal_oracle(schema: Schema, candidate_keys: Set[Tuple],
                   sigma_keys: Set[Tuple]) -> Set[Tuple]:
    out = set()
    for key in candidate_keys:
        x, y = key
        blocked = False
        for nx in range(len(x) + 1):
            for ny in range(len(y) + 1):
                if nx + ny == 0 or (nx + ny == len(x) + len(y)):
                    continue
                if nx == 0:
                    continue  # contractions with an empty sensitive part never block
                for xs in itertools.combinations(x, nx):
                    for ys in itertools.combinations(y, ny):
                        if (xs, ys) in sigma_keys:
                            blocked = True
        # also pure-x contractions of size < len(x) handled above via ny loop
        if not blocked:
            out.add(key)
    return out


# -- circuit builders -----------------------------------------------------------


def make_binary_nb_circuit(prior_pos: float, cond: Dict[str, Tuple[float, float]],
                           sensitive: Sequence[str]) -> Circuit:
    """Hand-built decision-rooted naive Bayes over binary features.

    cond maps feature name -> (P(feat=1 | d), P(feat=1 | dbar)).
    """
    names = list(cond)
    variables = [Variable("D", 2, ("neg", "pos"))]
    for name in names:
        variables.append(Variable(name, 2, ("v0", "v1")))
    sens = frozenset(1 + names.index(s) for s in sensitive)
    schema = Schema(tuple(variables), 0, 1, sens)

    nodes: List = []

    def add(node) -> int:
        nodes.append(node)
        return node.id

    leaf: Dict[Tuple[int, int], int] = {}
    for v in range(len(variables)):
        for val in (0, 1):
            leaf[(v, val)] = add(Leaf(len(nodes), v, val))

    branches = []
    for cls in (0, 1):  # 0 = neg = dbar, 1 = pos = d
        kids = [leaf[(0, cls)]]
        for i, name in enumerate(names):
            p1 = cond[name][0] if cls == 1 else cond[name][1]
            sid = add(Sum(len(nodes), (leaf[(i + 1, 1)], leaf[(i + 1, 0)]), (p1, 1.0 - p1)))
            kids.append(sid)
        branches.append(add(Product(len(nodes), tuple(kids))))
    add(Sum(len(nodes), tuple(branches), (1.0 - prior_pos, prior_pos)))
    return Circuit(schema, nodes, len(nodes) - 1)
