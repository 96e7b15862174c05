"""Sound bounds over all extensions of a partial pattern.

The workhorse maximizes (or minimizes) the ratio of the two decision-conditioned
branch functions over completions of the evidence.  For deterministic,
compatible branches the optimum decomposes over the structure: leaves compare
supports, products multiply scope-paired child optima, and sums reduce to the
best weighted child pair.  Conditional extremes follow from the ratio because
P(d | e, u) = 1 / (1 + (theta_neg/theta_pos) / r(e, u)).

Variables fall into three classes per query: evidence (fixed), optimized
(instantiated by the max/min), and excluded (marginalized).  Subcircuits whose
scope holds no optimized variable contribute a constant ratio computed by plain
evaluation, which marginalizes the excluded variables exactly; an excluded
variable that shares a sum with optimized ones is instantiated instead, which
can only widen the bound (sound).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Literal, Optional, Tuple

from .circuit import (
    Assignment,
    Circuit,
    Leaf,
    Product,
    Sum,
    as_assignment,
)
from .errors import IncompatibleStructure, StructureError

Direction = Literal["max", "min"]


@dataclass(frozen=True)
class BoundQuery:
    """A prefix bound request: pattern parts, excluded variables, direction."""

    x: Assignment
    y: Assignment
    excluded: FrozenSet[int]
    direction: Direction

    def check(self) -> None:
        xv = {v for v, _ in self.x}
        yv = {v for v, _ in self.y}
        if (xv & yv) or (xv & self.excluded) or (yv & self.excluded):
            raise ValueError("x, y and excluded variables must be pairwise disjoint")


@dataclass
class RatioMemo:
    """Per-evaluation cache of node-pair ratios, valid for one evidence split."""

    fingerprint: Tuple
    table: Dict[Tuple[int, int], float] = field(default_factory=dict)


class _RatioContext:
    def __init__(self, c: Circuit, evidence: Dict[int, int], opt: FrozenSet[int],
                 direction: Direction, use_memo: bool):
        self.c = c
        self.evidence = evidence
        self.opt = opt
        self.direction = direction
        self.memo: Optional[RatioMemo] = (
            RatioMemo((tuple(sorted(evidence.items())), tuple(sorted(opt)), direction))
            if use_memo else None)
        # One feedforward pass: constant-ratio subtrees read their values here;
        # optimized variables are absent from those scopes, so leaving them
        # unobserved is harmless.
        self.values = c.values(evidence)
        self.supports = _cached_supports(c)


def _cached_supports(c: Circuit):
    cached = getattr(c, "_support_proj", None)
    if cached is None:
        from .circuit import _support_projections

        cached = _support_projections(c)
        c._support_proj = cached
    return cached


def _pair_ratio(ctx: _RatioContext, n: int, m: int) -> float:
    memo = ctx.memo
    if memo is not None:
        hit = memo.table.get((n, m))
        if hit is not None:
            return hit
    val = _pair_ratio_raw(ctx, n, m)
    if memo is not None:
        memo.table[(n, m)] = val
    return val


def _pair_ratio_raw(ctx: _RatioContext, n: int, m: int) -> float:
    c = ctx.c
    scope = c.scopes[n]
    if scope != c.scopes[m]:
        raise IncompatibleStructure(f"nodes {n},{m} have different scopes")
    a, b = c.nodes[n], c.nodes[m]

    if isinstance(a, Leaf) and isinstance(b, Leaf):
        if a.value != b.value:
            return 0.0
        ov = ctx.evidence.get(a.var)
        if ov is not None and ov != a.value:
            return 0.0
        return 1.0

    if not (scope & ctx.opt):
        # Constant in the optimized variables: evaluate, marginalizing excluded.
        nv, mv = ctx.values[n], ctx.values[m]
        if mv == 0.0:
            if nv == 0.0 or _witnessed_disjoint_pair(ctx, n, m):
                return 0.0
            raise IncompatibleStructure(
                f"nodes {n},{m}: positive/zero ratio outside shared support")
        return nv / mv

    if isinstance(a, Product) and isinstance(b, Product):
        by_scope = {c.scopes[ch]: ch for ch in b.children}
        if len(by_scope) != len(b.children):
            raise IncompatibleStructure(f"product {m}: duplicate child scopes")
        out = 1.0
        for ch in a.children:
            partner = by_scope.get(c.scopes[ch])
            if partner is None:
                raise IncompatibleStructure(
                    f"products {n},{m}: no partner for scope {sorted(c.scopes[ch])}")
            out *= _pair_ratio(ctx, ch, partner)
            if out == 0.0:
                return 0.0
        return out

    if isinstance(a, Sum) and isinstance(b, Sum):
        if ctx.direction == "max":
            best = 0.0
            for ci, wi in zip(a.children, a.weights):
                for cj, wj in zip(b.children, b.weights):
                    r = _pair_ratio(ctx, ci, cj)
                    if r > 0.0:
                        v = (wi / wj) * r
                        if v > best:
                            best = v
            return best
        # min: smallest non-zero value, or zero when every pair dies
        best = math.inf
        for ci, wi in zip(a.children, a.weights):
            for cj, wj in zip(b.children, b.weights):
                r = _pair_ratio(ctx, ci, cj)
                if r > 0.0:
                    v = (wi / wj) * r
                    if v < best:
                        best = v
        return 0.0 if best is math.inf else best

    raise IncompatibleStructure(f"nodes {n},{m} have mismatched kinds")


def _witnessed_disjoint_pair(ctx: _RatioContext, n: int, m: int) -> bool:
    sn, sm = ctx.supports[n], ctx.supports[m]
    for var, vals in sn.items():
        if var in sm and not (vals & sm[var]):
            return True
    return False


def _require_bounds_ok(c: Circuit) -> None:
    rep = c.report
    if not (rep.decision_rooted and rep.deterministic and rep.compatible
            and rep.smooth and rep.decomposable):
        raise StructureError(
            "bounds need a smooth, decomposable, deterministic, decision-rooted, "
            f"compatible circuit; report: {rep}")


def best_ratio(c: Circuit, n: int, m: int, e, direction: Direction,
               excluded: Iterable[int] = (), use_memo: bool = True) -> float:
    """Optimum of nodes n/m over completions of e (excluded variables are
    marginalized instead of instantiated)."""
    a = as_assignment(c.schema, e)
    evidence = dict(a)
    exc = frozenset(excluded)
    if exc & set(evidence):
        raise ValueError("excluded variables overlap the evidence")
    opt = frozenset(c.schema.feature_indices()) - set(evidence) - exc
    ctx = _RatioContext(c, evidence, opt, direction, use_memo)
    return _pair_ratio(ctx, n, m)


def _branch_ratio(c: Circuit, evidence: Dict[int, int], opt: FrozenSet[int],
                  direction: Direction) -> float:
    """Ratio of the two decision branches (implicit top-level products)."""
    branches = c.decision_branches()
    pos, _ = branches.positive(c.schema)
    neg, _ = branches.negative(c.schema)
    by_scope = {c.scopes[mm]: mm for mm in neg}
    if len(by_scope) != len(neg):
        raise IncompatibleStructure("negative branch: duplicate child scopes")
    ctx = _RatioContext(c, evidence, opt, direction, use_memo=True)
    out = 1.0
    for nn in pos:
        partner = by_scope.get(c.scopes[nn])
        if partner is None:
            raise IncompatibleStructure(
                f"branches decompose differently at scope {sorted(c.scopes[nn])}")
        out *= _pair_ratio(ctx, nn, partner)
        if out == 0.0:
            return 0.0
    return out


def extreme_conditional(c: Circuit, e, excluded: Iterable[int] = (),
                        direction: Direction = "max") -> float:
    """Extreme of P(d | e, u) over completions u of the non-excluded free
    variables; excluded variables stay marginalized."""
    _require_bounds_ok(c)
    a = as_assignment(c.schema, e)
    evidence = dict(a)
    exc = frozenset(excluded)
    if exc & set(evidence):
        raise ValueError("excluded variables overlap the evidence")
    opt = frozenset(c.schema.feature_indices()) - set(evidence) - exc
    r = _branch_ratio(c, evidence, opt, direction)
    if r == 0.0:
        return 0.0
    if r == math.inf:
        return 1.0
    branches = c.decision_branches()
    _, theta_pos = branches.positive(c.schema)
    _, theta_neg = branches.negative(c.schema)
    return 1.0 / (1.0 + (theta_neg / theta_pos) / r)


def discrimination_ub(c: Circuit, x, y, excluded: Iterable[int] = ()) -> float:
    """Upper bound on the discrimination score of every extension of (x, y)
    avoiding the excluded variables."""
    xa = as_assignment(c.schema, x)
    ya = as_assignment(c.schema, y)
    exc = frozenset(excluded)
    BoundQuery(xa, ya, exc, "max").check()
    exy = tuple(sorted(xa + ya))
    xvars = frozenset(v for v, _ in xa)
    hi_xy = extreme_conditional(c, exy, exc, "max")
    lo_xy = extreme_conditional(c, exy, exc, "min")
    # The y side never observes the x variables: they are marginalized.
    hi_y = extreme_conditional(c, ya, exc | xvars, "max")
    lo_y = extreme_conditional(c, ya, exc | xvars, "min")
    return max(abs(hi_xy - lo_y), abs(lo_xy - hi_y))


def divergence_ub(c: Circuit, x, y, excluded: Iterable[int] = (),
                  delta: Optional[float] = None) -> float:
    """Upper bound on the divergence score of every extension of (x, y).

    The extremes range over complete states consistent with the evidence, so
    the excluded set plays no role in the formula; it is accepted for search
    integration and only loosens nothing.
    """
    from .circuit import marginal

    xa = as_assignment(c.schema, x)
    ya = as_assignment(c.schema, y)
    BoundQuery(xa, ya, frozenset(excluded), "max").check()
    exy = tuple(sorted(xa + ya))
    pos = c.schema.positive_value
    pd_xy = marginal(c, exy, decision=pos)
    pn_xy = marginal(c, exy) - pd_xy

    maxd_xy = extreme_conditional(c, exy, (), "max")
    mind_xy = extreme_conditional(c, exy, (), "min")
    maxd_y = extreme_conditional(c, ya, (), "max")
    mind_y = extreme_conditional(c, ya, (), "min")
    maxn_xy = 1.0 - mind_xy
    minn_y = 1.0 - maxd_y

    out = 0.0
    if pd_xy > 0.0:
        if mind_y <= 0.0:
            return math.inf
        out += pd_xy * math.log(maxd_xy / mind_y)
    if pn_xy > 0.0:
        if minn_y <= 0.0:
            return math.inf
        out += pn_xy * math.log(maxn_xy / minn_y)
    return max(out, 0.0)


def relative_ub(c: Circuit, x, y, excluded: Iterable[int] = ()) -> Tuple[float, float]:
    """(hi, lo) bracket for the relative score of every extension of (x, y)."""
    xa = as_assignment(c.schema, x)
    ya = as_assignment(c.schema, y)
    exc = frozenset(excluded)
    BoundQuery(xa, ya, exc, "max").check()
    exy = tuple(sorted(xa + ya))
    xvars = frozenset(v for v, _ in xa)
    hi_xy = extreme_conditional(c, exy, exc, "max")
    lo_xy = extreme_conditional(c, exy, exc, "min")
    hi_y = extreme_conditional(c, ya, exc | xvars, "max")
    lo_y = extreme_conditional(c, ya, exc | xvars, "min")
    hi = math.inf if lo_y <= 0.0 else hi_xy / lo_y
    lo = math.inf if hi_y <= 0.0 else lo_xy / hi_y
    return hi, lo
