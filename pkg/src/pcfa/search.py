"""Branch-and-bound enumeration of discrimination patterns.

The recursion processes features in a fixed order.  At each step the chosen
variable either takes a value into the sensitive part (sensitive variables
only), takes a value into the other part, or is excluded; every pattern is
therefore reached exactly once.  A subtree is entered only when a sound upper
bound on its extensions' scores clears the active threshold.

Two backends share the recursion shape.  The dense backend reads masses and
complete-state conditional extremes from precomputed tables; its
discrimination bound instantiates every free variable on both sides, which is
the table-friendly relaxation of the prefix bound (sound, never tighter).  The
query backend computes the exact prefix bounds instead and is used when the
lattice exceeds the table cap.
"""

from __future__ import annotations

import bisect
import math
import time
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

from . import bounds as _bounds
from .circuit import Circuit, Schema, marginal
from .dense import DEFAULT_DENSE_CAP, DenseTables, build_tables
from .errors import InfeasibleRepair, StructureError
from .patterns import Pattern, PatternSet, ScoredPattern
from .scores import divergence_score

Mode = Literal["all", "topk", "certify"]
Rank = Literal["disc", "div"]


@dataclass
class SearchConfig:
    delta: float
    mode: Mode = "all"
    k: Optional[int] = None
    rank: Rank = "disc"
    variable_order: Optional[Sequence[int]] = None
    node_budget: Optional[int] = None

    def check(self, schema: Schema) -> None:
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must be in [0, 1], got {self.delta}")
        if self.mode == "topk" and (self.k is None or self.k < 1):
            raise ValueError("top-k mode needs k >= 1")
        if self.variable_order is not None:
            if sorted(self.variable_order) != sorted(schema.feature_indices()):
                raise ValueError("variable_order must permute the feature indices")


@dataclass
class SearchStats:
    """visited_assignments counts recursion states entered (root included)."""

    visited_assignments: int = 0
    pruned_subtrees: int = 0
    wall_time_ms: float = 0.0
    truncated: bool = False


@dataclass(frozen=True)
class CertifyResult:
    fair: bool
    witness: Optional[ScoredPattern]
    stats: SearchStats


class _BudgetStop(Exception):
    pass


class _FoundWitness(Exception):
    def __init__(self, witness: ScoredPattern):
        self.witness = witness


# -- collectors ---------------------------------------------------------------


class _AllCollector:
    """Collects every pattern; the pruning threshold never moves."""

    rank = "disc"

    def __init__(self, delta: float, first_only: bool = False):
        self.delta = delta
        self.disc_threshold = delta
        self.div_threshold = 0.0
        self.found: List[ScoredPattern] = []
        self.first_only = first_only

    def offer(self, sp: ScoredPattern) -> None:
        self.found.append(sp)
        if self.first_only:
            raise _FoundWitness(sp)

    def results(self) -> List[ScoredPattern]:
        return sorted(self.found, key=lambda sp: (-sp.delta,) + sp.sort_key())


class _TopKCollector:
    """Keeps the k best by the chosen rank; raises the pruning threshold."""

    def __init__(self, delta: float, k: int, rank: Rank):
        self.delta = delta
        self.k = k
        self.rank = rank
        self.entries: List[Tuple] = []  # (-score, sort_key, ScoredPattern)
        self.disc_threshold = delta
        self.div_threshold = 0.0

    def offer(self, sp: ScoredPattern) -> None:
        score = sp.delta if self.rank == "disc" else sp.divergence
        entry = (-score, sp.sort_key(), sp)
        bisect.insort(self.entries, entry)
        if len(self.entries) > self.k:
            self.entries.pop()
        if len(self.entries) == self.k:
            kth = -self.entries[-1][0]
            if self.rank == "disc":
                self.disc_threshold = max(self.delta, kth)
            else:
                self.div_threshold = kth

    def results(self) -> List[ScoredPattern]:
        return [e[2] for e in self.entries]


# -- dense backend -------------------------------------------------------------


def _run_dense(c: Circuit, t: DenseTables, cfg: SearchConfig, collector,
               order: Sequence[int], stats: SearchStats) -> None:
    schema = c.schema
    feats = tuple(order)
    n = len(feats)
    pd = t.pd
    pall = t.pall
    mmax = t.mmax
    mmin = t.mmin
    # per-position lookups keep the recursion free of dict access
    offs_at = [t.offsets[v] for v in feats]
    sens_at = [v in schema.sensitive_indices for v in feats]
    delta = cfg.delta
    budget = cfg.node_budget
    div_mode = collector.rank == "div"
    div_ub = t.div_ub
    offer = collector.offer
    visited = 0
    pruned = 0

    def make_scored(x: Tuple, y: Tuple, d: float, p: float, idx_xy: int, idx_y: int) -> ScoredPattern:
        div = None
        if div_mode:
            div = _div_from_masses(pd[idx_xy], pall[idx_xy], pd[idx_y], pall[idx_y], delta)
        return ScoredPattern(Pattern(tuple(sorted(x)), tuple(sorted(y))), d, p, divergence=div)

    def rec(pos: int, x: Tuple, y: Tuple, idx_xy: int, idx_y: int) -> None:
        nonlocal visited, pruned
        visited += 1
        if budget is not None and visited > budget:
            raise _BudgetStop()
        if pos == n:
            return
        offs = offs_at[pos]
        nxt = pos + 1
        pdy = pd[idx_y]
        py = pall[idx_y]
        cond_y = pdy / py
        if sens_at[pos]:
            var = feats[pos]
            for val in range(len(offs)):
                o = offs[val]
                ixy = idx_xy + o
                pxy = pall[ixy]
                if pxy <= 0.0:
                    continue  # zero-mass block: no pattern at or below it
                cond_xy = pd[ixy] / pxy
                # value into the sensitive part
                d = cond_xy - cond_y
                if d < 0.0:
                    d = -d
                if d > delta:
                    offer(make_scored(x + ((var, val),), y, d, pxy, ixy, idx_y))
                a = mmax[ixy] - mmin[idx_y]
                b = mmax[idx_y] - mmin[ixy]
                ub = a if a > b else b
                if ub > collector.disc_threshold and (
                        not div_mode or div_ub(ixy, idx_y) > collector.div_threshold):
                    rec(nxt, x + ((var, val),), y, ixy, idx_y)
                else:
                    pruned += 1
                # value into the free part
                iy = idx_y + o
                if x:
                    d = cond_xy - pd[iy] / pall[iy]
                    if d < 0.0:
                        d = -d
                    if d > delta:
                        offer(make_scored(x, y + ((var, val),), d, pxy, ixy, iy))
                a = mmax[ixy] - mmin[iy]
                b = mmax[iy] - mmin[ixy]
                ub = a if a > b else b
                if ub > collector.disc_threshold and (
                        not div_mode or div_ub(ixy, iy) > collector.div_threshold):
                    rec(nxt, x, y + ((var, val),), ixy, iy)
                else:
                    pruned += 1
        else:
            var = feats[pos]
            for val in range(len(offs)):
                o = offs[val]
                ixy = idx_xy + o
                pxy = pall[ixy]
                if pxy <= 0.0:
                    continue
                iy = idx_y + o
                if x:
                    d = pd[ixy] / pxy - pd[iy] / pall[iy]
                    if d < 0.0:
                        d = -d
                    if d > delta:
                        offer(make_scored(x, y + ((var, val),), d, pxy, ixy, iy))
                a = mmax[ixy] - mmin[iy]
                b = mmax[iy] - mmin[ixy]
                ub = a if a > b else b
                if ub > collector.disc_threshold and (
                        not div_mode or div_ub(ixy, iy) > collector.div_threshold):
                    rec(nxt, x, y + ((var, val),), ixy, iy)
                else:
                    pruned += 1
        # exclusion branch: same assignment, variable dropped from play
        a = mmax[idx_xy] - mmin[idx_y]
        b = mmax[idx_y] - mmin[idx_xy]
        ub = a if a > b else b
        if ub > collector.disc_threshold and (
                not div_mode or div_ub(idx_xy, idx_y) > collector.div_threshold):
            rec(nxt, x, y, idx_xy, idx_y)
        else:
            pruned += 1

    e = t.empty_index
    try:
        rec(0, (), (), e, e)
    finally:
        stats.visited_assignments += visited
        stats.pruned_subtrees += pruned


def _div_from_masses(pd_xy: float, p_xy: float, pd_y: float, p_y: float,
                     delta: float) -> float:
    """Divergence score from the four block masses (same reduction as
    scores.divergence_score); an unrepairable pattern ranks as +inf."""
    gap = abs(pd_xy / p_xy - pd_y / p_y)
    if gap <= delta:
        return 0.0
    a = 1.0 / p_xy - 1.0 / p_y
    b = -(pd_y - pd_xy) / p_y
    if a == 0.0:
        return math.inf
    t1 = (-delta - b) / a
    t2 = (delta - b) / a
    if t1 > t2:
        t1, t2 = t2, t1
    lo = max(t1, 0.0)
    hi = min(t2, p_xy)
    if lo > hi:
        return math.inf
    t_star = min(max(pd_xy, lo), hi)
    pn_xy = p_xy - pd_xy
    if (t_star == 0.0 and pd_xy > 0.0) or (t_star == p_xy and pn_xy > 0.0):
        return math.inf
    kl = 0.0
    if pd_xy > 0.0:
        kl += pd_xy * math.log(pd_xy / t_star)
    if pn_xy > 0.0:
        kl += pn_xy * math.log(pn_xy / (p_xy - t_star))
    return max(kl, 0.0)


# -- query backend -------------------------------------------------------------


def _run_direct(c: Circuit, cfg: SearchConfig, collector, order: Sequence[int],
                stats: SearchStats) -> None:
    schema = c.schema
    sens = schema.sensitive_indices
    feats = tuple(order)
    n = len(feats)
    delta = cfg.delta
    budget = cfg.node_budget
    div_mode = collector.rank == "div"
    pos_val = schema.positive_value

    def masses(a) -> Tuple[float, float]:
        return marginal(c, a, decision=pos_val), marginal(c, a)

    def make_scored(x: Tuple, y: Tuple, d: float, p: float) -> ScoredPattern:
        div = None
        if div_mode:
            try:
                div, _ = divergence_score(c, Pattern(x, y), delta)
            except InfeasibleRepair:
                div = math.inf
        return ScoredPattern(Pattern(x, y), d, p, divergence=div)

    def rec(pos: int, x: Tuple, y: Tuple, excluded: Tuple[int, ...]) -> None:
        stats.visited_assignments += 1
        if budget is not None and stats.visited_assignments > budget:
            raise _BudgetStop()
        if pos == n:
            return
        var = feats[pos]
        nxt = pos + 1
        pd_y, p_y = masses(y)
        cond_y = pd_y / p_y if p_y > 0.0 else 0.0
        for val in range(schema.variables[var].arity):
            pair = ((var, val),)
            exy = tuple(sorted(x + y + pair))
            pd_xy, p_xy = masses(exy)
            if p_xy <= 0.0:
                continue
            cond_xy = pd_xy / p_xy
            if var in sens:
                x2 = tuple(sorted(x + pair))
                d = abs(cond_xy - cond_y)
                if d > delta:
                    offer_sp = make_scored(x2, y, d, p_xy)
                    collector.offer(offer_sp)
                ub = _bounds.discrimination_ub(c, x2, y, excluded)
                if ub > collector.disc_threshold and (
                        not div_mode
                        or _bounds.divergence_ub(c, x2, y, excluded) > collector.div_threshold):
                    rec(nxt, x2, y, excluded)
                else:
                    stats.pruned_subtrees += 1
            y2 = tuple(sorted(y + pair))
            if x:
                pd_y2, p_y2 = masses(y2)
                d = abs(cond_xy - pd_y2 / p_y2)
                if d > delta:
                    collector.offer(make_scored(x, y2, d, p_xy))
            ub = _bounds.discrimination_ub(c, x, y2, excluded)
            if ub > collector.disc_threshold and (
                    not div_mode
                    or _bounds.divergence_ub(c, x, y2, excluded) > collector.div_threshold):
                rec(nxt, x, y2, excluded)
            else:
                stats.pruned_subtrees += 1
        exc2 = excluded + (var,)
        ub = _bounds.discrimination_ub(c, x, y, exc2)
        if ub > collector.disc_threshold and (
                not div_mode
                or _bounds.divergence_ub(c, x, y, exc2) > collector.div_threshold):
            rec(nxt, x, y, exc2)
        else:
            stats.pruned_subtrees += 1

    rec(0, (), (), ())


# -- entry points ----------------------------------------------------------------


def _prepare(c: Circuit, cfg: SearchConfig) -> Sequence[int]:
    cfg.check(c.schema)
    rep = c.report
    if not rep.all_ok:
        raise StructureError(f"search needs a fully validated circuit; report: {rep}")
    return tuple(cfg.variable_order) if cfg.variable_order is not None \
        else c.schema.feature_indices()


def _execute(c: Circuit, cfg: SearchConfig, collector,
             dense_cap: Optional[int] = DEFAULT_DENSE_CAP) -> SearchStats:
    order = _prepare(c, cfg)
    stats = SearchStats()
    start = time.perf_counter()
    tables = build_tables(c, dense_cap)
    try:
        if tables is not None:
            _run_dense(c, tables, cfg, collector, order, stats)
        else:
            _run_direct(c, cfg, collector, order, stats)
    except _BudgetStop:
        stats.truncated = True
    stats.wall_time_ms = (time.perf_counter() - start) * 1000.0
    return stats


def find_all_patterns(c: Circuit, cfg: SearchConfig,
                      dense_cap: Optional[int] = DEFAULT_DENSE_CAP
                      ) -> Tuple[PatternSet, SearchStats]:
    """Exactly the patterns {(x, y): x nonempty, P(x,y) > 0, delta-score > delta}."""
    if cfg.mode != "all":
        raise ValueError("find_all_patterns needs mode='all'")
    collector = _AllCollector(cfg.delta)
    stats = _execute(c, cfg, collector, dense_cap)
    ps = PatternSet(collector.results(), cfg.delta,
                    complete=not stats.truncated, provenance="search:all")
    return ps, stats


def find_topk(c: Circuit, cfg: SearchConfig,
              dense_cap: Optional[int] = DEFAULT_DENSE_CAP
              ) -> Tuple[List[ScoredPattern], SearchStats]:
    """The k best patterns by discrimination or divergence score."""
    if cfg.mode != "topk":
        raise ValueError("find_topk needs mode='topk'")
    collector = _TopKCollector(cfg.delta, cfg.k, cfg.rank)
    stats = _execute(c, cfg, collector, dense_cap)
    return collector.results(), stats


def certify_fair(c: Circuit, delta: float,
                 dense_cap: Optional[int] = DEFAULT_DENSE_CAP) -> CertifyResult:
    """Fair iff no discrimination pattern exists at the threshold.

    A single bound at the empty prefix can prove fairness outright; otherwise
    the search short-circuits on the first witness."""
    cfg = SearchConfig(delta=delta, mode="all")
    order = _prepare(c, cfg)
    stats = SearchStats()
    start = time.perf_counter()
    root_ub = _bounds.discrimination_ub(c, (), (), ())
    if root_ub <= delta:
        stats.wall_time_ms = (time.perf_counter() - start) * 1000.0
        stats.visited_assignments = 1
        return CertifyResult(True, None, stats)
    collector = _AllCollector(delta, first_only=True)
    tables = build_tables(c, dense_cap)
    witness: Optional[ScoredPattern] = None
    try:
        if tables is not None:
            _run_dense(c, tables, cfg, collector, order, stats)
        else:
            _run_direct(c, cfg, collector, order, stats)
    except _FoundWitness as fw:
        witness = fw.witness
    stats.wall_time_ms = (time.perf_counter() - start) * 1000.0
    return CertifyResult(witness is None, witness, stats)


def search_space_size(schema: Schema, with_prefixes: bool = True) -> int:
    """Number of recursion states a pruning-free search enters.

    Each feature contributes (2*arity + 1) states when sensitive (value into
    either part, or excluded) and (arity + 1) otherwise; with_prefixes counts
    interior states of the fixed-order tree as the search does."""
    sizes = [(2 * schema.variables[v].arity + 1) if v in schema.sensitive_indices
             else (schema.variables[v].arity + 1)
             for v in schema.feature_indices()]
    if not with_prefixes:
        out = 1
        for s in sizes:
            out *= s
        return out
    total = 0
    prefix = 1
    for s in sizes:
        total += prefix
        prefix *= s
    return total + prefix
