"""Pattern-set summaries: Pareto front, maximal, and minimal patterns.

The front keeps patterns no other pattern weakly beats on both probability and
discrimination score; with the strict rule, exact (probability, score) ties
eliminate each other.  Maximal patterns are incomplete patterns none of whose
extensions is a pattern; minimal patterns are patterns all of whose extensions
are patterns and none of whose contractions with a nonempty sensitive part is.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Set, Tuple

from .circuit import Circuit
from .errors import IncompleteInput
from .patterns import (
    Pattern,
    PatternSet,
    ScoredPattern,
    immediate_contractions,
    immediate_extensions,
)


@dataclass
class _Entry:
    prob: float
    delta: float
    sp: Optional[ScoredPattern]
    live: bool


class ParetoFront:
    """Incrementally maintained two-objective front, ordered by increasing
    probability and decreasing score.

    strict (default): a pattern stays only if every other pattern is beaten on
    at least one objective; equal-score twins knock each other out but keep
    blocking later insertions (dead entries remain as phantoms).
    weak: exact ties coexist; only strictly-somewhere-better points displace.
    """

    def __init__(self, weak: bool = False):
        self.weak = weak
        self._entries: List[_Entry] = []
        self._probs: List[float] = []

    def __len__(self) -> int:
        return sum(1 for e in self._entries if e.live)

    def insert(self, sp: ScoredPattern) -> bool:
        """Returns True when the pattern enters the front."""
        p, d = sp.probability, sp.delta
        pos = bisect_left(self._probs, p)
        entries = self._entries

        # Entries from pos on have probability >= p, scores descending, so the
        # first one carries the right side's best score and decides domination.
        if pos < len(entries):
            e = entries[pos]
            if e.prob == p and e.delta == d:
                if self.weak:
                    entries.insert(pos, _Entry(p, d, sp, True))
                    self._probs.insert(pos, p)
                    return True
                e.live = False  # mutual strict elimination; phantom keeps blocking
                return False
            if e.delta >= d:
                # Not an exact tie, so the dominator is strictly better
                # somewhere; rejected under both rules.
                return False
        # The newcomer enters; drop what it dominates: equal-probability entries
        # with smaller score, then the contiguous run of lower-probability,
        # no-better-score entries to the left.
        while pos < len(entries) and entries[pos].prob == p and entries[pos].delta < d:
            del entries[pos]
            del self._probs[pos]
        k = pos - 1
        while k >= 0 and entries[k].delta <= d:
            del entries[k]
            del self._probs[k]
            pos -= 1
            k -= 1
        entries.insert(pos, _Entry(p, d, sp, True))
        self._probs.insert(pos, p)
        return True

    def front(self) -> List[ScoredPattern]:
        return [e.sp for e in self._entries if e.live]

    def points(self) -> List[Tuple[float, float]]:
        return [(e.prob, e.delta) for e in self._entries if e.live]


def pareto_front(sigma: Iterable[ScoredPattern], weak: bool = False) -> List[ScoredPattern]:
    """Front of a finished pattern set, ordered by increasing probability."""
    pf = ParetoFront(weak=weak)
    for sp in sigma:
        pf.insert(sp)
    return pf.front()


@dataclass
class CandidateSet:
    """Patterns all of whose extensions are patterns."""

    patterns: List[ScoredPattern]
    relative_to_sigma: bool = False

    def keys(self) -> Set:
        return {sp.pattern.key() for sp in self.patterns}

    def __len__(self) -> int:
        return len(self.patterns)


def _require_complete(sigma: PatternSet, allow_partial: bool) -> bool:
    if not sigma.complete:
        if not allow_partial:
            raise IncompleteInput(
                "summary over a partial pattern set; pass allow_partial=True to "
                "compute it relative to the set")
        return True
    return False


def maximal_patterns(c: Circuit, sigma: PatternSet, delta: float,
                     allow_partial: bool = False) -> List[ScoredPattern]:
    """Incomplete patterns with no extension in the set.

    The prefix bound cannot certify this (it never drops below the pattern's
    own score), so membership is decided by superset scan against the set.
    """
    _require_complete(sigma, allow_partial)
    by_size: Dict[int, List[ScoredPattern]] = {}
    for sp in sigma:
        by_size.setdefault(sp.pattern.size, []).append(sp)
    sizes = sorted(by_size)
    out = []
    for sp in sigma:
        p = sp.pattern
        if p.is_complete(c.schema):
            continue
        extended = False
        for s in sizes:
            if s <= p.size:
                continue
            if any(q.pattern.extends(p) and q.pattern != p for q in by_size[s]):
                extended = True
                break
        if not extended:
            out.append(sp)
    return sorted(out, key=lambda sp: (-sp.delta,) + sp.sort_key())


def candidate_minimal(c: Circuit, sigma: PatternSet, delta: float,
                      allow_partial: bool = False) -> CandidateSet:
    """Patterns all of whose extensions (at any depth) are patterns."""
    relative = _require_complete(sigma, allow_partial)
    keys = sigma.keys()
    memo: Dict[Tuple, bool] = {}

    def all_extensions_in(p: Pattern) -> bool:
        k = p.key()
        hit = memo.get(k)
        if hit is not None:
            return hit
        memo[k] = True  # complete patterns qualify vacuously; cycles impossible
        ok = True
        for ext in immediate_extensions(c.schema, p):
            if ext.key() not in keys or not all_extensions_in(ext):
                ok = False
                break
        memo[k] = ok
        return ok

    out = [sp for sp in sigma if all_extensions_in(sp.pattern)]
    return CandidateSet(sorted(out, key=lambda sp: (-sp.delta,) + sp.sort_key()),
                        relative_to_sigma=relative)


def minimal_patterns(c: Circuit, candidates: CandidateSet,
                     sigma: PatternSet) -> List[ScoredPattern]:
    """Candidates with no pattern among their valid contractions.

    Level-order sweep of the inclusion poset restricted to the candidates'
    down-closure: a node is excluded once any immediate contraction is a
    pattern or already excluded, so exclusions propagate down the levels.
    Contractions with an empty sensitive part never block (they cannot be
    patterns).
    """
    pattern_keys = sigma.keys()
    # Down-closure of the candidates, grouped by size.
    levels: Dict[int, Set[Tuple]] = {}
    for sp in candidates.patterns:
        p = sp.pattern
        for nx in range(len(p.x) + 1):
            for ny in range(len(p.y) + 1):
                if nx + ny == 0:
                    continue
                for xs in combinations(p.x, nx):
                    for ys in combinations(p.y, ny):
                        levels.setdefault(nx + ny, set()).add((xs, ys))

    excluded: Dict[Tuple, bool] = {}
    for size in sorted(levels):
        for key in sorted(levels[size]):
            block = False
            for q in immediate_contractions(Pattern(*key)):
                qk = q.key()
                if qk in pattern_keys or excluded.get(qk, False):
                    block = True
                    break
            excluded[key] = block

    out = [sp for sp in candidates.patterns if not excluded.get(sp.pattern.key(), False)]
    return sorted(out, key=lambda sp: (-sp.delta,) + sp.sort_key())
