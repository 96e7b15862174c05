"""Randomized pattern mining by repeated weighted descent.

Each run starts from the empty pattern and adds one (variable, value) pair at
a time until the assignment is complete.  Every immediate extension gets
scored on the way; any extension whose gap clears the threshold is recorded.
The next state is drawn with probability proportional to the extensions'
scores (basic variant) or to a running estimate of the score of paths through
each extension, sharpened by a depth-dependent exponent (memoized variant).

Found patterns are always verified scores, so the output is sound regardless
of when the clock cuts a run short; completeness is not guaranteed.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

from .circuit import Circuit, marginal
from .errors import StructureError
from .patterns import Pattern, PatternSet, ScoredPattern

Variant = Literal["basic", "memo"]

PatternKey = Tuple[Tuple[Tuple[int, int], ...], Tuple[Tuple[int, int], ...]]


@dataclass
class SamplerConfig:
    delta: float
    time_budget_ms: float
    seed: int
    variant: Variant = "basic"
    # Wall-clock budgets are not reproducible; a run cap is, so seeded tests
    # and the determinism contract use max_runs with a generous time budget.
    max_runs: Optional[int] = None

    def check(self) -> None:
        if self.time_budget_ms <= 0:
            raise ValueError("time budget must be > 0")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must be in [0, 1], got {self.delta}")


@dataclass
class RunRecord:
    """Transcript of one descent: chosen states, discoveries, work done.

    tested counts candidate assignments scored; found holds (pattern key,
    tested count in this run when it surfaced).
    """

    path: List[PatternKey] = field(default_factory=list)
    found: List[Tuple[PatternKey, int]] = field(default_factory=list)
    evaluations: int = 0
    tested: int = 0
    zero_mass_skips: int = 0
    truncated: bool = False


class EstimatorTable:
    """Sparse map from visited pattern keys to (running score Phi, visits)."""

    def __init__(self):
        self._table: Dict[PatternKey, List[float]] = {}

    def touch(self, key: PatternKey, init_score: float) -> float:
        entry = self._table.get(key)
        if entry is None:
            self._table[key] = [init_score, 1.0]
            return init_score
        return entry[0]

    def phi(self, key: PatternKey) -> float:
        return self._table[key][0]

    def update(self, key: PatternKey, suffix_mean: float) -> None:
        entry = self._table[key]
        entry[1] += 1.0
        entry[0] = (entry[0] * (entry[1] - 1.0) + suffix_mean) / entry[1]

    def visits(self, key: PatternKey) -> float:
        return self._table[key][1]

    def __len__(self) -> int:
        return len(self._table)

    def __contains__(self, key: PatternKey) -> bool:
        return key in self._table


def sample_patterns_basic(c: Circuit, cfg: SamplerConfig) -> Tuple[PatternSet, List[RunRecord]]:
    """Weighted random descent with per-extension gap weights."""
    return _sample(c, cfg, memoized=False)


def sample_patterns_memo(c: Circuit, cfg: SamplerConfig,
                         table: Optional[EstimatorTable] = None
                         ) -> Tuple[PatternSet, List[RunRecord]]:
    """Descent weighted by memoized path-score estimates with an
    exploration-tapering exponent; estimates persist across runs.

    Pass a table to keep estimates across invocations (or to inspect them)."""
    return _sample(c, cfg, memoized=True, table=table)


def _sample(c: Circuit, cfg: SamplerConfig, memoized: bool,
            table: Optional[EstimatorTable] = None) -> Tuple[PatternSet, List[RunRecord]]:
    cfg.check()
    if not c.schema.sensitive_indices:
        raise StructureError("sampling needs at least one sensitive variable")
    schema = c.schema
    feats = schema.feature_indices()
    n = len(feats)
    pos_val = schema.positive_value
    sens = schema.sensitive_indices
    rng = random.Random(cfg.seed)
    deadline = time.monotonic() + cfg.time_budget_ms / 1000.0
    if memoized and table is None:
        table = EstimatorTable()
    elif not memoized:
        table = None

    sigma: Dict[PatternKey, ScoredPattern] = {}
    runs: List[RunRecord] = []

    def out_of_time() -> bool:
        return time.monotonic() >= deadline

    while not out_of_time() and (cfg.max_runs is None or len(runs) < cfg.max_runs):
        rec = RunRecord()
        runs.append(rec)
        x: Tuple[Tuple[int, int], ...] = ()
        y: Tuple[Tuple[int, int], ...] = ()

        while len(x) + len(y) < n:
            gamma = 1.0 + (len(x) + len(y)) / n
            # y-part masses are shared by every extension scored at this step.
            rec.evaluations += 2
            pd_y = marginal(c, y, decision=pos_val)
            p_y = marginal(c, y)
            cond_y = pd_y / p_y if p_y > 0.0 else 0.0

            candidates: List[Tuple[Tuple, Tuple]] = []
            weights: List[float] = []
            assigned = {v for v, _ in x} | {v for v, _ in y}
            cut = False
            for var in feats:
                if var in assigned:
                    continue
                for val in range(schema.variables[var].arity):
                    if out_of_time():
                        cut = True
                        break
                    pair = ((var, val),)
                    exy = tuple(sorted(x + y + pair))
                    rec.evaluations += 2
                    p_xy = marginal(c, exy)
                    if p_xy <= 0.0:
                        rec.zero_mass_skips += 1
                        continue
                    pd_xy = marginal(c, exy, decision=pos_val)
                    cond_xy = pd_xy / p_xy
                    if var in sens:
                        x2 = tuple(sorted(x + pair))
                        d = abs(cond_xy - cond_y)
                        rec.tested += 1
                        _record(sigma, rec, cfg.delta, x2, y, d, p_xy)
                        candidates.append((x2, y))
                        weights.append(_weight(table, (x2, y), d, gamma))
                    rec.evaluations += 2
                    y2 = tuple(sorted(y + pair))
                    pd_y2 = marginal(c, y2, decision=pos_val)
                    p_y2 = marginal(c, y2)
                    d = abs(cond_xy - pd_y2 / p_y2) if x else 0.0
                    rec.tested += 1
                    _record(sigma, rec, cfg.delta, x, y2, d, p_xy)
                    candidates.append((x, y2))
                    weights.append(_weight(table, (x, y2), d, gamma))
                if cut:
                    break
            if cut or not candidates:
                rec.truncated = True
                break
            total = sum(weights)
            if total > 0.0:
                x, y = rng.choices(candidates, weights=weights)[0]
            else:
                x, y = candidates[rng.randrange(len(candidates))]
            rec.path.append((x, y))

        if memoized and not rec.truncated and rec.path:
            _backtrack(table, rec.path, n)
        if rec.truncated:
            break

    patterns = sorted(sigma.values(), key=lambda sp: (-sp.delta,) + sp.sort_key())
    provenance = f"sampling:{'memo' if memoized else 'basic'}"
    return PatternSet(patterns, cfg.delta, complete=False, provenance=provenance), runs


def _weight(table: Optional[EstimatorTable], key: PatternKey, delta_score: float,
            gamma: float) -> float:
    if table is None:
        return delta_score
    return table.touch(key, delta_score) ** gamma


def _record(sigma: Dict[PatternKey, ScoredPattern], rec: RunRecord, delta: float,
            x: Tuple, y: Tuple, d: float, p: float) -> None:
    if d > delta and x:
        key = (x, y)
        if key not in sigma:
            sigma[key] = ScoredPattern(Pattern(x, y), d, p)
            rec.found.append((key, rec.tested))


def _backtrack(table: EstimatorTable, path: List[PatternKey], n: int) -> None:
    """Fold the finished run back into the estimates, deepest state first.

    Each state's new sample is the mean of the live estimates strictly after
    it on the path; the complete state has no suffix and keeps its own score.
    """
    suffix_sum = 0.0
    for j in range(len(path) - 1, -1, -1):
        size = j + 1
        if size < n:
            table.update(path[j], suffix_sum / (n - size))
        suffix_sum += table.phi(path[j])
