"""Group-fairness quantities computed from the model distribution.

Spreads are taken over complete assignments to the sensitive variables:
statistical parity is the spread of P(d | s), disparate impact its min/max
complement, and equalized odds the spread of the model classifier's acceptance
rate within each true decision class.  The classifier is the model's own
thresholded conditional (default 1/2).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .circuit import Circuit, conditional_decision
from .dense import complete_joint
from .errors import EnumerationCapExceeded, ZeroEvidence
from .search import SearchConfig, find_all_patterns, find_topk

DEFAULT_SENSITIVE_CAP = 4096
DEFAULT_STATE_CAP = 1 << 20


@dataclass
class MetricsReport:
    di: float
    sp: float
    sp1: float
    eo: float
    pattern_counts: Dict[float, int] = field(default_factory=dict)
    highest_delta: float = 0.0
    classifier_threshold: float = 0.5


def _sensitive_assignments(c: Circuit, cap: int) -> List[Tuple[Tuple[int, int], ...]]:
    sens = sorted(c.schema.sensitive_indices)
    total = 1
    for v in sens:
        total *= c.schema.variables[v].arity
    if total > cap:
        raise EnumerationCapExceeded("sensitive-group enumeration", total, cap)
    out = []
    for combo in itertools.product(*(range(c.schema.variables[v].arity) for v in sens)):
        out.append(tuple(zip(sens, combo)))
    return out


def _conditional_spread(c: Circuit, assignments) -> Tuple[float, float]:
    """(max, min) of P(d | s) over the given assignments with positive mass."""
    hi, lo = None, None
    for a in assignments:
        try:
            p = conditional_decision(c, a)
        except ZeroEvidence:
            continue
        hi = p if hi is None else max(hi, p)
        lo = p if lo is None else min(lo, p)
    if hi is None:
        return 0.0, 0.0
    return hi, lo


def equalized_odds(c: Circuit, classifier_threshold: float = 0.5,
                   sensitive_cap: int = DEFAULT_SENSITIVE_CAP,
                   state_cap: int = DEFAULT_STATE_CAP) -> float:
    """Max over true decision values of the acceptance-rate spread across
    sensitive groups, by exact enumeration of the joint."""
    arities = [c.schema.variables[v].arity for v in c.schema.feature_indices()]
    n_states = 1
    for a in arities:
        n_states *= a
    if n_states > state_cap:
        raise EnumerationCapExceeded("equalized-odds enumeration", n_states, state_cap)
    groups = _sensitive_assignments(c, sensitive_cap)

    joint, feats = complete_joint(c)
    pos = c.schema.positive_value
    jd = joint[pos]
    jn = joint[1 - pos]
    total = jd + jn
    with np.errstate(invalid="ignore", divide="ignore"):
        accept = np.where(total > 0.0, jd / np.where(total > 0.0, total, 1.0), 0.0) \
            >= classifier_threshold
    axis_of = {v: i for i, v in enumerate(feats)}

    spreads = []
    for slab, friendly in ((jd, "favorable"), (jn, "unfavorable")):
        hi, lo = None, None
        for g in groups:
            sel = [slice(None)] * len(feats)
            for var, val in g:
                sel[axis_of[var]] = val
            mass = slab[tuple(sel)]
            denom = float(mass.sum())
            if denom <= 0.0:
                continue
            rate = float(mass[accept[tuple(sel)]].sum()) / denom
            hi = rate if hi is None else max(hi, rate)
            lo = rate if lo is None else min(lo, rate)
        spreads.append(0.0 if hi is None else hi - lo)
    return max(spreads)


def group_fairness_report(c: Circuit, deltas: Sequence[float] = (),
                          classifier_threshold: float = 0.5,
                          sensitive_cap: int = DEFAULT_SENSITIVE_CAP,
                          state_cap: int = DEFAULT_STATE_CAP) -> MetricsReport:
    """DI, SP, single-variable SP, EO, plus pattern counts per threshold."""
    groups = _sensitive_assignments(c, sensitive_cap)
    hi, lo = _conditional_spread(c, groups)
    sp = hi - lo
    di = 0.0 if hi == 0.0 else 1.0 - lo / hi

    sp1 = 0.0
    for v in sorted(c.schema.sensitive_indices):
        singles = [((v, val),) for val in range(c.schema.variables[v].arity)]
        h, l = _conditional_spread(c, singles)
        sp1 = max(sp1, h - l)

    eo = equalized_odds(c, classifier_threshold, sensitive_cap, state_cap)

    counts: Dict[float, int] = {}
    for delta in deltas:
        ps, _ = find_all_patterns(c, SearchConfig(delta=delta, mode="all"))
        counts[delta] = len(ps)
    top, _ = find_topk(c, SearchConfig(delta=0.0, mode="topk", k=1, rank="disc"))
    highest = top[0].delta if top else 0.0

    return MetricsReport(di=di, sp=sp, sp1=sp1, eo=eo, pattern_counts=counts,
                         highest_delta=highest, classifier_threshold=classifier_threshold)
