"""Pattern scores: discrimination gap, probability, relative ratio, divergence.

The divergence score is the minimal KL(P || Q) over distributions Q that agree
with P on every complete state outside the pattern's completion block and whose
discrimination gap for the pattern is within the threshold.  Off-block entries
being pinned fixes the block's total mass, and within each decision slab the
KL-optimal reallocation is proportional, so the whole problem reduces to one
scalar: the favorable-slab mass kept in the block.
"""

from __future__ import annotations

import math
from typing import Optional, Tuple

from .circuit import Circuit, conditional_decision, marginal
from .errors import InfeasibleRepair, ZeroEvidence
from .patterns import Pattern, ScoredPattern


def discrimination_score(c: Circuit, p: Pattern) -> float:
    """|P(d | x,y) - P(d | y)|; zero for an empty sensitive part."""
    if not p.x:
        return 0.0
    return abs(conditional_decision(c, p.union()) - conditional_decision(c, p.y))


def pattern_probability(c: Circuit, p: Pattern) -> float:
    return marginal(c, p.union())


def relative_score(c: Circuit, p: Pattern) -> float:
    """P(d | x,y) / P(d | y); 1.0 for an empty sensitive part."""
    if not p.x:
        return 1.0
    denom = conditional_decision(c, p.y)
    if denom == 0.0:
        raise ZeroDivisionError("P(d | y) = 0")
    return conditional_decision(c, p.union()) / denom


def divergence_score(c: Circuit, p: Pattern, delta: float) -> Tuple[float, float]:
    """Minimal repair KL in nats and the favorable-slab scale factor alpha*.

    Returns (0.0, 1.0) whenever the pattern's own gap is already within delta.
    Raises InfeasibleRepair when no block reallocation with positive slab
    masses can satisfy the constraint.
    """
    pos = c.schema.positive_value
    exy = p.union()
    p_xy = marginal(c, exy)
    pd_xy = marginal(c, exy, decision=pos)
    p_y = marginal(c, p.y)
    pd_y = marginal(c, p.y, decision=pos)
    if p_xy <= 0.0 or p_xy >= 1.0:
        raise ZeroEvidence(f"divergence needs P(x,y) in (0,1); got {p_xy}")
    if p_y <= 0.0:
        raise ZeroEvidence("P(y) = 0")
    pn_xy = p_xy - pd_xy

    gap = abs(pd_xy / p_xy - pd_y / p_y)
    if gap <= delta:
        return 0.0, 1.0

    # Q(d|xy) - Q(d|y) is linear in t = Q(d, x, y):
    #   g(t) = t*(1/P(xy) - 1/P(y)) - (P(d,y) - P(d,xy))/P(y)
    a = 1.0 / p_xy - 1.0 / p_y
    b = -(pd_y - pd_xy) / p_y
    if a == 0.0:
        # Constant gap equal to the pattern's own, which exceeds delta.
        raise InfeasibleRepair("gap is independent of the block reallocation")
    t1 = (-delta - b) / a
    t2 = (delta - b) / a
    if t1 > t2:
        t1, t2 = t2, t1
    lo = max(t1, 0.0)
    hi = min(t2, p_xy)
    if lo > hi:
        raise InfeasibleRepair("no feasible block reallocation")
    # KL is convex in t with its minimum at t = P(d,x,y); project onto [lo, hi].
    t_star = min(max(pd_xy, lo), hi)
    if (t_star == 0.0 and pd_xy > 0.0) or (t_star == p_xy and pn_xy > 0.0):
        raise InfeasibleRepair("feasible set touches only a zero-mass boundary")

    kl = 0.0
    if pd_xy > 0.0:
        kl += pd_xy * math.log(pd_xy / t_star)
    if pn_xy > 0.0:
        kl += pn_xy * math.log(pn_xy / (p_xy - t_star))
    alpha = t_star / pd_xy if pd_xy > 0.0 else (1.0 if t_star == 0.0 else math.inf)
    return max(kl, 0.0), alpha


def score_pattern(c: Circuit, p: Pattern, delta: Optional[float] = None,
                  with_divergence: bool = False,
                  with_relative: bool = False) -> ScoredPattern:
    """Bundle a pattern with its scores."""
    div = None
    rel = None
    if with_divergence:
        if delta is None:
            raise ValueError("divergence needs the threshold delta")
        div, _ = divergence_score(c, p, delta)
    if with_relative:
        rel = relative_score(c, p)
    return ScoredPattern(p, discrimination_score(c, p), pattern_probability(c, p),
                         divergence=div, relative=rel)
