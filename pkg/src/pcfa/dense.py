"""Dense lookup tables over partial assignments (internal accelerator).

For models whose feature lattice fits in memory, every quantity the search
needs per step — pattern mass, favorable mass, and the extremes of the
complete-state decision conditional — becomes an O(1) table read.  Tables are
indexed by a mixed-radix code where each feature contributes a digit in
[0, arity]; the extra digit means "unassigned".  Built once per circuit with a
vectorized feedforward pass, then queried as plain Python lists.

Semantics are identical to per-query circuit evaluation (same distribution,
same normalization); only the computation path differs.
"""

from __future__ import annotations

import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from .circuit import LEAF, PRODUCT, Circuit

DEFAULT_DENSE_CAP = 4_000_000


def complete_joint(c: Circuit) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """Joint distribution over (decision, features) as an array of shape
    (2, arity_1, ..., arity_k), features in schema order."""
    feats = c.schema.feature_indices()
    arities = [c.schema.variables[v].arity for v in feats]
    n_states = int(np.prod(arities)) if arities else 1
    # digit of each feature at every complete state index (C order)
    digits: Dict[int, np.ndarray] = {}
    stride = n_states
    idx = np.arange(n_states)
    for v, a in zip(feats, arities):
        stride //= a
        digits[v] = (idx // stride) % a

    def branch(decision_value: int) -> np.ndarray:
        vals: List[np.ndarray] = [None] * len(c.nodes)  # type: ignore[list-item]
        ones = np.ones(n_states)
        for i, node in enumerate(c.nodes):
            k = c._kind[i]
            if k == LEAF:
                if node.var == c.schema.decision_index:
                    vals[i] = ones if node.value == decision_value else np.zeros(n_states)
                else:
                    vals[i] = (digits[node.var] == node.value).astype(float)
            elif k == PRODUCT:
                out = vals[node.children[0]].copy()
                for ch in node.children[1:]:
                    out *= vals[ch]
                vals[i] = out
            else:
                out = node.weights[0] * vals[node.children[0]]
                for ch, w in zip(node.children[1:], node.weights[1:]):
                    out += w * vals[ch]
                vals[i] = out
        return vals[c.root_id] / c.partition_value

    joint = np.stack([branch(0), branch(1)])
    return joint.reshape((2, *arities)), feats


class DenseTables:
    """Partial-assignment tables: masses and decision-conditional extremes."""

    @staticmethod
    def size_for(c: Circuit) -> int:
        out = 1
        for v in c.schema.feature_indices():
            out *= c.schema.variables[v].arity + 1
        return out

    def __init__(self, c: Circuit):
        self.circuit = c
        feats = c.schema.feature_indices()
        self.feats = feats
        arities = [c.schema.variables[v].arity for v in feats]
        dims = [a + 1 for a in arities]
        size = int(np.prod(dims)) if dims else 1
        self.size = size

        strides: Dict[int, int] = {}
        s = size
        for v, d in zip(feats, dims):
            s //= d
            strides[v] = s
        # offsets[var][val]: index delta for assigning var=val from unassigned
        self.offsets: Dict[int, List[int]] = {
            v: [(val - c.schema.variables[v].arity) * strides[v]
                for val in range(c.schema.variables[v].arity)]
            for v in feats
        }
        self.empty_index = sum(c.schema.variables[v].arity * strides[v] for v in feats)

        joint, _ = complete_joint(c)
        pos = c.schema.positive_value
        jd = joint[pos]
        jn = joint[1 - pos]

        # Scatter complete states into the partial lattice, then marginalize
        # one variable at a time: the "unassigned" slice becomes the value sum.
        pd = np.zeros(dims) if dims else np.zeros(())
        pn = np.zeros(dims) if dims else np.zeros(())
        sl = tuple(slice(0, a) for a in arities)
        pd[sl] = jd
        pn[sl] = jn
        for axis, a in enumerate(arities):
            idx_full = [slice(None)] * len(dims)
            idx_full[axis] = a
            src = [slice(None)] * len(dims)
            src[axis] = slice(0, a)
            pd[tuple(idx_full)] = pd[tuple(src)].sum(axis=axis)
            pn[tuple(idx_full)] = pn[tuple(src)].sum(axis=axis)

        total = pd + pn
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(total[sl] > 0.0, pd[sl] / np.where(total[sl] > 0.0, total[sl], 1.0), np.nan)
        mmax = np.full(dims, -math.inf)
        mmin = np.full(dims, math.inf)
        mmax[sl] = np.where(np.isnan(cond), -math.inf, cond)
        mmin[sl] = np.where(np.isnan(cond), math.inf, cond)
        for axis, a in enumerate(arities):
            idx_full = [slice(None)] * len(dims)
            idx_full[axis] = a
            src = [slice(None)] * len(dims)
            src[axis] = slice(0, a)
            mmax[tuple(idx_full)] = mmax[tuple(src)].max(axis=axis)
            mmin[tuple(idx_full)] = mmin[tuple(src)].min(axis=axis)

        # Plain lists: faster scalar indexing than numpy in the search loop.
        self.pd: List[float] = pd.reshape(-1).tolist()
        self.pall: List[float] = total.reshape(-1).tolist()
        self.mmax: List[float] = mmax.reshape(-1).tolist()
        self.mmin: List[float] = mmin.reshape(-1).tolist()

    # -- scalar queries ------------------------------------------------------

    def index_of(self, assignment) -> int:
        idx = self.empty_index
        off = self.offsets
        for var, val in assignment:
            idx += off[var][val]
        return idx

    def probability(self, idx: int) -> float:
        return self.pall[idx]

    def conditional(self, idx: int) -> float:
        return self.pd[idx] / self.pall[idx]

    def quick_disc_ub(self, idx_xy: int, idx_y: int) -> float:
        """Sound discrimination bound from complete-state extremes.

        Instantiates every free variable on both sides (no marginalization),
        which brackets the exact prefix bound from above."""
        return max(abs(self.mmax[idx_xy] - self.mmin[idx_y]),
                   abs(self.mmin[idx_xy] - self.mmax[idx_y]))

    def div_ub(self, idx_xy: int, idx_y: int) -> float:
        """Divergence bound; identical to the formula-level bound because its
        extremes already range over complete states."""
        pd_xy = self.pd[idx_xy]
        pn_xy = self.pall[idx_xy] - pd_xy
        out = 0.0
        if pd_xy > 0.0:
            mind_y = self.mmin[idx_y]
            if mind_y <= 0.0:
                return math.inf
            out += pd_xy * math.log(self.mmax[idx_xy] / mind_y)
        if pn_xy > 0.0:
            minn_y = 1.0 - self.mmax[idx_y]
            if minn_y <= 0.0:
                return math.inf
            out += pn_xy * math.log((1.0 - self.mmin[idx_xy]) / minn_y)
        return max(out, 0.0)


def build_tables(c: Circuit, cap: Optional[int] = DEFAULT_DENSE_CAP) -> Optional[DenseTables]:
    """Tables when affordable under the cap, else None (query fallback)."""
    if cap is not None and DenseTables.size_for(c) > cap:
        return None
    return DenseTables(c)
