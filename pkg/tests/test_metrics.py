"""Group fairness metrics.

Core claims:
    - NB1: SP = 0.6, DI = 0.75, EO = 1.0 to 1e-12; SP1 equals SP for one
      sensitive variable
    - class-independent models score zero on SP and DI
    - the flat-prior fixture shows SP under 0.02 alongside a pattern above
      0.05 (metrics alone miss it)
    - prior patterns imply an SP violation; DI ties to SP algebraically;
      enumeration caps fire
"""

import pytest
from pytest import approx

from pcfa import (
    EnumerationCapExceeded,
    SearchConfig,
    conditional_decision,
    equalized_odds,
    find_all_patterns,
    group_fairness_report,
)

from oracles import JointOracle


class TestNB1Values:
    def test_exact_metrics(self, nb1):
        rep = group_fairness_report(nb1, deltas=[0.25])
        assert rep.sp == approx(0.6, abs=1e-12)
        assert rep.di == approx(0.75, abs=1e-12)
        assert rep.eo == approx(1.0, abs=1e-12)
        assert rep.sp1 == approx(0.6, abs=1e-12)
        assert rep.pattern_counts[0.25] == 6
        assert rep.highest_delta == approx(abs(8 / 11 - 0.4), abs=1e-9)

    def test_eo_by_definition(self, nb1):
        # d_hat(z) = [S1 = 1] at threshold 1/2; spread is 1 within each class
        oracle = JointOracle(nb1)
        for z, want in [(((1, 1), (2, 1)), True), (((1, 1), (2, 0)), True),
                        (((1, 0), (2, 1)), False), (((1, 0), (2, 0)), False)]:
            assert (oracle.cond(z) >= 0.5) == want
        assert equalized_odds(nb1) == approx(1.0, abs=1e-12)


class TestDegenerate:
    def test_class_independent_zero_spreads(self, class_independent_nb):
        rep = group_fairness_report(class_independent_nb)
        assert rep.sp == approx(0.0, abs=1e-12)
        assert rep.di == approx(0.0, abs=1e-12)


class TestSpVsPatterns:
    def test_low_sp_with_strong_pattern(self, sp_gap_nb):
        rep = group_fairness_report(sp_gap_nb, deltas=[0.05])
        assert rep.sp < 0.02
        assert rep.pattern_counts[0.05] >= 1
        assert rep.highest_delta > 0.05
        # confirmed against the enumeration oracle
        oracle = JointOracle(sp_gap_nb)
        best = max(d for _, _, d, _ in oracle.all_scored())
        assert best > 0.05
        spread = [oracle.cond(((1, s),)) for s in (0, 1)]
        assert max(spread) - min(spread) < 0.02


class TestConsistency:
    def test_prior_pattern_implies_sp_violation(self, corpus):
        for inst in corpus[:6]:
            c = inst.circuit
            rep = group_fairness_report(c)
            delta = 0.02
            ps, _ = find_all_patterns(c, SearchConfig(delta=delta))
            prior_patterns = [sp for sp in ps
                              if not sp.pattern.y
                              and len(sp.pattern.x) == len(c.schema.sensitive_indices)]
            if prior_patterns:
                assert rep.sp > delta, inst.name

    def test_di_sp_algebra(self, corpus, nb1):
        for c in [nb1] + [inst.circuit for inst in corpus[:4]]:
            rep = group_fairness_report(c)
            import itertools

            sens = sorted(c.schema.sensitive_indices)
            conds = []
            for combo in itertools.product(*[range(c.schema.variables[v].arity)
                                             for v in sens]):
                conds.append(conditional_decision(c, tuple(zip(sens, combo))))
            hi = max(conds)
            assert rep.di == approx(rep.sp / hi, abs=1e-9)

    def test_entries_in_unit_interval(self, corpus):
        for inst in corpus[:4]:
            rep = group_fairness_report(inst.circuit)
            for v in (rep.di, rep.sp, rep.sp1, rep.eo):
                assert -1e-12 <= v <= 1.0 + 1e-12


class TestCaps:
    def test_sensitive_cap(self, nb1):
        with pytest.raises(EnumerationCapExceeded):
            group_fairness_report(nb1, sensitive_cap=1)

    def test_state_cap(self, nb1):
        with pytest.raises(EnumerationCapExceeded):
            group_fairness_report(nb1, state_cap=1)
