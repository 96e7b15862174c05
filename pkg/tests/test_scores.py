"""Pattern scores.

Core claims:
    - discrimination, probability, and relative scores hit the NB1 worked
      values from the enumeration oracle
    - the divergence score matches a 1e-6 grid search over the scale factor,
      is zero exactly when the gap is within the threshold, and reconstructs
      a valid repaired distribution
"""

import math

import pytest
from pytest import approx

from pcfa import (
    InfeasibleRepair,
    ZeroEvidence,
    discrimination_score,
    divergence_score,
    pattern,
    pattern_probability,
    relative_score,
    score_pattern,
)
from pcfa.circuit import Circuit, Leaf, Product, Schema, Sum, Variable

from oracles import JointOracle


S1_1 = (1, 1)
S1_0 = (1, 0)
Y1_1 = (2, 1)
Y1_0 = (2, 0)


class TestDiscrimination:
    def test_prior_gap(self, nb1):
        assert discrimination_score(nb1, pattern([S1_1], [])) == approx(0.3, abs=1e-12)

    def test_conditioned_gap(self, nb1):
        got = discrimination_score(nb1, pattern([S1_1], [Y1_1]))
        assert got == approx(abs(6 / 7 - 0.6), abs=1e-12)

    def test_empty_sensitive_part_is_zero(self, nb1):
        assert discrimination_score(nb1, pattern([], [Y1_1])) == 0.0

    def test_zero_evidence(self, nb1):
        # impossible evidence cannot arise in NB1; force through a tiny circuit
        variables = (Variable("D", 2, ("n", "p")), Variable("F", 2, ("a", "b")))
        schema = Schema(variables, 0, 1, frozenset({1}))
        nodes = [Leaf(0, 0, 1), Leaf(1, 0, 0), Leaf(2, 1, 0),
                 Product(3, (0, 2)), Product(4, (1, 2)),
                 Sum(5, (3, 4), (0.5, 0.5))]
        c = Circuit(schema, nodes, 5)
        with pytest.raises(ZeroEvidence):
            discrimination_score(c, pattern([(1, 1)], []))


class TestProbabilityAndRelative:
    def test_probability_examples(self, nb1):
        assert pattern_probability(nb1, pattern([S1_1], [Y1_1])) == approx(0.28, abs=1e-12)
        assert pattern_probability(nb1, pattern([S1_1], [])) == approx(0.5, abs=1e-12)
        assert pattern_probability(nb1, pattern([], [])) == approx(1.0, abs=1e-12)

    def test_relative_examples(self, nb1):
        assert relative_score(nb1, pattern([S1_1], [Y1_1])) == approx((6 / 7) / 0.6, abs=1e-9)
        assert relative_score(nb1, pattern([], [Y1_1])) == 1.0
        assert relative_score(nb1, pattern([S1_0], [Y1_1])) == approx((3 / 11) / 0.6, abs=1e-9)

    def test_relative_zero_denominator(self):
        # positive branch puts no mass on F=b, so P(d | F=b) = 0
        variables = (Variable("D", 2, ("n", "p")),
                     Variable("S", 2, ("a", "b")),
                     Variable("F", 2, ("a", "b")))
        schema = Schema(variables, 0, 1, frozenset({1}))
        nodes = [
            Leaf(0, 0, 1), Leaf(1, 0, 0),
            Leaf(2, 1, 0), Leaf(3, 1, 1), Leaf(4, 2, 0), Leaf(5, 2, 1),
            Sum(6, (2, 3), (0.5, 0.5)),
            Sum(7, (4,), (1.0,)),            # d-branch: F = a only
            Sum(8, (2, 3), (0.5, 0.5)),
            Sum(9, (4, 5), (0.5, 0.5)),
            Product(10, (0, 6, 7)),
            Product(11, (1, 8, 9)),
            Sum(12, (10, 11), (0.5, 0.5)),
        ]
        c = Circuit(schema, nodes, 12)
        with pytest.raises(ZeroDivisionError):
            relative_score(c, pattern([(1, 0)], [(2, 1)]))


class TestDivergence:
    def test_nb1_worked_value(self, nb1):
        kl, alpha = divergence_score(nb1, pattern([S1_1], [Y1_1]), 0.1)
        assert kl == approx(0.079248, abs=1e-5)
        assert alpha == approx(7 / 12, abs=1e-9)

    def test_zero_when_within_threshold(self, nb1):
        p = pattern([S1_1], [Y1_1])  # gap ~0.2571
        assert divergence_score(nb1, p, 0.26) == (0.0, 1.0)

    def test_threshold_one_vacuous(self, nb1):
        for p in [pattern([S1_1], []), pattern([S1_0], [Y1_0])]:
            assert divergence_score(nb1, p, 1.0)[0] == 0.0

    def test_grid_search_cross_check(self, nb1):
        oracle = JointOracle(nb1)
        for p, delta in [(pattern([S1_1], [Y1_1]), 0.1),
                         (pattern([S1_0], []), 0.05),
                         (pattern([S1_1], [Y1_0]), 0.2)]:
            kl, _ = divergence_score(nb1, p, delta)
            grid = oracle.divergence_grid(p.x, p.y, delta)
            assert grid is not None
            # the 1e-6 grid can only sit at or slightly above the optimum
            assert kl <= grid + 1e-9
            assert grid - kl < 1e-5

    def test_zero_iff_gap_within(self, nb1, corpus):
        oracle_targets = [nb1, corpus[0].circuit]
        for c in oracle_targets:
            oracle = JointOracle(c)
            feats = c.schema.feature_indices()
            sens = sorted(c.schema.sensitive_indices)
            pats = [pattern([(sens[0], 1)], []),
                    pattern([(sens[0], 0)], [(feats[-1], 1)])]
            for p in pats:
                d = discrimination_score(c, p)
                for delta in (0.01, 0.05, 0.1, 0.25):
                    kl, _ = divergence_score(c, p, delta)
                    assert (kl == 0.0) == (d <= delta)

    def test_repair_is_valid_distribution(self, nb1):
        oracle = JointOracle(nb1)
        for p, delta in [(pattern([S1_1], [Y1_1]), 0.1),
                         (pattern([S1_0], []), 0.2),
                         (pattern([S1_1], [Y1_0]), 0.05)]:
            kl, alpha = divergence_score(nb1, p, delta)
            if kl > 0.0:
                oracle.repair_check(p.x, p.y, delta, alpha, tol=1e-6)

    def test_score_pattern_bundle(self, nb1):
        sp = score_pattern(nb1, pattern([S1_1], [Y1_1]), delta=0.1,
                           with_divergence=True, with_relative=True)
        assert sp.delta == approx(abs(6 / 7 - 0.6), abs=1e-12)
        assert sp.probability == approx(0.28, abs=1e-12)
        assert sp.divergence == approx(0.079248, abs=1e-5)
        assert sp.relative == approx((6 / 7) / 0.6, abs=1e-9)
