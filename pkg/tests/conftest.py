"""Shared fixtures: the hand-traced NB1 circuit, special-purpose compiled
models, and the randomized instance corpus the acceptance suite sweeps."""

from __future__ import annotations

import random

import pytest

from pcfa import Dataset, LearnConfig, learn_chow_liu, learn_naive_bayes, parse_circuit
from pcfa.circuit import Schema, Variable

from oracles import JointOracle, make_binary_nb_circuit

NB1_TEXT = """\
pc v1
var 0 D 2 neg pos
var 1 S1 2 v0 v1
var 2 Y1 2 v0 v1
decision 0 pos
sensitive 1
L 0 0 1
L 1 0 0
L 2 1 1
L 3 1 0
L 4 2 1
L 5 2 0
S 6 2 2 0.8 3 0.2
S 7 2 4 0.6 5 0.4
S 8 2 2 0.2 3 0.8
S 9 2 4 0.4 5 0.6
P 10 3 0 6 7
P 11 3 1 8 9
S 12 2 10 0.5 11 0.5
root 12
"""


@pytest.fixture
def nb1_text():
    return NB1_TEXT


@pytest.fixture
def nb1():
    return parse_circuit(NB1_TEXT)


def random_dataset(seed: int, n_feats: int, n_sens: int, n_rows: int = 250) -> Dataset:
    """Binary features drawn with class-dependent frequencies."""
    rng = random.Random(seed)
    variables = [Variable("D", 2, ("no", "yes"))]
    for i in range(n_feats):
        variables.append(Variable(f"F{i}", 2, ("a", "b")))
    schema = Schema(tuple(variables), 0, 1, frozenset(range(1, 1 + n_sens)))
    prior = rng.uniform(0.3, 0.7)
    probs = [(rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)) for _ in range(n_feats)]
    rows = []
    for _ in range(n_rows):
        d = 1 if rng.random() < prior else 0
        row = [d]
        for i in range(n_feats):
            row.append(1 if rng.random() < probs[i][d] else 0)
        rows.append(tuple(row))
    # guarantee both classes appear
    rows[0] = (0,) + rows[0][1:]
    rows[1] = (1,) + rows[1][1:]
    ds = Dataset(schema, rows)
    ds.check()
    return ds


class Instance:
    """One corpus entry; the oracle is built on first use and cached."""

    def __init__(self, name: str, circuit, structure: str):
        self.name = name
        self.circuit = circuit
        self.structure = structure
        self._oracle = None

    @property
    def oracle(self) -> JointOracle:
        if self._oracle is None:
            self._oracle = JointOracle(self.circuit)
        return self._oracle

    @property
    def scored(self):
        """Oracle's full (x, y, delta, probability) list.

        Recomputed per call: corpus-wide these lists run to hundreds of
        megabytes, so callers hold them only as long as they need them."""
        return self.oracle.all_scored()


def build_corpus():
    """100 compiled circuits: 6-10 binary features, 2-4 sensitive, NB and
    Chow-Liu alternating, all parameters drawn from per-instance seeds."""
    sizes = [6] * 35 + [7] * 30 + [8] * 20 + [9] * 10 + [10] * 5
    out = []
    for i, n in enumerate(sizes):
        rng = random.Random(1000 + i)
        if n <= 6:
            n_sens = rng.choice([2, 3, 4])
        elif n <= 8:
            n_sens = rng.choice([2, 3])
        else:
            n_sens = 2
        ds = random_dataset(seed=2000 + i, n_feats=n, n_sens=n_sens)
        structure = "nb" if i % 2 == 0 else "chowliu"
        cfg = LearnConfig(smoothing=1.0, structure=structure)
        c = learn_naive_bayes(ds, cfg) if structure == "nb" else learn_chow_liu(ds, cfg)
        out.append(Instance(f"{structure}-{n}v{n_sens}s-{i}", c, structure))
    return out


@pytest.fixture(scope="session")
def corpus():
    return build_corpus()


@pytest.fixture(scope="session")
def seven_var_nb():
    """7 binary features (4 sensitive, 3 free), compiled NB with wide
    class-conditional spreads; the top-k and sampling benchmarks run on it."""
    ds = random_dataset(seed=777, n_feats=7, n_sens=4, n_rows=400)
    return learn_naive_bayes(ds, LearnConfig(smoothing=0.5, structure="nb"))


@pytest.fixture(scope="session")
def class_independent_nb():
    """Features carry no decision signal: both classes see identical counts,
    so every conditional matches and every pattern scores exactly zero."""
    variables = (Variable("D", 2, ("no", "yes")),
                 Variable("S1", 2, ("a", "b")),
                 Variable("F1", 2, ("a", "b")),
                 Variable("F2", 2, ("a", "b")))
    schema = Schema(variables, 0, 1, frozenset({1}))
    rows = []
    weights = []
    for combo_id in range(8):
        combo = ((combo_id >> 2) & 1, (combo_id >> 1) & 1, combo_id & 1)
        for d in (0, 1):
            rows.append((d,) + combo)
            weights.append(float(1 + combo_id))  # same weight in both classes
    ds = Dataset(schema, rows, weights)
    ds.check()
    return learn_naive_bayes(ds, LearnConfig(smoothing=1.0, structure="nb"))


@pytest.fixture(scope="session")
def sp_gap_nb():
    """Statistical parity looks clean (prior sits on the flat part of the
    sigmoid) while conditioning on the strong feature recenters the decision
    and exposes a large-gap pattern."""
    return make_binary_nb_circuit(
        prior_pos=0.9975273768433653,            # 1 / (1 + e^-6)
        cond={"S1": (0.7310585786300049, 0.2689414213699951),
              "Y1": (0.002, 0.806857587448518)},  # logit swing of about -6
        sensitive=["S1"],
    )
