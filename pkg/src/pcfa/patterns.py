"""Pattern types and lattice helpers.

A pattern is a pair of partial assignments: x over sensitive variables, y over
any other features (sensitive variables may also land in y, but never in both
parts at once).  Extensions add one (variable, value) pair; contractions drop
one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

from .circuit import Assignment, Schema
from .errors import SchemaError


@dataclass(frozen=True)
class Pattern:
    x: Assignment
    y: Assignment

    def check(self, schema: Schema) -> None:
        xv = {v for v, _ in self.x}
        yv = {v for v, _ in self.y}
        if xv & yv:
            raise SchemaError("pattern parts overlap")
        bad = xv - schema.sensitive_indices
        if bad:
            raise SchemaError(f"non-sensitive variables {sorted(bad)} in the sensitive part")

    @property
    def size(self) -> int:
        return len(self.x) + len(self.y)

    def assigned_vars(self) -> frozenset:
        return frozenset(v for v, _ in self.x) | frozenset(v for v, _ in self.y)

    def union(self) -> Assignment:
        return tuple(sorted(self.x + self.y))

    def key(self) -> Tuple[Assignment, Assignment]:
        return (self.x, self.y)

    def is_complete(self, schema: Schema) -> bool:
        return self.size == len(schema.variables) - 1

    def extends(self, other: "Pattern") -> bool:
        """True when self is a (weak) extension of other: part-wise superset."""
        return set(other.x) <= set(self.x) and set(other.y) <= set(self.y)


def pattern(x, y) -> Pattern:
    return Pattern(tuple(sorted(x)), tuple(sorted(y)))


@dataclass(frozen=True)
class ScoredPattern:
    pattern: Pattern
    delta: float
    probability: float
    divergence: Optional[float] = None
    relative: Optional[float] = None

    def sort_key(self):
        """Deterministic tie order: probability descending, then lexicographic."""
        return (-self.probability, self.pattern.key())


@dataclass
class PatternSet:
    """A mined pattern collection plus how it was produced.

    complete=True means the set is exactly {(x,y): delta > threshold}; sampled
    sets are partial and summaries over them are only relative to the set.
    """

    patterns: List[ScoredPattern]
    delta: float
    complete: bool
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.patterns)

    def __iter__(self):
        return iter(self.patterns)

    def by_key(self) -> dict:
        return {sp.pattern.key(): sp for sp in self.patterns}

    def keys(self) -> set:
        return {sp.pattern.key() for sp in self.patterns}


def immediate_extensions(schema: Schema, p: Pattern) -> Iterator[Pattern]:
    """Single-variable extensions; sensitive free variables go to either part,
    non-sensitive only to y.  Deterministic order: variable, then value, with
    the x placement before the y placement."""
    assigned = p.assigned_vars()
    for var in schema.feature_indices():
        if var in assigned:
            continue
        arity = schema.variables[var].arity
        sensitive = var in schema.sensitive_indices
        for val in range(arity):
            if sensitive:
                yield Pattern(tuple(sorted(p.x + ((var, val),))), p.y)
            yield Pattern(p.x, tuple(sorted(p.y + ((var, val),))))


def immediate_contractions(p: Pattern) -> Iterator[Pattern]:
    """Patterns obtained by dropping one assigned pair (either part)."""
    for i in range(len(p.x)):
        yield Pattern(p.x[:i] + p.x[i + 1:], p.y)
    for i in range(len(p.y)):
        yield Pattern(p.x, p.y[:i] + p.y[i + 1:])


def format_assignment(schema: Schema, a: Assignment) -> str:
    return "&".join(f"{schema.variables[v].name}={schema.variables[v].labels[val]}"
                    for v, val in a)


def parse_assignment(schema: Schema, text: str) -> Assignment:
    if not text:
        return ()
    pairs = []
    for item in text.split("&"):
        name, _, label = item.partition("=")
        var = schema.var_by_name(name)
        labels = schema.variables[var].labels
        if label not in labels:
            raise SchemaError(f"unknown value {label!r} for variable {name}")
        pairs.append((var, labels.index(label)))
    return tuple(sorted(pairs))
