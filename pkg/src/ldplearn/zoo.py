"""Small named concept classes used by experiments and tests.

Domain points are strings so datasets survive CSV round-trips unchanged.
Concept names are zero-padded, which makes lexicographic tie-breaking in
the learners coincide with index order.
"""

from __future__ import annotations

import itertools

import numpy as np

from .model import ConceptClass

ZOO_NAMES = ("thresholds", "points", "parities", "conjunctions")


def thresholds(n: int) -> ConceptClass:
    """Thresholds on {1..n}: t_k(x) = +1 iff x <= k, for k = 0..n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    domain = tuple(str(i) for i in range(1, n + 1))
    width = len(str(n))
    concepts = {
        f"t{k:0{width}d}": [1.0 if i <= k else -1.0 for i in range(1, n + 1)]
        for k in range(n + 1)
    }
    return ConceptClass(domain, concepts)


def points(n: int) -> ConceptClass:
    """Point functions on {1..n}: +1 at one point, -1 elsewhere."""
    if n < 1:
        raise ValueError("n must be >= 1")
    domain = tuple(str(i) for i in range(1, n + 1))
    width = len(str(n))
    eye = 2.0 * np.eye(n) - 1.0
    return ConceptClass(
        domain, {f"p{k:0{width}d}": eye[k - 1] for k in range(1, n + 1)}
    )


def _cube(k: int) -> tuple:
    return tuple("".join(bits) for bits in itertools.product("01", repeat=k))


def parities(k: int) -> ConceptClass:
    """All parity functions over {0,1}^k, k <= 4."""
    if not 1 <= k <= 4:
        raise ValueError("k must be in 1..4")
    domain = _cube(k)
    concepts = {}
    for subset in itertools.product("01", repeat=k):
        concepts["s" + "".join(subset)] = [
            (-1.0) ** sum(int(s) * int(x) for s, x in zip(subset, point))
            for point in domain
        ]
    return ConceptClass(domain, concepts)


def conjunctions(k: int) -> ConceptClass:
    """Conjunctions of literals over {0,1}^k: each variable is required
    true (1), required false (0), or free (-); k <= 4."""
    if not 1 <= k <= 4:
        raise ValueError("k must be in 1..4")
    domain = _cube(k)
    concepts = {}
    for pattern in itertools.product("01-", repeat=k):
        concepts["c" + "".join(pattern)] = [
            1.0 if all(p == "-" or p == x for p, x in zip(pattern, point)) else -1.0
            for point in domain
        ]
    return ConceptClass(domain, concepts)


def negation_closure(cls: ConceptClass) -> ConceptClass:
    """Add the pointwise negation of every concept not already present."""
    concepts = {name: cls.vector(name) for name in cls.concept_names}
    existing = {tuple(v) for v in cls.vectors()}
    for name in cls.concept_names:
        neg = -cls.vector(name)
        if tuple(neg) not in existing:
            existing.add(tuple(neg))
            concepts[f"neg-{name}"] = neg
    return ConceptClass(cls.domain, concepts)


def make_class(name: str, size: int) -> ConceptClass:
    """Resolve a zoo spec like ('thresholds', 4) or ('negation-closure:points', 2)."""
    if name.startswith("negation-closure:"):
        return negation_closure(make_class(name.split(":", 1)[1], size))
    builders = {
        "thresholds": thresholds,
        "points": points,
        "parities": parities,
        "conjunctions": conjunctions,
    }
    if name not in builders:
        raise ValueError(f"unknown concept class {name!r}")
    return builders[name](size)
