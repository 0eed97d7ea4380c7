"""Finite concept classes, labeled distributions, datasets and elementary norms.

Everything here is plain dense numpy with string (or tuple-of-string) labels
attached, so that matrices indexed by concepts, concept pairs, points, or
labeled points keep their semantics through serialization.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

PROB_TOL = 1e-12
LABELS = (1, -1)

Label = object  # str or nested tuple of str/int; must be hashable


class DomainMismatchError(ValueError):
    """A hypothesis, record or distribution refers to unknown points."""


def _as_label_tuple(labels: Iterable) -> tuple:
    out = tuple(_freeze(l) for l in labels)
    if len(set(out)) != len(out):
        raise ValueError("labels must be unique")
    return out


def _freeze(label):
    if isinstance(label, list):
        return tuple(_freeze(x) for x in label)
    return label


@dataclass(frozen=True)
class ConceptClass:
    """A finite domain together with named sign vectors over it."""

    domain: tuple
    concept_names: tuple
    _vectors: np.ndarray = field(repr=False)  # shape (|C|, |X|), entries +-1

    def __init__(self, domain, concepts: Mapping):
        object.__setattr__(self, "domain", _as_label_tuple(domain))
        if len(self.domain) < 1:
            raise ValueError("domain must be nonempty")
        names = tuple(concepts)
        if len(names) < 1:
            raise ValueError("need at least one concept")
        if len(set(names)) != len(names):
            raise ValueError("concept names must be unique")
        vecs = np.asarray([list(concepts[n]) for n in names], dtype=float)
        if vecs.shape != (len(names), len(self.domain)):
            raise ValueError("every concept vector must have length |domain|")
        if not np.all(np.abs(vecs) == 1):
            raise ValueError("concept entries must be +-1")
        if len({tuple(v) for v in vecs.astype(int)}) != len(names):
            raise ValueError("duplicate concept vectors")
        object.__setattr__(self, "concept_names", names)
        object.__setattr__(self, "_vectors", vecs)
        self._vectors.setflags(write=False)

    @property
    def num_concepts(self) -> int:
        return len(self.concept_names)

    @property
    def num_points(self) -> int:
        return len(self.domain)

    def vector(self, name) -> np.ndarray:
        return self._vectors[self.concept_names.index(name)]

    def vectors(self) -> np.ndarray:
        return self._vectors

    def value(self, name, point) -> int:
        return int(self._vectors[self.concept_names.index(name), self.domain.index(point)])

    def hypothesis(self, hyp) -> np.ndarray:
        """Coerce a hypothesis (concept name, mapping point->label, or sign
        vector over the domain) to an array aligned with ``domain``."""
        if isinstance(hyp, str) and hyp in self.concept_names:
            return self.vector(hyp)
        return hypothesis_vector(self.domain, hyp)

    def is_negation_closed(self) -> bool:
        rows = {tuple(v) for v in self._vectors.astype(int)}
        return all(tuple(-np.asarray(r)) in rows for r in rows)


def hypothesis_vector(domain: Sequence, hyp) -> np.ndarray:
    """Coerce ``hyp`` to a +-1 vector aligned with ``domain``."""
    if isinstance(hyp, Mapping):
        try:
            vec = np.asarray([hyp[x] for x in domain], dtype=float)
        except KeyError as e:
            raise DomainMismatchError(f"hypothesis undefined at {e.args[0]!r}")
    else:
        vec = np.asarray(list(hyp), dtype=float)
        if vec.shape != (len(domain),):
            raise DomainMismatchError("hypothesis length does not match domain")
    if not np.all(np.abs(vec) == 1):
        raise ValueError("hypothesis entries must be +-1")
    return vec


@dataclass(frozen=True)
class IndexedMatrix:
    """Dense real matrix whose rows and columns carry semantic labels."""

    row_labels: tuple
    col_labels: tuple
    entries: np.ndarray = field(repr=False)

    def __init__(self, row_labels, col_labels, entries):
        object.__setattr__(self, "row_labels", _as_label_tuple(row_labels))
        object.__setattr__(self, "col_labels", _as_label_tuple(col_labels))
        arr = np.asarray(entries, dtype=float)
        if arr.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValueError(
                f"entries shape {arr.shape} does not match labels "
                f"({len(self.row_labels)}, {len(self.col_labels)})"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("entries must be finite")
        object.__setattr__(self, "entries", arr)
        self.entries.setflags(write=False)

    @property
    def shape(self):
        return self.entries.shape

    def row(self, label) -> np.ndarray:
        return self.entries[self.row_labels.index(label)]

    def with_entries(self, entries) -> "IndexedMatrix":
        return IndexedMatrix(self.row_labels, self.col_labels, entries)

    def to_json(self) -> dict:
        return {
            "row_labels": [_jsonable(l) for l in self.row_labels],
            "col_labels": [_jsonable(l) for l in self.col_labels],
            "entries": [float(v) for v in self.entries.ravel()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "IndexedMatrix":
        rows = [_freeze(l) for l in obj["row_labels"]]
        cols = [_freeze(l) for l in obj["col_labels"]]
        arr = np.asarray(obj["entries"], dtype=float).reshape(len(rows), len(cols))
        return cls(rows, cols, arr)


def _jsonable(label):
    if isinstance(label, tuple):
        return [_jsonable(x) for x in label]
    return label


@dataclass(frozen=True)
class LabeledDistribution:
    """Probability table over domain x {+1, -1}.

    ``probs`` has shape (|X|, 2); column 0 holds the mass of label +1 and
    column 1 the mass of label -1.
    """

    domain: tuple
    probs: np.ndarray = field(repr=False)

    def __init__(self, domain, probs):
        object.__setattr__(self, "domain", _as_label_tuple(domain))
        arr = np.asarray(probs, dtype=float)
        if arr.shape != (len(self.domain), 2):
            raise ValueError("probs must have shape (|domain|, 2)")
        if np.any(arr < -PROB_TOL):
            raise ValueError("probabilities must be nonnegative")
        arr = np.clip(arr, 0.0, None)
        total = arr.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, not 1")
        if abs(total - 1.0) > PROB_TOL:
            arr = arr / total
        object.__setattr__(self, "probs", arr)
        self.probs.setflags(write=False)

    def prob(self, point, label) -> float:
        return float(self.probs[self.domain.index(point), 0 if label == 1 else 1])

    def marginal(self) -> np.ndarray:
        """Marginal on the domain, aligned with ``domain``."""
        return self.probs.sum(axis=1)

    def flip_labels(self) -> "LabeledDistribution":
        return LabeledDistribution(self.domain, self.probs[:, ::-1])

    def mix(self, other: "LabeledDistribution", weight: float) -> "LabeledDistribution":
        """Return ``weight * self + (1 - weight) * other``."""
        if other.domain != self.domain:
            raise DomainMismatchError("mixture requires identical domains")
        return LabeledDistribution(self.domain, weight * self.probs + (1 - weight) * other.probs)

    def to_json(self) -> dict:
        return {
            "domain": [_jsonable(x) for x in self.domain],
            "probs": [
                [_jsonable(x), int(y), float(self.probs[i, j])]
                for i, x in enumerate(self.domain)
                for j, y in enumerate(LABELS)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LabeledDistribution":
        domain = [_freeze(x) for x in obj["domain"]]
        idx = {x: i for i, x in enumerate(domain)}
        arr = np.zeros((len(domain), 2))
        for point, label, p in obj["probs"]:
            arr[idx[_freeze(point)], 0 if label == 1 else 1] = p
        return cls(domain, arr)

    @classmethod
    def from_table(cls, domain, table: Mapping) -> "LabeledDistribution":
        """Build from a mapping (point, label) -> probability."""
        domain = _as_label_tuple(domain)
        arr = np.zeros((len(domain), 2))
        for (point, label), p in table.items():
            arr[domain.index(point), 0 if label == 1 else 1] = p
        return cls(domain, arr)

    @classmethod
    def point_mass(cls, domain, point, label) -> "LabeledDistribution":
        return cls.from_table(domain, {(point, label): 1.0})

    @classmethod
    def labeled_by(cls, domain, marginal, labeling) -> "LabeledDistribution":
        """Distribution with the given marginal, deterministically labeled."""
        domain = _as_label_tuple(domain)
        vec = hypothesis_vector(domain, labeling)
        marg = np.asarray(marginal, dtype=float)
        arr = np.zeros((len(domain), 2))
        arr[vec > 0, 0] = marg[vec > 0]
        arr[vec < 0, 1] = marg[vec < 0]
        return cls(domain, arr)


@dataclass(frozen=True)
class Dataset:
    """Labeled records over a declared domain."""

    domain: tuple
    records: tuple  # of (point, label)

    def __init__(self, domain, records):
        object.__setattr__(self, "domain", _as_label_tuple(domain))
        recs = tuple((_freeze(x), int(y)) for x, y in records)
        if len(recs) < 1:
            raise ValueError("dataset must contain at least one record")
        dom = set(self.domain)
        for x, y in recs:
            if x not in dom:
                raise DomainMismatchError(f"record point {x!r} not in domain")
            if y not in (1, -1):
                raise ValueError("labels must be +-1")
        object.__setattr__(self, "records", recs)

    def __len__(self) -> int:
        return len(self.records)

    def histogram(self) -> np.ndarray:
        """Counts over domain x {+1,-1}, shape (|X|, 2)."""
        idx = {x: i for i, x in enumerate(self.domain)}
        h = np.zeros((len(self.domain), 2))
        for x, y in self.records:
            h[idx[x], 0 if y == 1 else 1] += 1
        return h

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["point", "label"])
            for x, y in self.records:
                w.writerow([x, y])

    @classmethod
    def from_csv(cls, path, domain) -> "Dataset":
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        return cls(domain, [(r["point"], int(r["label"])) for r in rows])


@dataclass(frozen=True)
class WeightedIndex:
    """A probability distribution over an explicit finite label set."""

    support: tuple
    weights: np.ndarray = field(repr=False)

    def __init__(self, support, weights):
        object.__setattr__(self, "support", _as_label_tuple(support))
        arr = np.asarray(weights, dtype=float)
        if arr.shape != (len(self.support),):
            raise ValueError("weights must align with support")
        if np.any(arr < -PROB_TOL):
            raise ValueError("weights must be nonnegative")
        arr = np.clip(arr, 0.0, None)
        total = arr.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total}, not 1")
        if abs(total - 1.0) > PROB_TOL:
            arr = arr / total
        object.__setattr__(self, "weights", arr)
        self.weights.setflags(write=False)

    def weight(self, label) -> float:
        return float(self.weights[self.support.index(label)])

    def restrict(self, labels: Iterable) -> "WeightedIndex":
        """Condition on membership in ``labels`` (renormalizes)."""
        keep = set(_freeze(l) for l in labels)
        sel = [i for i, l in enumerate(self.support) if l in keep]
        if not sel:
            raise ValueError("restriction has empty support")
        w = self.weights[sel]
        return WeightedIndex([self.support[i] for i in sel], w / w.sum())


# ---------------------------------------------------------------------------
# Matrix constructions


def labeled_point_columns(domain) -> list:
    """Column labels for matrices over X x {+1,-1}: (x,+1),(x,-1) per point."""
    return [(x, y) for x in domain for y in LABELS]


def build_concept_matrix(cls: ConceptClass) -> IndexedMatrix:
    """Rows indexed by concepts, columns by points, entry (c,x) = c(x)."""
    return IndexedMatrix(cls.concept_names, cls.domain, cls.vectors())


def build_difference_matrix(cls: ConceptClass) -> IndexedMatrix:
    """Rows indexed by ordered concept pairs, entry = (c(x) - c'(x)) / 2."""
    V = cls.vectors()
    pairs = [(a, b) for a in cls.concept_names for b in cls.concept_names]
    rows = [(V[cls.concept_names.index(a)] - V[cls.concept_names.index(b)]) / 2 for a, b in pairs]
    return IndexedMatrix(pairs, cls.domain, np.asarray(rows))


def build_loss_query_matrix(cls: ConceptClass) -> IndexedMatrix:
    """Rows by concepts, columns by labeled points; entry = 1 iff c(x) != y."""
    cols = labeled_point_columns(cls.domain)
    V = cls.vectors()
    entries = np.zeros((cls.num_concepts, len(cols)))
    for j, (x, y) in enumerate(cols):
        entries[:, j] = (1 - y * V[:, cls.domain.index(x)]) / 2
    return IndexedMatrix(cls.concept_names, cols, entries)


def build_sign_query_matrix(cls: ConceptClass) -> IndexedMatrix:
    """Rows by concepts, columns by labeled points; entry = y * c(x).

    The expectation of row c under a distribution P equals 1 - 2*loss_P(c),
    so answering these queries recovers all losses after an affine shift.
    """
    cols = labeled_point_columns(cls.domain)
    V = cls.vectors()
    entries = np.zeros((cls.num_concepts, len(cols)))
    for j, (x, y) in enumerate(cols):
        entries[:, j] = y * V[:, cls.domain.index(x)]
    return IndexedMatrix(cls.concept_names, cols, entries)


# ---------------------------------------------------------------------------
# Losses and sampling


def population_loss(dist: LabeledDistribution, hyp) -> float:
    """Probability under ``dist`` that the hypothesis mislabels the point."""
    vec = hypothesis_vector(dist.domain, hyp)
    # mass where hyp disagrees with the drawn label
    return float(np.where(vec > 0, dist.probs[:, 1], dist.probs[:, 0]).sum())


def empirical_loss(data: Dataset, hyp) -> float:
    vec = hypothesis_vector(data.domain, hyp)
    h = data.histogram()
    wrong = np.where(vec > 0, h[:, 1], h[:, 0]).sum()
    return float(wrong / len(data))


def bayes_error(dist: LabeledDistribution) -> float:
    """Minimum population loss over all hypotheses (pointwise label minimum)."""
    return float(np.minimum(dist.probs[:, 0], dist.probs[:, 1]).sum())


def majority_hypothesis(dist: LabeledDistribution) -> np.ndarray:
    """Pointwise-majority labeling; attains the Bayes error."""
    return np.where(dist.probs[:, 0] >= dist.probs[:, 1], 1.0, -1.0)


def sample(dist: LabeledDistribution, n: int, seed: int) -> Dataset:
    """Draw n i.i.d. labeled records; deterministic given seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    flat = dist.probs.ravel()
    idx = rng.choice(len(flat), size=n, p=flat / flat.sum())
    records = [(dist.domain[i // 2], LABELS[i % 2]) for i in idx]
    return Dataset(dist.domain, records)


# ---------------------------------------------------------------------------
# Elementary norms


def elementary_norms(M: IndexedMatrix) -> dict:
    A = M.entries
    return {
        "norm_1_to_inf": float(np.max(np.abs(A))) if A.size else 0.0,
        "norm_1_to_2": float(np.max(np.linalg.norm(A, axis=0))),
        "norm_2_to_inf": float(np.max(np.linalg.norm(A, axis=1))),
    }


BRUTE_FORCE_CAP = 22


def sign_vectors(m: int) -> np.ndarray:
    """All 2^(m-1) sign vectors with first entry +1 (the rest follow by symmetry)."""
    k = m - 1
    bits = ((np.arange(2**k)[:, None] >> np.arange(k)) & 1) * 2 - 1
    return np.hstack([np.ones((2**k, 1)), bits])


def operator_norm_inf_to_l2(
    M: IndexedMatrix,
    pi: WeightedIndex,
    *,
    cap: int = BRUTE_FORCE_CAP,
    sampled: bool = False,
    num_samples: int = 20000,
    seed: int = 0,
) -> float:
    """The ell_inf -> L2(pi) operator norm, exact by vertex enumeration.

    The squared objective is convex in f, so the maximum over the ell_inf
    ball is attained at a +-1 vertex. Above ``cap`` columns pass
    ``sampled=True`` for a random-vertex lower bound instead.
    """
    if set(pi.support) != set(M.row_labels):
        raise ValueError("pi must index the rows of M")
    w = np.asarray([pi.weight(l) for l in M.row_labels])
    A = M.entries
    m = A.shape[1]
    if not sampled:
        if m > cap:
            raise ValueError(
                f"{m} columns exceeds the brute-force cap {cap}; "
                "pass sampled=True for a sampled lower bound"
            )
        F = sign_vectors(m)
    else:
        rng = np.random.default_rng(seed)
        F = rng.choice([-1.0, 1.0], size=(num_samples, m))
    best = 0.0
    # chunk to bound memory at large m
    for i in range(0, len(F), 1 << 14):
        G = A @ F[i : i + (1 << 14)].T  # rows x vertices
        vals = w @ (G * G)
        best = max(best, float(vals.max()))
    return math.sqrt(best)


# ---------------------------------------------------------------------------
# Serialization helpers


def dump_json(obj, path) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def load_json(path):
    with open(path) as f:
        return json.load(f)
