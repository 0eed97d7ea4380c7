"""Non-interactive epsilon-LDP protocol execution and exact diagnostics.

Two local randomizers are provided. ``coord-rr`` samples one coordinate of
the per-record factor column and releases a randomized-response bit for it,
so its whole channel is a finite table that can be enumerated exactly for
privacy audits and KL computations. ``laplace-l1`` releases the full column
with Laplace noise calibrated to the worst-case ell1 column distance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .model import Dataset, IndexedMatrix, LabeledDistribution

KINDS = ("coord-rr", "laplace-l1")


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float

    def __post_init__(self):
        if not 0 < self.epsilon <= 8:
            raise ValueError("epsilon must be in (0, 8]")

    @property
    def flip_prob(self) -> float:
        return 1.0 / (1.0 + math.exp(self.epsilon))


@dataclass(frozen=True)
class RandomizerSpec:
    """A local randomizer realizing one factor of a query factorization."""

    kind: str
    A: IndexedMatrix

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown randomizer kind {self.kind!r}")

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @cached_property
    def max_entry(self) -> float:
        return float(np.max(np.abs(self.A.entries)))

    @cached_property
    def l1_diameter(self) -> float:
        """Max ell1 distance between two columns (the laplace sensitivity)."""
        cols = self.A.entries.T
        best = 0.0
        for i in range(len(cols)):
            dist = np.abs(cols[i + 1 :] - cols[i]).sum(axis=1)
            if dist.size:
                best = max(best, float(dist.max()))
        return best

    def column_index(self, record) -> int:
        try:
            return self.A.col_labels.index(record)
        except ValueError:
            raise KeyError(f"record {record!r} has no column in the factor matrix")

    def decode_scale(self, params: PrivacyParams) -> float:
        e = math.exp(params.epsilon)
        return self.d * self.max_entry * (e + 1) / (e - 1)


@dataclass(frozen=True)
class ChannelDistribution:
    """Exact distribution over the discrete message symbols."""

    symbols: tuple
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        total = self.probs.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"channel probabilities sum to {total}")


def coord_rr_symbols(spec: RandomizerSpec) -> tuple:
    return tuple((j, b) for j in range(spec.d) for b in (1, -1))


def _bit_prob_plus(v: np.ndarray, m: float, params: PrivacyParams) -> np.ndarray:
    """P[released bit = +1] for clamped coordinate values v."""
    if m == 0:
        return np.full_like(np.asarray(v, dtype=float), 0.5)
    v = np.clip(v, -m, m)
    shrink = 1.0 - 2.0 * params.flip_prob  # (e^eps - 1)/(e^eps + 1)
    return (1.0 + shrink * v / m) / 2.0


def randomize(spec: RandomizerSpec, record, params: PrivacyParams, seed: int):
    """Produce one private message for one record."""
    col = spec.column_index(record)
    rng = np.random.default_rng(seed)
    if spec.kind == "coord-rr":
        j = int(rng.integers(spec.d))
        v = spec.A.entries[j, col]
        # two-stage: round to a bit, then flip with the RR probability
        m = spec.max_entry
        p_plus = (1 + (np.clip(v, -m, m) / m if m else 0.0)) / 2
        b0 = 1 if rng.random() < p_plus else -1
        b = -b0 if rng.random() < params.flip_prob else b0
        return (j, b)
    noise = rng.laplace(scale=spec.l1_diameter / params.epsilon, size=spec.d)
    return spec.A.entries[:, col] + noise


def unbiased_decode(msg, spec: RandomizerSpec, params: PrivacyParams) -> np.ndarray:
    """Map a message to a vector whose expectation is the true factor column."""
    if spec.kind == "coord-rr":
        j, b = msg
        out = np.zeros(spec.d)
        out[j] = spec.decode_scale(params) * b
        return out
    msg = np.asarray(msg, dtype=float)
    if msg.shape != (spec.d,):
        raise ValueError("message length does not match the factor dimension")
    return msg


def coord_rr_channel(spec: RandomizerSpec, params: PrivacyParams) -> np.ndarray:
    """Exact message table, shape (2d symbols, columns of A)."""
    if spec.kind != "coord-rr":
        raise ValueError("channel enumeration requires the coord-rr kind")
    m = spec.max_entry
    P = np.zeros((2 * spec.d, len(spec.A.col_labels)))
    for j in range(spec.d):
        p_plus = _bit_prob_plus(spec.A.entries[j], m, params)
        P[2 * j] = p_plus / spec.d
        P[2 * j + 1] = (1 - p_plus) / spec.d
    return P


@dataclass(frozen=True)
class AuditResult:
    max_log_ratio: float
    analytic: bool  # True when certified by calibration, not enumeration


def audit_privacy(spec: RandomizerSpec, params: PrivacyParams) -> AuditResult:
    """Worst-case log probability ratio over all message symbols and inputs."""
    if spec.kind == "laplace-l1":
        return AuditResult(max_log_ratio=params.epsilon, analytic=True)
    P = coord_rr_channel(spec, params)
    logP = np.log(P)
    ratio = float(np.max(logP.max(axis=1) - logP.min(axis=1)))
    return AuditResult(max_log_ratio=ratio, analytic=False)


def channel_marginal(
    spec: RandomizerSpec, params: PrivacyParams, dist: LabeledDistribution
) -> ChannelDistribution:
    """Per-user message distribution when the input is drawn from ``dist``."""
    P = coord_rr_channel(spec, params)
    weights = np.zeros(P.shape[1])
    for i, x in enumerate(dist.domain):
        for j, y in enumerate((1, -1)):
            p = dist.probs[i, j]
            if p:
                weights[spec.column_index((x, y))] += p
    return ChannelDistribution(coord_rr_symbols(spec), P @ weights)


def transcript_kl(
    dist_a: LabeledDistribution,
    dist_b: LabeledDistribution,
    spec: RandomizerSpec,
    params: PrivacyParams,
    n: int,
) -> float:
    """Exact KL divergence between the n-user transcript distributions.

    The transcript is a product of i.i.d. per-user messages, so the KL is n
    times the single-message KL between the channel marginals.
    """
    pa = channel_marginal(spec, params, dist_a).probs
    pb = channel_marginal(spec, params, dist_b).probs
    return n * discrete_kl(pa, pb)


def discrete_kl(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((p > 0) & (q == 0)):
        return math.inf
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def tv_distance(p, q) -> float:
    """Half the ell1 distance, for channel or labeled distributions."""
    if isinstance(p, ChannelDistribution) and isinstance(q, ChannelDistribution):
        if p.symbols != q.symbols:
            raise ValueError("channel distributions use different symbol sets")
        return float(np.abs(p.probs - q.probs).sum() / 2)
    if isinstance(p, LabeledDistribution) and isinstance(q, LabeledDistribution):
        if p.domain != q.domain:
            raise ValueError("distributions use different domains")
        return float(np.abs(p.probs - q.probs).sum() / 2)
    raise TypeError("p and q must be two channel or two labeled distributions")


def run_protocol(
    data: Dataset,
    R: IndexedMatrix,
    spec: RandomizerSpec,
    params: PrivacyParams,
    seed: int,
    *,
    noise_free: bool = False,
    transcript_path=None,
) -> dict:
    """One full non-interactive round: randomize every record, decode, and
    post-process the average through the left factor R.

    ``noise_free`` is a test hook that replaces every decoded message by the
    exact factor column; it is not reachable from the CLI.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    if R.col_labels != spec.A.row_labels:
        raise ValueError("R columns must align with the factor rows of A")
    n = len(data)
    col_of = {lab: i for i, lab in enumerate(spec.A.col_labels)}
    try:
        cols = np.fromiter((col_of[r] for r in data.records), dtype=int, count=n)
    except KeyError as e:
        raise KeyError(f"record {e.args[0]!r} has no column in the factor matrix")
    rng = np.random.default_rng(seed)

    if noise_free:
        mean_vec = spec.A.entries[:, cols].mean(axis=1)
    elif spec.kind == "coord-rr":
        j = rng.integers(spec.d, size=n)
        v = spec.A.entries[j, cols]
        b0 = np.where(rng.random(n) < _bit_prob_plus(v, spec.max_entry, _NO_FLIP), 1, -1)
        flip = rng.random(n) < params.flip_prob
        b = np.where(flip, -b0, b0)
        sums = np.bincount(j, weights=b, minlength=spec.d)
        mean_vec = spec.decode_scale(params) * sums / n
        if transcript_path is not None:
            _dump_transcript(transcript_path, [f"{jj}:{bb:+d}" for jj, bb in zip(j, b)])
    else:
        noise = rng.laplace(scale=spec.l1_diameter / params.epsilon, size=(spec.d, n))
        msgs = spec.A.entries[:, cols] + noise
        mean_vec = msgs.mean(axis=1)
        if transcript_path is not None:
            _dump_transcript(
                transcript_path, [";".join(f"{x:.9g}" for x in msgs[:, i]) for i in range(n)]
            )
    answers = R.entries @ mean_vec
    return {lab: float(a) for lab, a in zip(R.row_labels, answers)}


class _InfiniteEpsilon:
    """Stand-in with flip probability zero for the pre-flip rounding step."""

    flip_prob = 0.0


_NO_FLIP = _InfiniteEpsilon()


def _dump_transcript(path, symbols) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["record_index", "message_symbol"])
        for i, s in enumerate(symbols):
            w.writerow([i, s])
