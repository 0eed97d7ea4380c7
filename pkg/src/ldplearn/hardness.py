"""Hard distribution families built from dual norm witnesses.

A dual witness of an approximate-norm program is converted into a family of
distribution pairs that any accurate private algorithm must distinguish, yet
whose private transcripts are close. Every finite identity the construction
promises (loss gaps, marginal equality, dual-norm contraction, mixing
identities) is verified in exact arithmetic on construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog

from .model import (
    BRUTE_FORCE_CAP,
    ConceptClass,
    IndexedMatrix,
    LabeledDistribution,
    WeightedIndex,
    bayes_error,
    labeled_point_columns,
    population_loss,
    sign_vectors,
)
from .norms import DualWitness, SdpSettings, gamma2_dual_value
from .protocol import PrivacyParams, RandomizerSpec, transcript_kl

EXACT_TOL = 1e-12


class ConstructionError(RuntimeError):
    """A hard-family precondition or verified identity failed."""


# ---------------------------------------------------------------------------
# Geometric binning


@dataclass(frozen=True)
class BinningResult:
    """A dyadic value bin converting an average gap into a uniform one."""

    S: tuple
    score: float  # pi(S) * min_{v in S} a_v
    bin_index: int
    levels: int
    cutoff: float


def geometric_binning(a, pi: WeightedIndex, beta: float) -> BinningResult:
    """Select the dyadic bin B_j = {v : a_v in (2^-(j+1), 2^-j]} maximizing
    pi(B_j) * 2^-(j+1), after discarding values at most beta.

    Guarantee: score >= (sum_v pi_v a_v - beta) / (2 * ceil(log2(1/beta))).
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must be in (0, 1]")
    if isinstance(a, dict):
        vals = np.array([a[v] for v in pi.support], dtype=float)
    else:
        vals = np.asarray(a, dtype=float)
    if vals.shape != (len(pi.support),):
        raise ValueError("values must align with the support of pi")
    if np.any((vals < 0) | (vals > 1)):
        raise ValueError("values must lie in [0, 1]")
    levels = max(1, math.ceil(math.log2(1 / beta)))
    keep = vals > beta
    if not np.any(keep):
        raise ConstructionError("mass below cutoff")
    best = None
    for j in range(levels):
        lo, hi = 2.0 ** -(j + 1), 2.0**-j
        members = keep & (vals > lo) & (vals <= hi)
        floor = pi.weights[members].sum() * lo
        if floor > 0 and (best is None or floor > best[0] + 0.0):
            best = (floor, j, members)
    floor, j, members = best
    S = tuple(v for v, m in zip(pi.support, members) if m)
    score = float(pi.weights[members].sum() * vals[members].min())
    return BinningResult(S, score, j, levels, beta)


# ---------------------------------------------------------------------------
# Agnostic families (from difference-matrix dual witnesses)


@dataclass(frozen=True)
class AgnosticHardFamily:
    """Per concept pair (c, c'): a pair of distributions with identical
    marginals and opposite labelings, weighted by the witness row masses."""

    cls: ConceptClass
    pi: WeightedIndex  # over supported (c, c') pairs
    lambdas: dict
    mus: dict
    U: IndexedMatrix  # rows = supported pairs, cols = points
    value: float  # sum over rows of <d_row, u_row>

    @property
    def gaps(self) -> dict:
        """Per pair: loss_lambda(c') - loss_lambda(c) (a value in [0, 1])."""
        out = {}
        for pair in self.pi.support:
            lam = self.lambdas[pair]
            out[pair] = population_loss(lam, self.cls.vector(pair[1])) - population_loss(
                lam, self.cls.vector(pair[0])
            )
        return out

    def verify(self, pure: bool = False) -> dict:
        """Exact construction identities; returns {check: (value, ok)}.

        The combined identity <d, u> = pi * (gap_lambda + gap_mu)/2 holds
        for any equal-marginal pair; with ``pure`` (mu is lambda with every
        label flipped, as built from a fresh witness) each gap separately
        equals <d, u>/pi.
        """
        report = {}
        worst_marg = worst_dot = worst_dot_l = worst_dot_m = worst_rec = 0.0
        for pair in self.pi.support:
            c, cp = pair
            lam, mu = self.lambdas[pair], self.mus[pair]
            w = self.pi.weight(pair)
            worst_marg = max(worst_marg, np.abs(lam.marginal() - mu.marginal()).max())
            u = self.U.row(pair)
            diff = lam.probs[:, 0] - mu.probs[:, 0]
            worst_rec = max(worst_rec, np.abs(u - w * diff).max())
            d = (self.cls.vector(c) - self.cls.vector(cp)) / 2
            dot = float(d @ u)
            gap_l = population_loss(lam, self.cls.vector(cp)) - population_loss(
                lam, self.cls.vector(c)
            )
            gap_m = population_loss(mu, self.cls.vector(c)) - population_loss(
                mu, self.cls.vector(cp)
            )
            worst_dot = max(worst_dot, abs(dot - w * (gap_l + gap_m) / 2))
            worst_dot_l = max(worst_dot_l, abs(dot - w * gap_l))
            worst_dot_m = max(worst_dot_m, abs(dot - w * gap_m))
        report["marginal_equality"] = (worst_marg, worst_marg <= EXACT_TOL)
        report["witness_recovery"] = (worst_rec, worst_rec <= EXACT_TOL)
        report["loss_gap_identity"] = (worst_dot, worst_dot <= EXACT_TOL)
        if pure:
            report["loss_gap_identity_lambda"] = (worst_dot_l, worst_dot_l <= EXACT_TOL)
            report["loss_gap_identity_mu"] = (worst_dot_m, worst_dot_m <= EXACT_TOL)
        return report

    def to_json(self) -> dict:
        return {
            "kind": "agnostic",
            "pi": {str(p): self.pi.weight(p) for p in self.pi.support},
            "lambdas": {str(p): self.lambdas[p].to_json() for p in self.pi.support},
            "mus": {str(p): self.mus[p].to_json() for p in self.pi.support},
            "witness": self.U.to_json(),
            "value": self.value,
            "verification": {
                k: {"value": v, "pass": bool(ok)} for k, (v, ok) in self.verify().items()
            },
        }


def build_agnostic_family(witness: DualWitness, cls: ConceptClass) -> AgnosticHardFamily:
    """Turn a difference-matrix dual witness into distribution pairs.

    For each nonzero row u of the witness (indexed by a pair (c, c')):
    pi = ||u||_1; the shared marginal is |u|/pi; lambda labels point x by
    sign(u_x) and mu by -sign(u_x).
    """
    U = witness.U
    if np.max(np.abs(U.entries)) == 0:
        raise ConstructionError("witness is identically zero")
    domain = cls.domain
    support, weights, lambdas, mus, rows = [], [], {}, {}, []
    total = 0.0
    for pair, u in zip(U.row_labels, U.entries):
        mass = float(np.abs(u).sum())
        if mass == 0:
            continue
        probs = np.zeros((len(domain), 2))
        probs[:, 0] = np.clip(u, 0, None) / mass  # label +1 where u > 0
        probs[:, 1] = np.clip(-u, 0, None) / mass
        lam = LabeledDistribution(domain, probs)
        support.append(pair)
        weights.append(mass)
        lambdas[pair] = lam
        mus[pair] = lam.flip_labels()
        rows.append(u)
        d = (cls.vector(pair[0]) - cls.vector(pair[1])) / 2
        total += float(d @ u)
    pi = WeightedIndex(support, np.array(weights) / np.sum(weights))
    # pi weights are the raw row masses; witnesses are ell1-normalized so
    # the masses already sum to 1 up to solver rounding.
    fam = AgnosticHardFamily(
        cls, pi, lambdas, mus, IndexedMatrix(support, domain, np.asarray(rows)), total
    )
    _require(fam.verify(pure=True))
    return fam


@dataclass(frozen=True)
class RefinedAgnostic:
    family: AgnosticHardFamily
    U_tilde: IndexedMatrix
    binning: BinningResult
    tau: float
    mass_S: float
    gamma2_star: float
    diagnostics: dict = field(default_factory=dict)


def refine_agnostic_family(
    family: AgnosticHardFamily,
    alpha: float,
    settings: SdpSettings | None = None,
) -> RefinedAgnostic:
    """Restrict to a dyadic bin of near-uniform loss gap and shrink the
    lambda/mu separation to tau = alpha / value.

    The refined mu is the mixture (1 - tau*pi(S)) lambda + tau*pi(S) mu, so
    lambda - mu shrinks by tau*pi(S) and the refined witness tau*U keeps the
    row-mass/difference identity. gamma2*(U_tilde) <= tau * gamma2*(U).
    """
    settings = settings or SdpSettings()
    if family.value <= alpha:
        raise ConstructionError("witness objective does not exceed alpha")
    gaps = family.gaps
    binning = geometric_binning(gaps, family.pi, alpha / 4)
    S = binning.S
    mass_S = float(sum(family.pi.weight(p) for p in S))
    tau = alpha / family.value
    lambdas, mus = {}, {}
    for pair in S:
        lam, mu = family.lambdas[pair], family.mus[pair]
        lambdas[pair] = lam
        mus[pair] = mu.mix(lam, tau * mass_S)  # tau*mass_S*mu + rest*lambda
    keep = [family.U.row_labels.index(p) for p in S]
    U_tilde = IndexedMatrix(S, family.U.col_labels, tau * family.U.entries[keep])
    refined = AgnosticHardFamily(
        family.cls,
        family.pi.restrict(S),
        lambdas,
        mus,
        U_tilde,
        tau * sum(
            float(((family.cls.vector(c) - family.cls.vector(cp)) / 2) @ family.U.row((c, cp)))
            for c, cp in S
        ),
    )
    # property 1: every surviving gap reaches the binning score / pi(S)
    floor = binning.score / mass_S
    for pair in S:
        if gaps[pair] < floor - 1e-9:
            raise ConstructionError("refined gap fell below the binning floor")
    # property 3: dual-norm contraction
    star_full = gamma2_dual_value(family.U, settings)
    star_tilde = gamma2_dual_value(U_tilde, settings)
    bound = tau * star_full
    if star_tilde > bound + 1e-4:
        raise ConstructionError(
            f"gamma2* contraction violated: {star_tilde:.6f} > {bound:.6f}"
        )
    diagnostics = {
        "mu_gap_property2": {
            str(p): population_loss(mus[p], family.cls.vector(p[1]))
            - population_loss(mus[p], family.cls.vector(p[0]))
            for p in S
        },
        "cross_optimality_gap": {
            str(p): cross_optimality_gap(lambdas[p], mus[p], family.cls) for p in S
        },
        "gamma2_star_full": star_full,
        "gamma2_star_tilde": star_tilde,
        "gamma2_star_bound": bound,
    }
    _require(refined.verify())
    return RefinedAgnostic(refined, U_tilde, binning, tau, mass_S, star_tilde, diagnostics)


def cross_optimality_gap(
    lam: LabeledDistribution, mu: LabeledDistribution, cls: ConceptClass
) -> float:
    """Min over all hypotheses of the summed regrets on lambda and mu.

    Positive values certify that no single hypothesis is simultaneously
    near-optimal for both members of the pair.
    """
    if lam.domain != mu.domain:
        raise ValueError("distributions must share a domain")
    # losses decompose pointwise, so the unrestricted minimizer does too
    joint = float(np.minimum(
        lam.probs[:, 1] + mu.probs[:, 1],  # cost of predicting +1
        lam.probs[:, 0] + mu.probs[:, 0],  # cost of predicting -1
    ).sum())
    best_lam = min(population_loss(lam, c) for c in cls.vectors())
    best_mu = min(population_loss(mu, c) for c in cls.vectors())
    return joint - best_lam - best_mu


# ---------------------------------------------------------------------------
# Realizable families (from eta dual witnesses)


@dataclass(frozen=True)
class RealizableHardFamily:
    """Per concept c: mu_c realizable by c, lambda_c far from c, both close
    in transcript space; weighted by witness row masses."""

    cls: ConceptClass
    pi: WeightedIndex  # over concept names
    lambdas: dict
    mus: dict
    U: IndexedMatrix  # rows = supported concepts, cols = labeled points
    Delta: float  # E_pi[loss_{lambda_c}(c)]
    alpha: float

    @property
    def losses(self) -> dict:
        return {
            c: population_loss(self.lambdas[c], self.cls.vector(c)) for c in self.pi.support
        }

    def verify(self) -> dict:
        report = {}
        worst_mu = max(
            population_loss(self.mus[c], self.cls.vector(c)) for c in self.pi.support
        )
        report["mu_realizable"] = (worst_mu, worst_mu <= EXACT_TOL)
        delta = sum(self.pi.weight(c) * l for c, l in self.losses.items())
        report["delta_consistency"] = (abs(delta - self.Delta), abs(delta - self.Delta) <= 1e-9)
        # difference identity u_row = pi(c) * (lambda_c - mu_c) / 2 over labeled points
        worst = 0.0
        for c in self.pi.support:
            u = self.U.row(c)
            diff = (self.lambdas[c].probs - self.mus[c].probs).ravel()
            worst = max(worst, np.abs(u - self.pi.weight(c) * diff / 2).max())
        report["witness_recovery"] = (worst, worst <= EXACT_TOL)
        report["delta_chain"] = _delta_chain_check(self)
        return report

    def to_json(self) -> dict:
        return {
            "kind": "realizable",
            "pi": {c: self.pi.weight(c) for c in self.pi.support},
            "lambdas": {c: self.lambdas[c].to_json() for c in self.pi.support},
            "mus": {c: self.mus[c].to_json() for c in self.pi.support},
            "witness": self.U.to_json(),
            "Delta": self.Delta,
            "alpha": self.alpha,
            "verification": {
                k: {"value": v, "pass": bool(ok)} for k, (v, ok) in self.verify().items()
            },
        }


def _l1(U: IndexedMatrix) -> float:
    return float(np.abs(U.entries).sum())


def _eta_witness_objective(U: IndexedMatrix, cls: ConceptClass, alpha: float) -> float:
    """sum of wrong-label entries minus alpha * |right-label entries|."""
    total = 0.0
    for name, u in zip(U.row_labels, U.entries):
        for (x, y), val in zip(U.col_labels, u):
            if cls.value(name, x) == y:
                total -= alpha * abs(val)
            else:
                total += val
    return total


def _delta_chain_check(fam: RealizableHardFamily) -> tuple:
    """Identity sum(u_wrong - alpha|u_right|) = (1+alpha) Delta/2 - alpha*mass,
    which reduces to ((1+alpha) Delta - 2 alpha)/2 for a unit-mass witness."""
    obj = _eta_witness_objective(fam.U, fam.cls, fam.alpha)
    mass = _l1(fam.U)
    expected = (1 + fam.alpha) * fam.Delta / 2 - fam.alpha * mass
    err = abs(obj - expected)
    return (err, err <= 1e-9)


def build_realizable_family(
    U: IndexedMatrix, cls: ConceptClass, alpha: float
) -> RealizableHardFamily:
    """From an eta dual witness (rows sum to zero, positive mass only on
    wrong labels): pi(c) = row mass, lambda_c = positive part, mu_c =
    negative part (supported on correct labels, hence realizable)."""
    cols = labeled_point_columns(cls.domain)
    if U.col_labels != tuple(cols):
        raise ValueError("witness columns must enumerate labeled points")
    support, weights, lambdas, mus, rows = [], [], {}, {}, []
    for name, u in zip(U.row_labels, U.entries):
        mass = float(np.abs(u).sum())
        if mass == 0:
            continue
        grid = u.reshape(len(cls.domain), 2)
        lam = LabeledDistribution(cls.domain, 2 * np.clip(grid, 0, None) / mass)
        mu = LabeledDistribution(cls.domain, 2 * np.clip(-grid, 0, None) / mass)
        support.append(name)
        weights.append(mass)
        lambdas[name] = lam
        mus[name] = mu
        rows.append(u)
    if not support:
        raise ConstructionError("witness is identically zero")
    pi = WeightedIndex(support, np.array(weights) / np.sum(weights))
    delta = sum(
        pi.weight(c) * population_loss(lambdas[c], cls.vector(c)) for c in support
    )
    fam = RealizableHardFamily(
        cls, pi, lambdas, mus, IndexedMatrix(support, cols, np.asarray(rows)), delta, alpha
    )
    if delta <= 2 * alpha / (1 + alpha):
        raise ConstructionError("witness too weak")
    _require(fam.verify())
    return fam


@dataclass(frozen=True)
class RefinedRealizable:
    family: RealizableHardFamily
    U_tilde: IndexedMatrix
    binning: BinningResult
    tau: float
    mass_S: float
    gamma2_star: float
    diagnostics: dict = field(default_factory=dict)


def refine_realizable_family(
    fam: RealizableHardFamily, alpha: float, settings: SdpSettings | None = None
) -> RefinedRealizable:
    """Bin the per-concept losses at cutoff alpha/(1+alpha) and mix lambda
    toward mu with weight tau*pi(S), tau = 2 alpha / ((1+alpha) Delta)."""
    settings = settings or SdpSettings()
    if fam.Delta <= 2 * alpha / (1 + alpha):
        raise ConstructionError("witness too weak")
    losses = fam.losses
    binning = geometric_binning(losses, fam.pi, alpha / (1 + alpha))
    S = binning.S
    mass_S = float(sum(fam.pi.weight(c) for c in S))
    tau = 2 * alpha / ((1 + alpha) * fam.Delta)
    lambdas, mus = {}, {}
    for c in S:
        lam, mu = fam.lambdas[c], fam.mus[c]
        lambdas[c] = lam.mix(mu, tau * mass_S)  # tau*mass_S*lam + rest*mu
        mus[c] = mu
    keep = [fam.U.row_labels.index(c) for c in S]
    scale = tau  # refined rows: pi~ (lam~ - mu~)/2 = tau * u
    U_tilde = IndexedMatrix(S, fam.U.col_labels, scale * fam.U.entries[keep])
    delta = sum(
        fam.pi.restrict(S).weight(c) * population_loss(lambdas[c], fam.cls.vector(c))
        for c in S
    )
    refined = RealizableHardFamily(
        fam.cls, fam.pi.restrict(S), lambdas, mus, U_tilde, delta, alpha
    )
    for c in S:
        if population_loss(mus[c], fam.cls.vector(c)) > EXACT_TOL:
            raise ConstructionError("refined mu lost realizability")
        if population_loss(lambdas[c], fam.cls.vector(c)) < tau * binning.score - 1e-9:
            raise ConstructionError("refined lambda loss fell below tau * score")
    star_full = gamma2_dual_value(fam.U, settings)
    star_tilde = gamma2_dual_value(U_tilde, settings)
    bound = tau * star_full
    if star_tilde > bound + 1e-4:
        raise ConstructionError(
            f"gamma2* contraction violated: {star_tilde:.6f} > {bound:.6f}"
        )
    diagnostics = {
        "gamma2_star_full": star_full,
        "gamma2_star_tilde": star_tilde,
        "gamma2_star_bound": bound,
        "loss_floor": tau * binning.score,
    }
    return RefinedRealizable(refined, U_tilde, binning, tau, mass_S, star_tilde, diagnostics)


def mix_sigma(fam: RealizableHardFamily) -> RealizableHardFamily:
    """Mix both members half-and-half with sigma_c (lambda_c's marginal
    relabeled by c), making lambda_c Bayes-hard while mu_c stays realizable
    and the lambda-mu difference exactly halves."""
    lambdas, mus = {}, {}
    for c in fam.pi.support:
        lam, mu = fam.lambdas[c], fam.mus[c]
        loss = population_loss(lam, fam.cls.vector(c))
        if loss <= fam.alpha:
            raise ConstructionError(
                f"loss of lambda_{c} is {loss:.4f}, not above alpha={fam.alpha}"
            )
        sigma = LabeledDistribution.labeled_by(
            fam.cls.domain, lam.marginal(), fam.cls.vector(c)
        )
        lam_hat = lam.mix(sigma, 0.5)
        mu_hat = mu.mix(sigma, 0.5)
        if abs(bayes_error(lam_hat) - loss / 2) > EXACT_TOL:
            raise ConstructionError("bayes error of mixed lambda is not loss/2")
        if population_loss(mu_hat, fam.cls.vector(c)) > EXACT_TOL:
            raise ConstructionError("mixed mu lost realizability")
        if np.abs((lam_hat.probs - mu_hat.probs) - (lam.probs - mu.probs) / 2).max() > EXACT_TOL:
            raise ConstructionError("difference halving identity failed")
        lambdas[c] = lam_hat
        mus[c] = mu_hat
    U_half = IndexedMatrix(fam.U.row_labels, fam.U.col_labels, fam.U.entries / 2)
    delta = sum(
        fam.pi.weight(c) * population_loss(lambdas[c], fam.cls.vector(c))
        for c in fam.pi.support
    )
    return RealizableHardFamily(fam.cls, fam.pi, lambdas, mus, U_half, delta, fam.alpha)


# ---------------------------------------------------------------------------
# Reweighting for the transcript-norm bound


@dataclass(frozen=True)
class ReweightResult:
    pi_hat: WeightedIndex
    norm: float  # ||M||_{ell_inf -> L2(pi_hat)}
    capped: bool  # True when the column count exceeded the brute-force cap


def reweight_pi_hat(
    U_tilde: IndexedMatrix,
    M: IndexedMatrix,
    settings: SdpSettings | None = None,
    cap: int = BRUTE_FORCE_CAP,
) -> ReweightResult:
    """Find row weights minimizing the ell_inf -> L2(pi) operator norm of M.

    For each sign vertex f the squared norm is linear in pi, so the min-max
    is a linear program over the enumerated vertices. The optimum is checked
    against 4 * gamma2*(U_tilde).
    """
    if U_tilde.row_labels != M.row_labels:
        raise ValueError("U_tilde and M must have aligned rows")
    n, m = M.shape
    if m > cap:
        uniform = WeightedIndex(M.row_labels, np.full(n, 1.0 / n))
        return ReweightResult(uniform, float("nan"), True)
    F = sign_vectors(m)  # (2^(m-1), m); norm is sign-symmetric
    G2 = (M.entries @ F.T) ** 2  # (n, vertices)
    # variables: pi (n) then t; minimize t s.t. G2[:, f] . pi <= t, sum pi = 1
    A_ub = np.hstack([G2.T, -np.ones((G2.shape[1], 1))])
    res = linprog(
        c=np.r_[np.zeros(n), 1.0],
        A_ub=A_ub,
        b_ub=np.zeros(G2.shape[1]),
        A_eq=np.r_[np.ones(n), 0.0].reshape(1, -1),
        b_eq=[1.0],
        bounds=[(0, None)] * n + [(0, None)],
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"reweighting LP failed: {res.message}")
    pi_hat = WeightedIndex(M.row_labels, np.clip(res.x[:n], 0, None))
    norm = math.sqrt(max(res.x[n], 0.0))
    star = gamma2_dual_value(U_tilde, settings or SdpSettings())
    if norm > 4 * star + 1e-4:
        raise ConstructionError(
            f"reweighted norm {norm:.6f} exceeds 4 * gamma2* = {4 * star:.6f}"
        )
    return ReweightResult(pi_hat, norm, False)


# ---------------------------------------------------------------------------
# Transcript diagnostics


def expected_transcript_kl(
    lambdas: dict,
    mus: dict,
    pi: WeightedIndex,
    spec: RandomizerSpec,
    params: PrivacyParams,
    n: int,
) -> float:
    """E over pi of the exact n-user transcript KL between the pair members."""
    return sum(
        pi.weight(v) * transcript_kl(lambdas[v], mus[v], spec, params, n)
        for v in pi.support
    )


def _require(report: dict) -> None:
    bad = {k: v for k, (v, ok) in report.items() if not ok}
    if bad:
        raise ConstructionError(f"construction identities failed: {bad}")
