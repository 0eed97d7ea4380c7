"""Private learning and refutation tasks built on the norm and protocol layers.

Four end tasks are provided: agnostic learning, agnostic refutation with a
threshold, realizable learning, and realizable refutation. Each one factors
its query workload once (an SDP solve), runs the one-round private protocol,
and post-processes the noisy answers. The factorization step is cached in a
*plan* object so Monte-Carlo harnesses can amortize the SDP across trials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    ConceptClass,
    Dataset,
    build_concept_matrix,
    build_sign_query_matrix,
    dump_json,
)
from .norms import EtaSolution, Factorization, SdpSettings, eta, gamma2_approx
from .protocol import PrivacyParams, RandomizerSpec, run_protocol


class NotRealizableError(RuntimeError):
    """No concept passed the realizable acceptance test."""


DEFAULT_C0 = 32.0


@dataclass(frozen=True)
class TaskConfig:
    alpha: float
    beta: float
    epsilon: float
    theta: float = 0.0
    c0: float = DEFAULT_C0
    randomizer: str = "coord-rr"

    def __post_init__(self):
        if not 0 < self.alpha <= 0.5:
            raise ValueError("alpha must be in (0, 1/2]")
        if not 0 < self.beta < 0.5:
            raise ValueError("beta must be in (0, 1/2)")
        if not 0 <= self.theta <= 1:
            raise ValueError("theta must be in [0, 1]")
        if self.c0 <= 0:
            raise ValueError("c0 must be positive")
        PrivacyParams(self.epsilon)  # validates epsilon

    @property
    def privacy(self) -> PrivacyParams:
        return PrivacyParams(self.epsilon)


@dataclass(frozen=True)
class LearnOutcome:
    chosen: str
    estimates: dict
    n: int
    stats: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "chosen": self.chosen,
            "estimates": dict(self.estimates),
            "n": self.n,
            "stats": dict(self.stats),
        }


def _argmin_concept(estimates: dict) -> str:
    """Smallest estimate wins; exact ties go to the smallest concept name."""
    return min(estimates, key=lambda c: (estimates[c], c))


def _protocol_pieces(fact: Factorization, kind: str):
    return fact.R, RandomizerSpec(kind, fact.A)


@dataclass(frozen=True)
class AgnosticPlan:
    """Cached factorization of the symmetrized correlation queries."""

    cls: ConceptClass
    alpha: float
    gamma: float
    R: IndexedMatrix
    spec: RandomizerSpec
    residual: float


def prepare_agnostic(
    cls: ConceptClass, config: TaskConfig, settings: SdpSettings | None = None
) -> AgnosticPlan:
    """Factor the queries c -> E[y*c(x)] at approximation level alpha/2.

    An entrywise error of alpha/2 on the correlation becomes alpha/4 on the
    loss after the affine shift loss = (1 - correlation)/2.
    """
    settings = settings or SdpSettings()
    M = build_sign_query_matrix(cls)
    value, _, fact = gamma2_approx(M, config.alpha / 2, settings)
    if fact.residual_inf > config.alpha / 2 + settings.tolerance * 10:
        raise RuntimeError(
            f"factorization residual {fact.residual_inf:.3e} exceeds alpha/2"
        )
    R, spec = _protocol_pieces(fact, config.randomizer)
    return AgnosticPlan(cls, config.alpha, value, R, spec, fact.residual_inf)


@dataclass(frozen=True)
class RealizablePlan:
    """Cached eta solution and factorization of the shifted surrogate queries."""

    cls: ConceptClass
    alpha: float
    solution: EtaSolution
    R: IndexedMatrix
    spec: RandomizerSpec


def prepare_realizable(
    cls: ConceptClass, config: TaskConfig, settings: SdpSettings | None = None
) -> RealizablePlan:
    if 3 * config.alpha > 1:
        raise ValueError("realizable tasks require 3*alpha <= 1")
    settings = settings or SdpSettings()
    sol = eta(cls, config.alpha, settings)
    R, spec = _protocol_pieces(sol.factorization, config.randomizer)
    return RealizablePlan(cls, config.alpha, sol, R, spec)


def required_sample_size(
    task: str,
    cls: ConceptClass,
    config: TaskConfig,
    settings: SdpSettings | None = None,
    *,
    gamma: float | None = None,
) -> int:
    """n = ceil(c0 * gamma^2 * ln(2|C|/beta) / (epsilon^2 alpha^2)).

    gamma is the approximate gamma2 of the concept matrix (agnostic) or
    eta(C, alpha) (realizable); pass it explicitly to skip the SDP solve.
    """
    if task not in ("agnostic", "realizable"):
        raise ValueError("task must be 'agnostic' or 'realizable'")
    if gamma is None:
        settings = settings or SdpSettings()
        if task == "agnostic":
            gamma, _, _ = gamma2_approx(build_concept_matrix(cls), config.alpha, settings)
        else:
            gamma = eta(cls, config.alpha, settings).value
    count = (
        config.c0
        * gamma**2
        * math.log(2 * len(cls.concept_names) / config.beta)
        / (config.epsilon**2 * config.alpha**2)
    )
    return max(1, math.ceil(count))


def _run(plan_R, plan_spec, data: Dataset, config: TaskConfig, seed, noise_free):
    answers = run_protocol(
        data, plan_R, plan_spec, config.privacy, seed, noise_free=noise_free
    )
    stats = {
        "n": len(data),
        "randomizer": plan_spec.kind,
        "epsilon": config.epsilon,
        "messages": len(data),
    }
    return answers, stats


def agnostic_learn(
    cls: ConceptClass,
    data: Dataset,
    config: TaskConfig,
    seed: int,
    settings: SdpSettings | None = None,
    *,
    plan: AgnosticPlan | None = None,
    noise_free: bool = False,
) -> LearnOutcome:
    """Proper agnostic learner: argmin of privately estimated losses."""
    plan = plan or prepare_agnostic(cls, config, settings)
    answers, stats = _run(plan.R, plan.spec, data, config, seed, noise_free)
    estimates = {c: (1.0 - corr) / 2.0 for c, corr in answers.items()}
    return LearnOutcome(_argmin_concept(estimates), estimates, len(data), stats)


def agnostic_refute(
    cls: ConceptClass,
    data: Dataset,
    config: TaskConfig,
    seed: int,
    settings: SdpSettings | None = None,
    *,
    plan: AgnosticPlan | None = None,
    noise_free: bool = False,
) -> int:
    """+1 iff the best estimated loss is at most theta + alpha/2, else -1."""
    outcome = agnostic_learn(
        cls, data, config, seed, settings, plan=plan, noise_free=noise_free
    )
    best = outcome.estimates[outcome.chosen]
    return 1 if best <= config.theta + config.alpha / 2 else -1


def _realizable_estimates(plan: RealizablePlan, answers: dict) -> dict:
    theta = plan.solution.theta
    return {c: answers[c] - theta[c] for c in answers}


def realizable_learn(
    cls: ConceptClass,
    data: Dataset,
    config: TaskConfig,
    seed: int,
    settings: SdpSettings | None = None,
    *,
    plan: RealizablePlan | None = None,
    noise_free: bool = False,
) -> LearnOutcome:
    """Answer the shifted surrogate queries; accept estimates below 2*alpha.

    For a distribution labeled by c the query value is at most alpha, while
    for any concept it is at least its population loss minus alpha, so the
    2*alpha cutoff returns a concept of loss below 3*alpha when it fires.
    """
    plan = plan or prepare_realizable(cls, config, settings)
    answers, stats = _run(plan.R, plan.spec, data, config, seed, noise_free)
    estimates = _realizable_estimates(plan, answers)
    accepted = {c: v for c, v in estimates.items() if v < 2 * config.alpha}
    if not accepted:
        raise NotRealizableError("not realizable at this accuracy")
    return LearnOutcome(_argmin_concept(accepted), estimates, len(data), stats)


def realizable_refute(
    cls: ConceptClass,
    data: Dataset,
    config: TaskConfig,
    seed: int,
    settings: SdpSettings | None = None,
    *,
    plan: RealizablePlan | None = None,
    noise_free: bool = False,
) -> int:
    """+1 iff some concept's shifted estimate is below 2*alpha, else -1."""
    try:
        realizable_learn(
            cls, data, config, seed, settings, plan=plan, noise_free=noise_free
        )
    except NotRealizableError:
        return -1
    return 1


def outcome_to_file(outcome: LearnOutcome, path) -> None:
    dump_json(outcome.to_json(), path)
