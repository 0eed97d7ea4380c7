"""Learning and refutation under local privacy.

Runs the agnostic learner, the realizable learner, and both refuters on a
thresholds class, showing success on realizable data and rejection on data
that no concept fits.
"""

import numpy as np

from ldplearn import zoo
from ldplearn.learners import (
    NotRealizableError,
    TaskConfig,
    agnostic_learn,
    agnostic_refute,
    prepare_agnostic,
    prepare_realizable,
    realizable_learn,
    required_sample_size,
)
from ldplearn.model import LabeledDistribution, population_loss, sample

cls = zoo.thresholds(8)
config = TaskConfig(alpha=0.1, beta=0.1, epsilon=1.0, theta=0.25)
marginal = np.full(cls.num_points, 1.0 / cls.num_points)
target = LabeledDistribution.labeled_by(cls.domain, marginal, cls.vector("t4"))
uniform = LabeledDistribution(cls.domain, np.column_stack([marginal / 2, marginal / 2]))

aplan = prepare_agnostic(cls, config)
n_ag = required_sample_size("agnostic", cls, config, gamma=aplan.gamma)
print(f"agnostic task: gamma = {aplan.gamma:.3f}, sample size n = {n_ag}")
out = agnostic_learn(cls, sample(target, n_ag, seed=0), config, 1, plan=aplan)
print(f"  learned {out.chosen} on data labeled by t4 "
      f"(true loss {population_loss(target, cls.vector(out.chosen)):.4f})")
v1 = agnostic_refute(cls, sample(target, n_ag, seed=2), config, 3, plan=aplan)
v2 = agnostic_refute(cls, sample(uniform, n_ag, seed=4), config, 5, plan=aplan)
print(f"  refuter verdict on realizable data {v1:+d}, on coin-flip labels {v2:+d}")

rplan = prepare_realizable(cls, config)
n_re = required_sample_size("realizable", cls, config, gamma=rplan.solution.value)
print(f"realizable task: eta = {rplan.solution.value:.4f}, sample size n = {n_re}")
out = realizable_learn(cls, sample(target, n_re, seed=6), config, 7, plan=rplan)
print(f"  accepted {out.chosen} "
      f"(true loss {population_loss(target, cls.vector(out.chosen)):.4f})")
try:
    realizable_learn(cls, sample(uniform, n_re, seed=8), config, 9, plan=rplan)
except NotRealizableError as e:
    print(f"  coin-flip labels rejected: {e}")
