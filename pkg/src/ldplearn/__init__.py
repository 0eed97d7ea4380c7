"""Learning, refutation and hard-instance construction under
non-interactive local differential privacy."""

from .model import (
    ConceptClass,
    Dataset,
    DomainMismatchError,
    IndexedMatrix,
    LabeledDistribution,
    WeightedIndex,
    bayes_error,
    build_concept_matrix,
    build_difference_matrix,
    build_loss_query_matrix,
    build_sign_query_matrix,
    elementary_norms,
    empirical_loss,
    labeled_point_columns,
    majority_hypothesis,
    operator_norm_inf_to_l2,
    population_loss,
    sample,
    sign_vectors,
)
from .norms import (
    DualWitness,
    EtaSolution,
    Factorization,
    SdpSettings,
    SolverError,
    agnostic_dual_witness,
    eta,
    eta_dual_witness,
    gamma2,
    gamma2_approx,
    gamma2_dual,
    gamma2_dual_value,
)
from .protocol import (
    AuditResult,
    ChannelDistribution,
    PrivacyParams,
    RandomizerSpec,
    audit_privacy,
    channel_marginal,
    randomize,
    run_protocol,
    transcript_kl,
    tv_distance,
    unbiased_decode,
)
from .learners import (
    LearnOutcome,
    NotRealizableError,
    TaskConfig,
    agnostic_learn,
    agnostic_refute,
    prepare_agnostic,
    prepare_realizable,
    realizable_learn,
    realizable_refute,
    required_sample_size,
)
from .hardness import (
    AgnosticHardFamily,
    BinningResult,
    ConstructionError,
    RealizableHardFamily,
    build_agnostic_family,
    build_realizable_family,
    cross_optimality_gap,
    geometric_binning,
    mix_sigma,
    refine_agnostic_family,
    refine_realizable_family,
    reweight_pi_hat,
)
from . import zoo

__version__ = "0.1.0"
