"""Hard distribution families from dual witnesses.

Converts norm dual witnesses into pairs of distributions that force a
sample-size lower bound: the pairs are far apart in loss but close in
private-transcript KL, and every construction identity is checked in exact
arithmetic.
"""

from ldplearn import zoo
from ldplearn.hardness import (
    build_agnostic_family,
    build_realizable_family,
    expected_transcript_kl,
    mix_sigma,
    refine_agnostic_family,
    refine_realizable_family,
    reweight_pi_hat,
)
from ldplearn.learners import TaskConfig, prepare_realizable
from ldplearn.model import build_difference_matrix
from ldplearn.norms import SdpSettings, agnostic_dual_witness, eta_dual_witness
from ldplearn.protocol import PrivacyParams

settings = SdpSettings()
alpha = 0.1

cls = zoo.thresholds(4)
w = agnostic_dual_witness(build_difference_matrix(cls), alpha, settings)
fam = build_agnostic_family(w, cls)
print(f"agnostic family on thresholds(4): value {fam.value:.4f}, "
      f"{len(fam.pi.support)} concept pairs")
for check, (err, ok) in fam.verify(pure=True).items():
    print(f"  {check}: error {err:.2e} {'ok' if ok else 'FAILED'}")
refined = refine_agnostic_family(fam, alpha, settings)
print(f"refined with tau = {refined.tau:.4f}; gamma2* contracted "
      f"{refined.diagnostics['gamma2_star_full']:.4f} -> {refined.gamma2_star:.4f}")

cls_r = zoo.thresholds(3)
wr = eta_dual_witness(cls_r, alpha, settings)
fam_r = build_realizable_family(wr.U, cls_r, alpha)
print(f"\nrealizable family on thresholds(3): Delta = {fam_r.Delta:.4f}")
refined_r = refine_realizable_family(fam_r, alpha, settings)
mixed = mix_sigma(refined_r.family)
print(f"refined with tau = {refined_r.tau:.4f}; after sigma-mixing the hard "
      f"member is Bayes-hard while its partner stays realizable")

rw = reweight_pi_hat(refined_r.U_tilde, refined_r.U_tilde, settings)
print(f"reweighted operator norm {rw.norm:.4f} <= 4 * gamma2* certified")

plan = prepare_realizable(cls_r, TaskConfig(alpha=alpha, beta=0.1, epsilon=1.0))
kl = expected_transcript_kl(
    refined_r.family.lambdas, refined_r.family.mus, refined_r.family.pi,
    plan.spec, PrivacyParams(1.0), 100,
)
print(f"expected 100-user transcript KL between pair members: {kl:.4f} "
      f"(small despite the loss gap: this is the source of the lower bound)")
