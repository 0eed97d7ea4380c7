"""The gamma2 factorization-norm family via small dense semidefinite programs.

Every quantity is computed twice: once from its primal semidefinite program
and once from the paired dual program, and the reported certificate gap is
the difference of the two optimal values. The dual solves double as the
source of the dual witnesses used to build hard distribution families.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .model import ConceptClass, IndexedMatrix, labeled_point_columns

EIG_REJECT = -1e-7  # relative eigenvalue floor; below this the solver went wrong


class SolverError(RuntimeError):
    """SDP solve failed or missed the requested duality gap."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


@dataclass(frozen=True)
class SdpSettings:
    tolerance: float = 1e-6
    max_iterations: int = 200
    seed: int = 0
    solver: str = "CLARABEL"

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


DEFAULT_SETTINGS = SdpSettings()


@dataclass(frozen=True)
class Factorization:
    """A balanced factorization R @ A of a matrix close to the target."""

    R: IndexedMatrix
    A: IndexedMatrix
    residual_inf: float
    gamma2_value: float


@dataclass(frozen=True)
class DualWitness:
    """An ell1-normalized dual optimum of an approximate-norm program."""

    U: IndexedMatrix
    objective: float
    gamma2_star: float
    inner_product: float
    gap: float = 0.0


@dataclass(frozen=True)
class EtaSolution:
    """Optimal surrogate-query matrix for the realizable protocol."""

    W: IndexedMatrix
    theta: dict
    W_tilde: IndexedMatrix
    value: float
    factorization: Factorization
    gap: float


def _solve(problem: cp.Problem, settings: SdpSettings) -> float:
    kwargs = {}
    if settings.solver == "CLARABEL":
        kwargs["max_iter"] = max(settings.max_iterations, 50)
        # push well past the certificate target so eigenvalue drift stays
        # inside the clipping band; the default static regularization (1e-8)
        # would cap the attainable accuracy right at the band edge
        for key in ("tol_gap_abs", "tol_gap_rel", "tol_feas"):
            kwargs[key] = min(settings.tolerance * 1e-3, 1e-10)
        kwargs["static_regularization_constant"] = 1e-11
    try:
        with warnings.catch_warnings():
            # accuracy is certified downstream by the primal/dual gap, so
            # the solver's own inaccuracy warning is just noise here
            warnings.filterwarnings("ignore", message="Solution may be inaccurate")
            problem.solve(solver=settings.solver, **kwargs)
    except cp.error.SolverError as e:
        raise SolverError(f"SDP solver failed: {e}")
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise SolverError(f"SDP solver status {problem.status}")
    return float(problem.value)


def _min_gamma2_program(off_expr, extra_constraints, settings):
    """min t s.t. the PSD block matrix has ``off_expr`` off-diagonal and
    diagonal at most t. Returns (t, Z) at the optimum."""
    n, m = off_expr.shape
    Z = cp.Variable((n + m, n + m), symmetric=True)
    t = cp.Variable()
    cons = [Z >> 0, Z[:n, n:] == off_expr, cp.diag(Z) <= t]
    value = _solve(cp.Problem(cp.Minimize(t), cons + list(extra_constraints)), settings)
    return value, Z.value


def _dual_ball_constraints(N):
    """Constraints encoding gamma2*(N) <= 1."""
    n, m = N.shape
    p = cp.Variable(n, nonneg=True)
    q = cp.Variable(m, nonneg=True)
    block = cp.bmat([[cp.diag(p), N], [N.T, cp.diag(q)]])
    return [block >> 0, (cp.sum(p) + cp.sum(q)) / 2 <= 1]


def _extract_factors(Z: np.ndarray, n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a PSD Gram block into factor matrices (rows R, columns A)."""
    Z = (Z + Z.T) / 2
    vals, vecs = np.linalg.eigh(Z)
    if vals.min() < EIG_REJECT * max(float(vals.max()), 1.0):
        raise SolverError(f"solution block has negative eigenvalue {vals.min():.3g}")
    vals = np.clip(vals, 0.0, None)
    keep = vals > max(vals.max(), 1.0) * 1e-11
    V = vecs[:, keep] * np.sqrt(vals[keep])
    return V[:n], V[n:].T


def _balance(R: np.ndarray, A: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    r = np.max(np.linalg.norm(R, axis=1)) if R.size else 0.0
    a = np.max(np.linalg.norm(A, axis=0)) if A.size else 0.0
    value = r * a
    if r > 1e-12 and a > 1e-12:
        s = math.sqrt(a / r)
        R, A = R * s, A / s
    return R, A, value


def _factorization(M: IndexedMatrix, Z: np.ndarray) -> Factorization:
    n, m = M.shape
    R, A = _extract_factors(Z, n, m)
    R, A, value = _balance(R, A)
    resid = float(np.max(np.abs(R @ A - M.entries))) if M.entries.size else 0.0
    k = R.shape[1]
    factor_idx = [f"f{i}" for i in range(k)]
    return Factorization(
        R=IndexedMatrix(M.row_labels, factor_idx, R),
        A=IndexedMatrix(factor_idx, M.col_labels, A),
        residual_inf=resid,
        gamma2_value=value,
    )


# ---------------------------------------------------------------------------
# gamma2 and its approximate / dual versions


def gamma2(M: IndexedMatrix, settings: SdpSettings = DEFAULT_SETTINGS):
    """The gamma2 norm, with a balanced factorization and certified gap."""
    n, m = M.shape
    primal, Z = _min_gamma2_program(cp.Constant(M.entries), [], settings)
    # paired dual: max M.N over the unit gamma2* ball
    N = cp.Variable((n, m))
    dual = _solve(cp.Problem(cp.Maximize(cp.sum(cp.multiply(M.entries, N))), _dual_ball_constraints(N)), settings)
    gap = abs(primal - dual)
    if gap > settings.tolerance:
        raise SolverError(f"duality gap {gap:.3g} exceeds tolerance", gap=gap)
    fact = _factorization(M, Z)
    value = max(primal, 0.0)
    return value, fact


def gamma2_approx(M: IndexedMatrix, alpha: float, settings: SdpSettings = DEFAULT_SETTINGS):
    """Minimum gamma2 norm over matrices within ``alpha`` of M entrywise."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    n, m = M.shape
    Mt = cp.Variable((n, m))
    box = [Mt <= M.entries + alpha, Mt >= M.entries - alpha]
    primal, Z = _min_gamma2_program(Mt, box, settings)
    dual, _ = _approx_dual_program(M, alpha, settings)
    gap = abs(primal - dual)
    if gap > settings.tolerance:
        raise SolverError(f"duality gap {gap:.3g} exceeds tolerance", gap=gap)
    M_tilde = M.with_entries(Mt.value)
    fact = _factorization(M_tilde, Z)
    value = max(primal, 0.0)
    return value, M_tilde, fact


def _approx_dual_program(M: IndexedMatrix, alpha: float, settings: SdpSettings):
    """max M.N - alpha*||N||_1 over the unit gamma2* ball."""
    n, m = M.shape
    N = cp.Variable((n, m))
    obj = cp.sum(cp.multiply(M.entries, N)) - alpha * cp.sum(cp.abs(N))
    value = _solve(cp.Problem(cp.Maximize(obj), _dual_ball_constraints(N)), settings)
    return value, N.value


def gamma2_dual(U: IndexedMatrix, settings: SdpSettings = DEFAULT_SETTINGS):
    """The dual gamma2 norm with the optimal unit-ball vector assignments."""
    n, m = U.shape
    d = n + m
    Z = cp.Variable((d, d), symmetric=True)
    C = np.zeros((d, d))
    C[:n, n:] = U.entries / 2
    C[n:, :n] = U.entries.T / 2
    primal = _solve(
        cp.Problem(cp.Maximize(cp.sum(cp.multiply(C, Z))), [Z >> 0, cp.diag(Z) <= 1]),
        settings,
    )
    # paired min program certifying the value from above
    p = cp.Variable(n, nonneg=True)
    q = cp.Variable(m, nonneg=True)
    block = cp.bmat([[cp.diag(p), cp.Constant(U.entries)], [cp.Constant(U.entries.T), cp.diag(q)]])
    upper = _solve(cp.Problem(cp.Minimize((cp.sum(p) + cp.sum(q)) / 2), [block >> 0]), settings)
    gap = abs(primal - upper)
    # the two programs are solved independently, so allow each its own
    # solver tolerance before declaring the certificate broken
    if gap > 10 * settings.tolerance:
        raise SolverError(f"duality gap {gap:.3g} exceeds tolerance", gap=gap)
    F, G = _extract_factors(Z.value, n, m)
    f_map = {lab: F[i] for i, lab in enumerate(U.row_labels)}
    g_map = {lab: G[:, j] for j, lab in enumerate(U.col_labels)}
    return max(primal, 0.0), f_map, g_map


def gamma2_dual_value(U: IndexedMatrix, settings: SdpSettings = DEFAULT_SETTINGS) -> float:
    value, _, _ = gamma2_dual(U, settings)
    return value


# ---------------------------------------------------------------------------
# Agnostic dual witness


def agnostic_dual_witness(
    D: IndexedMatrix, alpha: float, settings: SdpSettings = DEFAULT_SETTINGS
) -> DualWitness:
    """Witness of the dual formulation of the approximate norm of D.

    Returns U with unit ell1 norm and every row inner product with the
    matching row of D nonnegative (rows are flipped as needed, which leaves
    the ell1 and dual norms unchanged and cannot decrease D.U).
    """
    if np.max(np.abs(D.entries)) == 0:
        raise SolverError("dual degenerate: gamma2(D, alpha) = 0")
    dual_value, N = _approx_dual_program(D, alpha, settings)
    if dual_value <= settings.tolerance:
        raise SolverError("dual degenerate: gamma2(D, alpha) = 0")
    U = np.array(N)
    U[np.abs(U) < 1e-14] = 0.0
    total = np.abs(U).sum()
    if total == 0:
        raise SolverError("dual witness is zero")
    U /= total
    # sign fix per row
    for i in range(U.shape[0]):
        if D.entries[i] @ U[i] < 0:
            U[i] = -U[i]
    Um = IndexedMatrix(D.row_labels, D.col_labels, U)
    gstar = gamma2_dual_value(Um, settings)
    inner = float(np.sum(D.entries * U))
    objective = (inner - alpha) / gstar
    # the normalized objective can only improve on the raw dual value, and it
    # never exceeds the primal optimum; record the discrepancy as diagnostic
    return DualWitness(U=Um, objective=objective, gamma2_star=gstar,
                       inner_product=inner, gap=abs(objective - dual_value))


# ---------------------------------------------------------------------------
# eta and its dual


def _labeled_index(cls: ConceptClass):
    cols = labeled_point_columns(cls.domain)
    col_of = {lab: j for j, lab in enumerate(cols)}
    right, wrong = [], []  # index pairs (concept row, column)
    for i, name in enumerate(cls.concept_names):
        vec = cls.vectors()[i]
        for k, x in enumerate(cls.domain):
            lab = int(vec[k])
            right.append((i, col_of[(x, lab)]))
            wrong.append((i, col_of[(x, -lab)]))
    return cols, right, wrong


def eta(cls: ConceptClass, alpha: float, settings: SdpSettings = DEFAULT_SETTINGS) -> EtaSolution:
    """Minimum gamma2 norm of a row-shifted surrogate-loss query matrix.

    The surrogate matrix penalizes incorrectly labeled points by at least 1
    and correctly labeled points by at most ``alpha`` in absolute value; each
    concept's row may be shifted by a free constant before taking the norm.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    cols, right, wrong = _labeled_index(cls)
    nC, nL = cls.num_concepts, len(cols)
    W = cp.Variable((nC, nL))
    theta = cp.Variable(nC)
    cons = []
    ri, rj = zip(*right)
    wi, wj = zip(*wrong)
    cons.append(cp.abs(W[ri, rj]) <= alpha)
    cons.append(W[wi, wj] >= 1)
    W_tilde = W + cp.reshape(theta, (nC, 1), order="C") @ np.ones((1, nL))
    primal, Z = _min_gamma2_program(W_tilde, cons, settings)
    dual_value, _ = _eta_dual_program(cls, alpha, settings)
    gap = abs(primal - dual_value)
    if gap > settings.tolerance * 10:
        raise SolverError(f"eta duality gap {gap:.3g} exceeds tolerance", gap=gap)
    Wm = IndexedMatrix(cls.concept_names, cols, W.value)
    Wt = IndexedMatrix(cls.concept_names, cols, W_tilde.value)
    fact = _factorization(Wt, Z)
    return EtaSolution(
        W=Wm,
        theta={name: float(theta.value[i]) for i, name in enumerate(cls.concept_names)},
        W_tilde=Wt,
        value=max(primal, 0.0),
        factorization=fact,
        gap=gap,
    )


def _eta_dual_program(cls: ConceptClass, alpha: float, settings: SdpSettings):
    """max sum of wrong-label entries - alpha * ell1 of right-label entries,
    over row-sum-zero matrices with nonnegative wrong-label entries inside
    the unit gamma2* ball."""
    cols, right, wrong = _labeled_index(cls)
    nC, nL = cls.num_concepts, len(cols)
    U = cp.Variable((nC, nL))
    ri, rj = zip(*right)
    wi, wj = zip(*wrong)
    cons = _dual_ball_constraints(U)
    cons.append(U[wi, wj] >= 0)
    cons.append(cp.sum(U, axis=1) == 0)
    obj = cp.sum(U[wi, wj]) - alpha * cp.sum(cp.abs(U[ri, rj]))
    value = _solve(cp.Problem(cp.Maximize(obj), cons), settings)
    return value, U.value


def eta_dual_witness(
    cls: ConceptClass, alpha: float, settings: SdpSettings = DEFAULT_SETTINGS
) -> DualWitness:
    """Normalized dual witness for eta; seeds the realizable hard family."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    dual_value, N = _eta_dual_program(cls, alpha, settings)
    if dual_value <= settings.tolerance:
        raise SolverError("eta dual degenerate: value <= 0")
    cols, right, wrong = _labeled_index(cls)
    U = np.array(N)
    wi, wj = zip(*wrong)
    off = U[wi, wj]
    if off.min() < -1e-10:
        raise SolverError(f"wrong-label entry {off.min():.3g} below tolerance")
    U[wi, wj] = np.clip(off, 0.0, None)
    U[np.abs(U) < 1e-14] = 0.0
    total = np.abs(U).sum()
    U /= total
    rowsum = np.abs(U.sum(axis=1)).max()
    if rowsum > 1e-8:
        raise SolverError(f"row sums deviate from zero by {rowsum:.3g}")
    Um = IndexedMatrix(cls.concept_names, cols, U)
    gstar = gamma2_dual_value(Um, settings)
    ri, rj = zip(*right)
    numer = float(U[wi, wj].sum() - alpha * np.abs(U[ri, rj]).sum())
    objective = numer / gstar
    return DualWitness(U=Um, objective=objective, gamma2_star=gstar,
                       inner_product=numer, gap=abs(objective - dual_value))


def validate_eta_witness(U: IndexedMatrix, cls: ConceptClass, tol: float = 1e-10) -> None:
    """Check membership of U in the row-sum-zero, wrong-label-nonnegative set."""
    cols, right, wrong = _labeled_index(cls)
    if U.col_labels != tuple(cols) or U.row_labels != cls.concept_names:
        raise ValueError("witness labels do not match the class")
    wi, wj = zip(*wrong)
    if U.entries[wi, wj].min() < -tol:
        raise ValueError("wrong-label entries must be nonnegative")
    if np.abs(U.entries.sum(axis=1)).max() > tol:
        raise ValueError("rows must sum to zero")
