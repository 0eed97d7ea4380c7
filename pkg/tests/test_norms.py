import numpy as np
import pytest
from scipy.linalg import hadamard

from ldplearn import zoo
from ldplearn.model import (
    ConceptClass,
    IndexedMatrix,
    build_concept_matrix,
    build_difference_matrix,
    labeled_point_columns,
)
from ldplearn.norms import (
    SdpSettings,
    SolverError,
    agnostic_dual_witness,
    eta,
    eta_dual_witness,
    gamma2,
    gamma2_approx,
    gamma2_dual,
    gamma2_dual_value,
    validate_eta_witness,
)

SETTINGS = SdpSettings()


def _mat(arr):
    arr = np.asarray(arr, dtype=float)
    return IndexedMatrix(tuple(range(arr.shape[0])), tuple(range(arr.shape[1])), arr)


class TestGamma2:
    @pytest.mark.parametrize("n", [2, 4, 8])
    def test_identity(self, n):
        value, fact = gamma2(_mat(np.eye(n)), SETTINGS)
        assert value == pytest.approx(1.0, abs=1e-4)
        assert fact.residual_inf <= 1e-6

    def test_hadamard(self):
        value, _ = gamma2(_mat(hadamard(4)), SETTINGS)
        assert value == pytest.approx(2.0, abs=1e-3)

    def test_rank_one_signs(self):
        value, _ = gamma2(_mat(np.outer([1, -1, 1], [1, 1, -1, -1])), SETTINGS)
        assert value == pytest.approx(1.0, abs=1e-4)

    def test_scaling_homogeneous(self):
        M = np.array([[1.0, -0.5], [0.25, 1.0]])
        v1, _ = gamma2(_mat(M), SETTINGS)
        v3, _ = gamma2(_mat(3 * M), SETTINGS)
        assert v3 == pytest.approx(3 * v1, abs=1e-5)

    def test_factorization_consistency(self):
        M = _mat(np.array([[1.0, -1.0, 0.5], [0.0, 1.0, -0.25]]))
        value, fact = gamma2(M, SETTINGS)
        assert np.abs(fact.R.entries @ fact.A.entries - M.entries).max() <= 1e-6
        r_norm = np.linalg.norm(fact.R.entries, axis=1).max()
        a_norm = np.linalg.norm(fact.A.entries, axis=0).max()
        assert r_norm * a_norm == pytest.approx(value, abs=1e-5)

    def test_zero_matrix(self):
        value, _ = gamma2(_mat(np.zeros((2, 3))), SETTINGS)
        assert value == pytest.approx(0.0, abs=1e-6)


class TestGamma2Approx:
    def test_monotone_in_alpha(self):
        M = _mat(hadamard(4))
        values = [
            gamma2_approx(M, a, SETTINGS)[0] for a in (0.0, 0.1, 0.2, 0.4, 0.7, 1.0)
        ]
        for lo, hi in zip(values[1:], values[:-1]):
            assert lo <= hi + 1e-6
        assert values[-1] == pytest.approx(0.0, abs=1e-4)

    def test_perturbation_within_alpha(self):
        M = _mat(np.array([[1.0, -1.0], [0.5, 1.0]]))
        alpha = 0.3
        value, M_tilde, fact = gamma2_approx(M, alpha, SETTINGS)
        assert np.abs(M_tilde.entries - M.entries).max() <= alpha + 1e-6
        assert fact.residual_inf <= alpha + 1e-6
        exact, _ = gamma2(M, SETTINGS)
        assert value <= exact + 1e-6

    def test_witness_certifies_value(self):
        cls = zoo.thresholds(3)
        D = build_difference_matrix(cls)
        alpha = 0.25
        primal, _, _ = gamma2_approx(D, alpha, SETTINGS)
        w = agnostic_dual_witness(D, alpha, SETTINGS)
        assert w.objective == pytest.approx(primal, abs=1e-5)


class TestGamma2Dual:
    def test_single_entry(self):
        assert gamma2_dual_value(_mat([[1.0]]), SETTINGS) == pytest.approx(1.0, abs=1e-6)

    def test_row_is_l1_norm(self):
        assert gamma2_dual_value(_mat([[0.5, -1.0, 0.25]]), SETTINGS) == pytest.approx(
            1.75, abs=1e-5
        )

    def test_all_ones(self):
        # gamma2*(J_{n x m}) = n*m since gamma2(J) = 1
        assert gamma2_dual_value(_mat(np.ones((2, 3))), SETTINGS) == pytest.approx(
            6.0, abs=1e-4
        )

    def test_holder_inequality(self):
        rng = np.random.default_rng(1)
        M = rng.normal(size=(3, 4))
        U = rng.normal(size=(3, 4))
        g, _ = gamma2(_mat(M), SETTINGS)
        gs = gamma2_dual_value(_mat(U), SETTINGS)
        assert float(np.sum(M * U)) <= g * gs + 1e-6

    def test_unit_assignments(self):
        U = _mat([[1.0, -1.0], [0.5, 0.25]])
        value, f_map, g_map = gamma2_dual(U, SETTINGS)
        direct = sum(
            U.entries[i, j] * float(f_map[i] @ g_map[j])
            for i in range(2)
            for j in range(2)
        )
        assert direct == pytest.approx(value, abs=1e-5)
        assert all(np.linalg.norm(f) <= 1 + 1e-6 for f in f_map.values())
        assert all(np.linalg.norm(g) <= 1 + 1e-6 for g in g_map.values())


class TestAgnosticWitness:
    def test_two_concept_example(self):
        cls = ConceptClass(("x1", "x2"), {"c1": [1, 1], "c2": [1, -1]})
        D = build_difference_matrix(cls)
        w = agnostic_dual_witness(D, 0.25, SETTINGS)
        assert w.objective == pytest.approx(0.75, abs=1e-5)
        assert np.abs(w.U.entries).sum() == pytest.approx(1.0, abs=1e-8)
        assert w.gamma2_star <= 1.0 + 1e-6

    def test_sign_fixed_rows(self):
        cls = zoo.thresholds(4)
        D = build_difference_matrix(cls)
        w = agnostic_dual_witness(D, 0.1, SETTINGS)
        for pair, u in zip(w.U.row_labels, w.U.entries):
            d = D.row(pair)
            assert float(d @ u) >= -1e-9

    def test_degenerate_rejected(self):
        cls = ConceptClass(("x1",), {"c1": [1]})
        D = build_difference_matrix(cls)  # single zero row
        with pytest.raises(SolverError, match="degenerate"):
            agnostic_dual_witness(D, 0.25, SETTINGS)


class TestEta:
    @pytest.mark.parametrize("alpha", [0.1, 0.3, 0.45])
    def test_singleton_closed_form(self, alpha):
        cls = ConceptClass(("x1", "x2"), {"c": [1, 1]})
        sol = eta(cls, alpha, SETTINGS)
        assert sol.value == pytest.approx((1 - alpha) / 2, abs=1e-5)

    def test_constraints_satisfied(self):
        cls = zoo.thresholds(3)
        alpha = 0.2
        sol = eta(cls, alpha, SETTINGS)
        cols = labeled_point_columns(cls.domain)
        for i, name in enumerate(cls.concept_names):
            for j, (x, y) in enumerate(cols):
                w = sol.W.entries[i, j]
                if cls.value(name, x) == y:
                    assert abs(w) <= alpha + 1e-6
                else:
                    assert w >= 1 - 1e-6

    def test_shift_consistency(self):
        cls = zoo.points(3)
        sol = eta(cls, 0.1, SETTINGS)
        shifted = sol.W.entries + np.array(
            [sol.theta[c] for c in cls.concept_names]
        ).reshape(-1, 1)
        assert np.abs(shifted - sol.W_tilde.entries).max() <= 1e-8

    def test_monotone_in_alpha(self):
        cls = zoo.thresholds(3)
        v1 = eta(cls, 0.1, SETTINGS).value
        v2 = eta(cls, 0.3, SETTINGS).value
        assert v2 <= v1 + 1e-6


class TestEtaDuality:
    CLASSES = [
        ConceptClass(("x1", "x2"), {"c": [1, 1]}),
        zoo.thresholds(2),
        zoo.thresholds(3),
        zoo.points(3),
        zoo.points(4),
        zoo.parities(2),
    ]

    @pytest.mark.parametrize("cls", CLASSES, ids=lambda c: f"C{c.num_concepts}X{c.num_points}")
    def test_primal_dual_gap(self, cls):
        assert cls.num_concepts * 2 * cls.num_points <= 32
        alpha = 0.1
        primal = eta(cls, alpha, SETTINGS).value
        w = eta_dual_witness(cls, alpha, SETTINGS)
        assert w.objective == pytest.approx(primal, abs=1e-4)

    def test_witness_structure(self):
        cls = zoo.thresholds(3)
        w = eta_dual_witness(cls, 0.2, SETTINGS)
        validate_eta_witness(w.U, cls, tol=1e-7)
        assert np.abs(w.U.entries).sum() == pytest.approx(1.0, abs=1e-8)

    def test_singleton_witness(self):
        cls = ConceptClass(("x1", "x2"), {"c": [1, 1]})
        w = eta_dual_witness(cls, 0.1, SETTINGS)
        assert w.objective == pytest.approx(0.45, abs=1e-5)
        assert w.gamma2_star == pytest.approx(1.0, abs=1e-4)
