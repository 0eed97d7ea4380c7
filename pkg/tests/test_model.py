import json

import numpy as np
import pytest

from ldplearn import zoo
from ldplearn.model import (
    BRUTE_FORCE_CAP,
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


@pytest.fixture
def two_concepts():
    return ConceptClass(("x1", "x2"), {"c1": [1, 1], "c2": [1, -1]})


class TestConceptClass:
    def test_basic_shape(self, two_concepts):
        assert two_concepts.num_concepts == 2
        assert two_concepts.num_points == 2
        assert two_concepts.value("c2", "x2") == -1

    def test_duplicate_vectors_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            ConceptClass(("x1",), {"a": [1], "b": [1]})

    def test_non_sign_entries_rejected(self):
        with pytest.raises(ValueError):
            ConceptClass(("x1", "x2"), {"a": [1, 0.5]})

    def test_negation_closed_detection(self, two_concepts):
        assert not two_concepts.is_negation_closed()
        assert zoo.negation_closure(two_concepts).is_negation_closed()

    def test_hypothesis_coercion(self, two_concepts):
        assert np.array_equal(two_concepts.hypothesis("c2"), [1, -1])
        assert np.array_equal(two_concepts.hypothesis({"x1": -1, "x2": 1}), [-1, 1])
        with pytest.raises(DomainMismatchError):
            two_concepts.hypothesis({"x1": 1})


class TestIndexedMatrix:
    def test_json_round_trip(self):
        m = IndexedMatrix(("r",), (("x", 1), ("x", -1)), [[0.25, -0.75]])
        back = IndexedMatrix.from_json(json.loads(json.dumps(m.to_json())))
        assert back.row_labels == m.row_labels
        assert back.col_labels == m.col_labels
        assert np.array_equal(back.entries, m.entries)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            IndexedMatrix(("r",), ("c",), [[1.0, 2.0]])

    def test_entries_read_only(self):
        m = IndexedMatrix(("r",), ("c",), [[1.0]])
        with pytest.raises(ValueError):
            m.entries[0, 0] = 2.0


class TestLabeledDistribution:
    def test_normalization_guard(self):
        with pytest.raises(ValueError):
            LabeledDistribution(("x",), np.array([[0.4, 0.4]]))

    def test_marginal_and_flip(self):
        d = LabeledDistribution.from_table(("a", "b"), {("a", 1): 0.3, ("b", -1): 0.7})
        assert np.allclose(d.marginal(), [0.3, 0.7])
        f = d.flip_labels()
        assert f.prob("a", -1) == pytest.approx(0.3)
        assert np.allclose(f.marginal(), d.marginal())

    def test_mix_convexity(self):
        a = LabeledDistribution.point_mass(("x",), "x", 1)
        b = LabeledDistribution.point_mass(("x",), "x", -1)
        m = a.mix(b, 0.25)
        assert m.prob("x", 1) == pytest.approx(0.25)

    def test_json_round_trip(self):
        d = LabeledDistribution.from_table(("a", "b"), {("a", 1): 0.5, ("b", -1): 0.5})
        back = LabeledDistribution.from_json(json.loads(json.dumps(d.to_json())))
        assert np.allclose(back.probs, d.probs)

    def test_labeled_by(self):
        d = LabeledDistribution.labeled_by(("a", "b"), [0.5, 0.5], [1, -1])
        assert d.prob("a", 1) == 0.5 and d.prob("b", -1) == 0.5
        assert bayes_error(d) == 0.0


class TestDataset:
    def test_histogram_and_loss(self):
        data = Dataset(("a", "b"), [("a", 1), ("a", 1), ("b", -1), ("a", -1)])
        h = data.histogram()
        assert h[0, 0] == 2 and h[0, 1] == 1 and h[1, 1] == 1
        assert empirical_loss(data, [1, -1]) == pytest.approx(0.25)

    def test_csv_round_trip(self, tmp_path):
        data = Dataset(("a", "b"), [("a", 1), ("b", -1)])
        path = tmp_path / "d.csv"
        data.to_csv(path)
        back = Dataset.from_csv(path, ("a", "b"))
        assert back.records == data.records

    def test_sampling_deterministic(self):
        d = LabeledDistribution.from_table(("a", "b"), {("a", 1): 0.5, ("b", -1): 0.5})
        assert sample(d, 50, seed=3).records == sample(d, 50, seed=3).records
        assert sample(d, 50, seed=3).records != sample(d, 50, seed=4).records

    def test_sampling_frequencies(self):
        d = LabeledDistribution.from_table(("a", "b"), {("a", 1): 0.8, ("b", -1): 0.2})
        h = sample(d, 20000, seed=0).histogram()
        assert h[0, 0] / 20000 == pytest.approx(0.8, abs=0.02)


class TestWeightedIndex:
    def test_restrict_renormalizes(self):
        w = WeightedIndex(("a", "b", "c"), [0.2, 0.3, 0.5])
        r = w.restrict(["a", "c"])
        assert r.weight("c") == pytest.approx(0.5 / 0.7)

    def test_invalid_sum(self):
        with pytest.raises(ValueError):
            WeightedIndex(("a",), [0.5])


class TestMatrices:
    def test_concept_matrix(self, two_concepts):
        W = build_concept_matrix(two_concepts)
        assert W.row_labels == ("c1", "c2")
        assert np.array_equal(W.entries, [[1, 1], [1, -1]])

    def test_difference_matrix(self, two_concepts):
        D = build_difference_matrix(two_concepts)
        assert np.array_equal(D.row(("c1", "c2")), [0, 1])
        assert np.array_equal(D.row(("c2", "c2")), [0, 0])

    def test_loss_and_sign_queries_affine(self, two_concepts):
        Lq = build_loss_query_matrix(two_concepts)
        Sq = build_sign_query_matrix(two_concepts)
        assert np.allclose(Lq.entries, (1 - Sq.entries) / 2)
        assert Lq.col_labels == tuple(labeled_point_columns(two_concepts.domain))

    def test_sign_query_expectation_recovers_loss(self, two_concepts):
        d = LabeledDistribution.from_table(
            ("x1", "x2"), {("x1", 1): 0.25, ("x2", 1): 0.25, ("x2", -1): 0.5}
        )
        Sq = build_sign_query_matrix(two_concepts)
        p = d.probs.ravel()
        for i, name in enumerate(two_concepts.concept_names):
            corr = Sq.entries[i] @ p
            assert (1 - corr) / 2 == pytest.approx(
                population_loss(d, two_concepts.vector(name)), abs=1e-12
            )


class TestLosses:
    def test_bayes_error_and_majority(self):
        d = LabeledDistribution.from_table(
            ("a", "b"), {("a", 1): 0.4, ("a", -1): 0.1, ("b", -1): 0.5}
        )
        assert bayes_error(d) == pytest.approx(0.1)
        assert population_loss(d, majority_hypothesis(d)) == pytest.approx(bayes_error(d))

    def test_population_loss_bounds(self):
        d = LabeledDistribution.point_mass(("a",), "a", 1)
        assert population_loss(d, [1]) == 0.0
        assert population_loss(d, [-1]) == 1.0


class TestOperatorNorm:
    def test_single_row_is_l1(self):
        M = IndexedMatrix(("r",), ("a", "b", "c"), [[0.5, -1.0, 0.25]])
        pi = WeightedIndex(("r",), [1.0])
        assert operator_norm_inf_to_l2(M, pi) == pytest.approx(1.75)

    def test_uniform_two_rows(self):
        M = IndexedMatrix(("r", "s"), ("a", "b"), [[1.0, 1.0], [1.0, -1.0]])
        pi = WeightedIndex(("r", "s"), [0.5, 0.5])
        # either vertex achieves 2 on one row and 0 on the other
        assert operator_norm_inf_to_l2(M, pi) == pytest.approx(np.sqrt(2))

    def test_sign_vectors_cover_half_cube(self):
        V = sign_vectors(4)
        assert V.shape == (8, 4)
        assert np.all(V[:, 0] == 1)
        assert len({tuple(v) for v in V}) == 8

    def test_cap_enforced(self):
        M = IndexedMatrix(("r",), tuple(range(BRUTE_FORCE_CAP + 1)),
                          np.ones((1, BRUTE_FORCE_CAP + 1)))
        pi = WeightedIndex(("r",), [1.0])
        with pytest.raises(ValueError):
            operator_norm_inf_to_l2(M, pi)
        assert operator_norm_inf_to_l2(M, pi, sampled=True, num_samples=200) <= (
            BRUTE_FORCE_CAP + 1
        )
