import math

import numpy as np
import pytest

from ldplearn.model import Dataset, IndexedMatrix, LabeledDistribution, sample
from ldplearn.protocol import (
    AuditResult,
    PrivacyParams,
    RandomizerSpec,
    audit_privacy,
    channel_marginal,
    coord_rr_channel,
    coord_rr_symbols,
    discrete_kl,
    randomize,
    run_protocol,
    transcript_kl,
    tv_distance,
    unbiased_decode,
)

EPS1 = PrivacyParams(1.0)


def _spec(entries, kind="coord-rr"):
    """Factor matrix over labeled points (x0, +1), (x0, -1), (x2, +1), ..."""
    entries = np.asarray(entries, dtype=float)
    d, c = entries.shape
    assert c % 2 == 0
    cols = tuple((f"x{2 * (j // 2)}", 1 if j % 2 == 0 else -1) for j in range(c))
    return RandomizerSpec(kind, IndexedMatrix(tuple(range(d)), cols, entries))


def _binary_spec():
    A = IndexedMatrix((0,), (("x", 1), ("x", -1)), [[1.0, -1.0]])
    return RandomizerSpec("coord-rr", A)


class TestPrivacyParams:
    def test_range(self):
        with pytest.raises(ValueError):
            PrivacyParams(0.0)
        with pytest.raises(ValueError):
            PrivacyParams(9.0)
        assert PrivacyParams(math.log(3)).flip_prob == pytest.approx(0.25)


class TestRandomize:
    def test_rr_rate_at_extreme(self):
        spec = _binary_spec()
        params = PrivacyParams(math.log(3))
        hits = sum(
            randomize(spec, ("x", 1), params, seed)[1] == 1 for seed in range(4000)
        )
        assert hits / 4000 == pytest.approx(0.75, abs=0.025)

    def test_zero_value_uniform(self):
        spec = _spec([[0.0, 1.0]])
        # column 0 has value 0 at the only coordinate: output must be uniform
        hits = sum(
            randomize(spec, ("x0", 1), EPS1, seed)[1] == 1 for seed in range(4000)
        )
        assert hits / 4000 == pytest.approx(0.5, abs=0.025)

    def test_deterministic_given_seed(self):
        spec = _spec(np.arange(8.0).reshape(2, 4) - 3)
        assert randomize(spec, ("x2", -1), EPS1, 7) == randomize(spec, ("x2", -1), EPS1, 7)

    def test_unknown_record(self):
        with pytest.raises(KeyError):
            randomize(_binary_spec(), ("y", 1), EPS1, 0)


class TestUnbiasedDecode:
    @pytest.mark.parametrize("eps", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("d", [1, 3, 8])
    def test_exact_expectation_by_enumeration(self, eps, d):
        rng = np.random.default_rng(d)
        spec = _spec(rng.uniform(-1, 1, size=(d, 4)))
        params = PrivacyParams(eps)
        P = coord_rr_channel(spec, params)
        decoded = np.stack(
            [unbiased_decode(s, spec, params) for s in coord_rr_symbols(spec)]
        )
        means = (P.T @ decoded).T  # (d, columns)
        assert np.abs(means - spec.A.entries).max() <= 1e-12

    def test_sign_flip(self):
        spec = _binary_spec()
        plus = unbiased_decode((0, 1), spec, EPS1)
        minus = unbiased_decode((0, -1), spec, EPS1)
        assert np.array_equal(plus, -minus)

    def test_laplace_identity(self):
        spec = _spec(np.ones((3, 2)), kind="laplace-l1")
        v = np.array([0.1, -0.2, 0.3])
        assert np.array_equal(unbiased_decode(v, spec, EPS1), v)


class TestAudit:
    def test_extreme_pair_attains_epsilon(self):
        # a row containing both +m and -m realizes the worst-case ratio
        spec = _binary_spec()
        report = audit_privacy(spec, PrivacyParams(math.log(3)))
        assert report.max_log_ratio == pytest.approx(math.log(3), abs=1e-12)
        assert not report.analytic

    @pytest.mark.parametrize("eps", [0.5, 1.0, 2.0])
    def test_random_specs_within_budget(self, eps):
        params = PrivacyParams(eps)
        for trial in range(20):
            rng = np.random.default_rng(trial)
            spec = _spec(rng.normal(size=(rng.integers(1, 5), 4)))
            assert audit_privacy(spec, params).max_log_ratio <= eps + 1e-9

    def test_identical_columns_no_contribution(self):
        spec = _spec([[0.5, 0.5]])
        assert audit_privacy(spec, EPS1).max_log_ratio == pytest.approx(0.0, abs=1e-12)

    def test_laplace_analytic_flag(self):
        spec = _spec(np.ones((2, 4)), kind="laplace-l1")
        report = audit_privacy(spec, EPS1)
        assert report == AuditResult(max_log_ratio=1.0, analytic=True)


class TestChannelMarginal:
    def test_point_mass_matches_column(self):
        spec = _binary_spec()
        dist = LabeledDistribution.point_mass(("x",), "x", 1)
        marg = channel_marginal(spec, EPS1, dist)
        assert np.allclose(marg.probs, coord_rr_channel(spec, EPS1)[:, 0])

    def test_uniform_labels_antisymmetric_matrix(self):
        spec = _binary_spec()
        dist = LabeledDistribution(("x",), np.array([[0.5, 0.5]]))
        marg = channel_marginal(spec, EPS1, dist)
        assert np.allclose(marg.probs, 0.5)

    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        spec = _spec(rng.normal(size=(3, 4)))
        probs = rng.dirichlet(np.ones(4)).reshape(2, 2)
        # the distribution's domain must match the spec's column points
        marg = channel_marginal(spec, EPS1, LabeledDistribution(("x0", "x2"), probs))
        assert marg.probs.sum() == pytest.approx(1.0, abs=1e-12)


class TestTranscriptKL:
    def test_identical_distributions(self):
        spec = _binary_spec()
        d = LabeledDistribution.point_mass(("x",), "x", 1)
        assert transcript_kl(d, d, spec, EPS1, 5) == pytest.approx(0.0, abs=1e-12)

    def test_binary_rr_closed_form(self):
        spec = _binary_spec()
        a = LabeledDistribution.point_mass(("x",), "x", 1)
        b = LabeledDistribution.point_mass(("x",), "x", -1)
        p = math.e / (1 + math.e)
        expected = (2 * p - 1) * math.log(p / (1 - p))
        assert transcript_kl(a, b, spec, EPS1, 1) == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(0.46212, abs=1e-5)

    def test_linear_in_n(self):
        spec = _binary_spec()
        a = LabeledDistribution.point_mass(("x",), "x", 1)
        b = LabeledDistribution.point_mass(("x",), "x", -1)
        k1 = transcript_kl(a, b, spec, EPS1, 1)
        assert transcript_kl(a, b, spec, EPS1, 7) == pytest.approx(7 * k1, abs=1e-12)

    def test_support_mismatch_infinite(self):
        assert discrete_kl([0.5, 0.5], [1.0, 0.0]) == math.inf
        assert discrete_kl([1.0, 0.0], [0.5, 0.5]) < math.inf


class TestTV:
    def test_labeled_distributions(self):
        a = LabeledDistribution.point_mass(("x", "y"), "x", 1)
        b = LabeledDistribution.point_mass(("x", "y"), "y", -1)
        assert tv_distance(a, b) == pytest.approx(1.0)
        assert tv_distance(a, a) == 0.0

    def test_channel_distributions(self):
        spec = _binary_spec()
        a = channel_marginal(spec, EPS1, LabeledDistribution.point_mass(("x",), "x", 1))
        b = channel_marginal(spec, EPS1, LabeledDistribution.point_mass(("x",), "x", -1))
        assert 0 < tv_distance(a, b) < 1

    def test_type_mismatch(self):
        a = LabeledDistribution.point_mass(("x",), "x", 1)
        with pytest.raises(TypeError):
            tv_distance(a, [0.5, 0.5])

    def test_pinsker_and_contraction_on_random_pairs(self):
        rng = np.random.default_rng(42)
        spec = _spec(rng.normal(size=(2, 4)))
        domain = ("x0", "x2")
        for _ in range(50):
            pa = rng.dirichlet(np.ones(4)).reshape(2, 2)
            pb = rng.dirichlet(np.ones(4)).reshape(2, 2)
            a = LabeledDistribution(domain, pa)
            b = LabeledDistribution(domain, pb)
            kl = transcript_kl(a, b, spec, EPS1, 1)
            tv_msg = tv_distance(
                channel_marginal(spec, EPS1, a), channel_marginal(spec, EPS1, b)
            )
            tv_in = tv_distance(a, b)
            assert kl >= 2 * tv_msg**2 - 1e-12  # Pinsker
            assert kl <= 4 * (math.e - 1) ** 2 * (2 * tv_in) ** 2 + 1e-12  # SDPI


class TestRunProtocol:
    @pytest.fixture
    def setup(self):
        rng = np.random.default_rng(5)
        spec = _spec(rng.normal(size=(3, 4)))
        R = IndexedMatrix(("q0", "q1"), (0, 1, 2), rng.normal(size=(2, 3)))
        dist = LabeledDistribution(
            ("x0", "x2"), np.array([[0.4, 0.1], [0.2, 0.3]])
        )
        data = sample(dist, 300, seed=1)
        emp = data.histogram().ravel() / len(data)
        truth = R.entries @ spec.A.entries @ emp
        return spec, R, data, truth

    def test_noise_free_hook_exact(self, setup):
        spec, R, data, truth = setup
        out = run_protocol(data, R, spec, EPS1, 0, noise_free=True)
        assert np.abs(np.array([out["q0"], out["q1"]]) - truth).max() <= 1e-12

    def test_unbiased_over_seeds(self, setup):
        spec, R, data, truth = setup
        n_seeds = 3000
        acc = np.zeros(2)
        acc2 = np.zeros(2)
        for seed in range(n_seeds):
            out = run_protocol(data, R, spec, EPS1, seed)
            v = np.array([out["q0"], out["q1"]])
            acc += v
            acc2 += v * v
        mean = acc / n_seeds
        se = np.sqrt((acc2 / n_seeds - mean**2) / n_seeds)
        assert np.all(np.abs(mean - truth) <= 3 * se + 1e-9)

    def test_laplace_path_unbiased(self, setup):
        spec, R, data, truth = setup
        lspec = RandomizerSpec("laplace-l1", spec.A)
        acc = np.zeros(2)
        for seed in range(800):
            out = run_protocol(data, R, lspec, EPS1, seed)
            acc += [out["q0"], out["q1"]]
        assert np.abs(acc / 800 - truth).max() <= 0.05

    def test_empty_dataset(self, setup):
        spec, R, _, _ = setup
        with pytest.raises(ValueError):
            run_protocol(Dataset(("x0",), []), R, spec, EPS1, 0)

    def test_transcript_dump(self, setup, tmp_path):
        spec, R, data, _ = setup
        path = tmp_path / "t.csv"
        run_protocol(data, R, spec, EPS1, 0, transcript_path=path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "record_index,message_symbol"
        assert len(lines) == len(data) + 1

    def test_rmse_halves_when_n_quadruples(self):
        rng = np.random.default_rng(9)
        spec = _spec(rng.normal(size=(3, 4)))
        R = IndexedMatrix(("q",), (0, 1, 2), rng.normal(size=(1, 3)))
        dist = LabeledDistribution(("x0", "x2"), np.array([[0.4, 0.1], [0.2, 0.3]]))
        rmses = []
        for n in (1024, 4096):
            data = sample(dist, n, seed=2)
            emp = data.histogram().ravel() / n
            truth = (R.entries @ spec.A.entries @ emp)[0]
            errs = [
                run_protocol(data, R, spec, EPS1, s)["q"] - truth for s in range(300)
            ]
            rmses.append(float(np.sqrt(np.mean(np.square(errs)))))
        assert rmses[1] / rmses[0] == pytest.approx(0.5, abs=0.1)
