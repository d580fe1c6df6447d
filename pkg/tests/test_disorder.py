import numpy as np
import pytest

from setn.disorder import (DisorderSpec, analytic_o_entry, averaged_phase_factor,
                           dense_o_matrix, monte_carlo_o, phase_vector, sample,
                           sinc, task_seeds)


class TestSample:
    def test_uniform_mean_bound(self):
        batch = sample(DisorderSpec("uniform", 0.5), 10**6, seed=42)
        assert abs(batch.values.mean()) < 0.001  # 3 sigma / sqrt(M)
        assert batch.values.min() >= -0.5 and batch.values.max() <= 0.5

    def test_gaussian_variance(self):
        batch = sample(DisorderSpec("gaussian", 1.0), 10**6, seed=7)
        assert 0.995 <= batch.values.var() <= 1.005

    def test_deterministic(self):
        a = sample(DisorderSpec("uniform", 0.3), 1, seed=9)
        b = sample(DisorderSpec("uniform", 0.3), 1, seed=9)
        assert a.values[0] == b.values[0]

    def test_task_seeds_independent(self):
        seqs = task_seeds(5, 3)
        vals = [np.random.default_rng(s).uniform() for s in seqs]
        assert len(set(vals)) == 3

    def test_validation(self):
        with pytest.raises(ValueError):
            sample(DisorderSpec("uniform", 0.5), 0, seed=1)
        with pytest.raises(ValueError):
            DisorderSpec("uniform", 0.0)
        with pytest.raises(ValueError):
            DisorderSpec("binary", 1.0)


class TestPhaseVector:
    def test_zero_field(self):
        assert np.allclose(phase_vector(0.0, 0.1), [1.0, 1.0])

    def test_quarter_rotation(self):
        tau = 0.2
        v = phase_vector(np.pi / (2 * tau), tau)
        assert np.allclose(v, [-1j, 1j], atol=1e-12)

    def test_unit_modulus_product(self, rng):
        for _ in range(20):
            v = phase_vector(rng.uniform(-3, 3), 0.37)
            assert abs(v[0] * v[1]) == pytest.approx(1.0, abs=1e-12)


class TestAnalyticEntry:
    def test_equal_vectors(self):
        spec = DisorderSpec("uniform", 0.7)
        assert analytic_o_entry([1, -1, 1], [1, -1, 1], spec, 0.3) == 1.0

    def test_sine_zero(self):
        tau = 0.4
        spec = DisorderSpec("uniform", np.pi / (2 * 0.4))
        assert analytic_o_entry([1], [-1], spec, tau) == pytest.approx(0.0, abs=1e-15)

    def test_gaussian_against_monte_carlo(self):
        spec = DisorderSpec("gaussian", 1.0)
        tau = 0.1
        exact = analytic_o_entry([1], [-1], spec, tau)
        assert exact == pytest.approx(np.exp(-0.02), abs=1e-12)
        h = np.random.default_rng(3).normal(0, 1.0, 10**7)
        mc = np.exp(2j * h * tau).mean().real
        assert abs(mc - exact) < 1e-3

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            analytic_o_entry([1, 1], [1], DisorderSpec(), 0.1)

    def test_depends_only_on_delta(self, rng):
        # permuting time slots consistently leaves the entry unchanged
        spec = DisorderSpec("gaussian", 0.8)
        sp = np.array([1, -1, 1, 1, -1])
        s = np.array([-1, -1, 1, -1, 1])
        perm = rng.permutation(5)
        assert analytic_o_entry(sp, s, spec, 0.2) == pytest.approx(
            analytic_o_entry(sp[perm], s[perm], spec, 0.2), abs=1e-15)


class TestDenseMatrix:
    def test_one_step_uniform(self):
        o = dense_o_matrix(1, DisorderSpec("uniform", 0.5), 0.005)
        val = sinc(0.005)
        assert np.allclose(o, [[1.0, val], [val, 1.0]], atol=1e-14)
        assert val == pytest.approx(0.9999958, abs=1e-6)

    def test_psd_unit_diagonal_randomized(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 7))
            kind = rng.choice(["uniform", "gaussian"])
            spec = DisorderSpec(kind, float(rng.uniform(0.05, 3.0)))
            o = dense_o_matrix(n, spec, float(rng.uniform(0.001, 0.3)))
            assert np.allclose(np.diag(o), 1.0, atol=1e-14)
            assert np.allclose(o, o.T, atol=1e-14)
            assert np.linalg.eigvalsh(o).min() >= -1e-10

    def test_weak_disorder_rank_one(self):
        o = dense_o_matrix(3, DisorderSpec("uniform", 1e-9), 0.01)
        assert np.allclose(o, 1.0, atol=1e-12)

    def test_size_guard(self):
        with pytest.raises(ValueError):
            dense_o_matrix(13, DisorderSpec(), 0.1)


class TestMonteCarlo:
    def test_single_zero_field(self):
        spec = DisorderSpec("uniform", 0.5)
        batch = sample(spec, 1, seed=0)
        object.__setattr__(batch, "values", np.zeros(1))
        o = monte_carlo_o(2, batch, 0.1)
        assert np.allclose(o, 1.0, atol=1e-15)

    def test_matches_analytic(self):
        spec = DisorderSpec("uniform", 0.5)
        batch = sample(spec, 10**6, seed=21)
        o_mc = monte_carlo_o(2, batch, 0.005)
        o_ref = dense_o_matrix(2, spec, 0.005)
        assert np.abs(o_mc - o_ref).max() < 5e-3

    def test_hermitian(self):
        batch = sample(DisorderSpec("gaussian", 1.2), 500, seed=4)
        o = monte_carlo_o(3, batch, 0.2)
        assert np.abs(o - o.conj().T).max() < 1e-12

    def test_statistical_bound_over_seeds(self):
        # max-entry error <= 5/sqrt(M) for at least 99 of 100 seeds
        spec = DisorderSpec("uniform", 0.9)
        m = 4000
        bound = 5.0 / np.sqrt(m)
        fails = 0
        for seed in range(100):
            batch = sample(spec, m, seed=seed)
            dev = np.abs(monte_carlo_o(2, batch, 0.05)
                         - dense_o_matrix(2, spec, 0.05)).max()
            fails += dev > bound
        assert fails <= 1


def test_sinc_series_branch():
    assert sinc(0.0) == 1.0
    x = 5e-9
    assert sinc(x) == pytest.approx(1.0 - x * x / 6.0, abs=1e-18)
    assert sinc(np.pi) == pytest.approx(0.0, abs=1e-15)


def test_averaged_phase_factor_range(rng):
    for _ in range(50):
        spec = DisorderSpec(rng.choice(["uniform", "gaussian"]),
                            float(rng.uniform(0.1, 2.0)))
        val = averaged_phase_factor(int(rng.integers(-8, 9)), spec, 0.3)
        assert -1.0 <= val <= 1.0
