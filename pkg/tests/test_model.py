import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsesense.errors import InstanceTooLargeError, InvalidSparsityError, ShapeError
from sparsesense.model import (
    MasterSeed,
    SparseSignal,
    generate_sensing_matrix,
    generate_sparse_signal,
    read_matrix,
    rip_constant_bruteforce,
    synthesize_measurements,
    write_matrix,
)


class TestSparseSignal:
    def test_zero_sparsity_gives_zero_vector(self, rng):
        s = generate_sparse_signal(40, 0, rng)
        assert s.coefficients.shape == (40,)
        assert not np.any(s.coefficients)
        assert s.support == ()

    def test_two_nonzeros(self, rng):
        s = generate_sparse_signal(40, 2, rng)
        assert np.count_nonzero(s.coefficients) == 2
        assert np.sum(s.coefficients == 0.0) == 38
        assert s.per_nonzero_variance == 0.5

    def test_expected_energy_is_one(self):
        # sample mean of ||h||^2 over 1e5 draws; the analytic expectation is 1
        rng = np.random.default_rng(1)
        energies = np.array([np.sum(generate_sparse_signal(40, 6, rng).coefficients ** 2)
                             for _ in range(100_000)])
        assert abs(energies.mean() - 1.0) < 0.02

    def test_k_larger_than_n(self, rng):
        with pytest.raises(InvalidSparsityError):
            generate_sparse_signal(5, 6, rng)

    @given(n=st.integers(1, 60), data=st.data(), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=80, deadline=None)
    def test_support_invariants(self, n, data, seed):
        k = data.draw(st.integers(0, n))
        s = generate_sparse_signal(n, k, np.random.default_rng(seed))
        assert len(set(s.support)) == k
        assert all(0 <= i < n for i in s.support)
        assert np.count_nonzero(s.coefficients) == k
        off = np.setdiff1d(np.arange(n), np.array(s.support, dtype=int))
        assert np.all(s.coefficients[off] == 0.0)


class TestSensingMatrix:
    def test_shape(self, rng):
        assert generate_sensing_matrix(20, 40, rng).shape == (20, 40)

    def test_smallest_shape(self, rng):
        X = generate_sensing_matrix(1, 1, rng)
        assert X.shape == (1, 1) and np.isfinite(X[0, 0])

    def test_unit_entry_variance(self, rng):
        X = generate_sensing_matrix(200, 400, rng)
        assert abs(X.var() - 1.0) < 0.05

    @pytest.mark.parametrize("m,n", [(0, 4), (4, 0)])
    def test_invalid_shape(self, rng, m, n):
        with pytest.raises(ShapeError):
            generate_sensing_matrix(m, n, rng)

    def test_no_zero_rows(self, rng):
        X = generate_sensing_matrix(50, 3, rng)
        assert np.all(np.any(X != 0, axis=1))


class TestMeasurements:
    def test_noise_variance_at_10db(self, rng):
        X = generate_sensing_matrix(20, 40, rng)
        h = generate_sparse_signal(40, 2, rng)
        ens = synthesize_measurements(X, h, 10.0, rng)
        assert ens.noise_variance == pytest.approx(0.1, rel=1e-15)

    def test_no_noise_mode_is_exact(self, rng):
        X = generate_sensing_matrix(20, 40, rng)
        h = generate_sparse_signal(40, 2, rng)
        ens = synthesize_measurements(X, h, math.inf, rng)
        assert np.linalg.norm(ens.observations - X @ h.coefficients) == 0.0
        assert ens.noise_variance == 0.0

    def test_sensing_matrix_is_bit_exact_without_dictionary(self, rng):
        X = generate_sensing_matrix(5, 8, rng)
        ens = synthesize_measurements(X, np.zeros(8), 10.0, rng)
        assert np.array_equal(ens.sensing_matrix, X)
        assert np.array_equal(ens.dictionary, np.eye(8))

    def test_dictionary_composition(self, rng):
        W = generate_sensing_matrix(5, 8, rng)
        D, _ = np.linalg.qr(rng.standard_normal((8, 8)))
        ens = synthesize_measurements(W, np.ones(8), math.inf, rng, dictionary=D)
        np.testing.assert_array_equal(ens.sensing_matrix, W @ D)
        np.testing.assert_allclose(ens.observations, W @ D @ np.ones(8))

    def test_noise_sample_variance_at_0db(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((10, 4))
        h = np.array([0.5, 0.0, -0.5, 0.0])
        clean = X @ h
        samples = np.concatenate([synthesize_measurements(X, h, 0.0, rng).observations - clean
                                  for _ in range(10_000)])
        assert abs(samples.var() - 1.0) < 0.02

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            synthesize_measurements(np.ones((3, 4)), np.ones(5), 10.0, rng)

    def test_amplitude20_convention(self, rng):
        ens = synthesize_measurements(np.ones((2, 2)), np.ones(2), 10.0, rng, convention="amplitude20")
        assert ens.noise_variance == pytest.approx(10 ** -0.5)


class TestMasterSeed:
    def _draw(self, seed, trial):
        r = MasterSeed(seed, trial).rng()
        return generate_sparse_signal(40, 6, r).coefficients, generate_sensing_matrix(20, 40, r)

    def test_bit_identical(self):
        a = self._draw(123, 4)
        b = self._draw(123, 4)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_distinct_trials_differ(self):
        assert not np.array_equal(self._draw(123, 4)[1], self._draw(123, 5)[1])

    def test_streams_uncorrelated(self):
        a = MasterSeed(9, 0).rng().standard_normal(20_000)
        b = MasterSeed(9, 1).rng().standard_normal(20_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.03

    def test_seed_range(self):
        with pytest.raises(ValueError):
            MasterSeed(2**64)
        MasterSeed(2**64 - 1).rng()


def _rip_oracle(A, k):
    # per-support singular values of the column submatrix
    worst = 0.0
    for S in itertools.combinations(range(A.shape[1]), k):
        sv = np.linalg.svd(A[:, list(S)], compute_uv=False)
        worst = max(worst, 1 - sv.min() ** 2, sv.max() ** 2 - 1)
    return worst


class TestRip:
    @pytest.mark.parametrize("k", [1, 2, 5])
    def test_identity(self, k):
        assert rip_constant_bruteforce(np.eye(5), k) == pytest.approx(0.0, abs=1e-14)

    def test_orthonormal_columns_k1(self, rng):
        Q, _ = np.linalg.qr(rng.standard_normal((6, 4)))
        assert rip_constant_bruteforce(Q, 1) == pytest.approx(0.0, abs=1e-14)

    def test_matches_singular_value_oracle(self, rng):
        X = rng.standard_normal((4, 8))
        assert rip_constant_bruteforce(X, 2, scale=0.5) == pytest.approx(
            _rip_oracle(0.5 * X, 2), rel=1e-10)

    def test_monotone_in_k(self, rng):
        X = rng.standard_normal((5, 9)) / math.sqrt(5)
        deltas = [rip_constant_bruteforce(X, k) for k in range(1, 6)]
        assert all(a <= b + 1e-12 for a, b in zip(deltas, deltas[1:]))

    def test_cap(self, rng):
        with pytest.raises(InstanceTooLargeError):
            rip_constant_bruteforce(rng.standard_normal((20, 40)), 10)

    def test_k_too_large(self):
        with pytest.raises(InvalidSparsityError):
            rip_constant_bruteforce(np.ones((2, 5)), 3)


def test_matrix_text_round_trip(tmp_path, rng):
    A = rng.standard_normal((3, 5))
    path = tmp_path / "a.txt"
    write_matrix(path, A)
    assert path.read_text().splitlines()[0] == "3 5"
    assert np.array_equal(read_matrix(path), A)


def test_sparse_signal_properties():
    s = SparseSignal(np.array([0.0, 2.0, 0.0]), (1,), 1.0)
    assert s.n == 3 and s.k == 1
