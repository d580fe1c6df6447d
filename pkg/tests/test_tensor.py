import numpy as np
import pytest

from setn.tensor import (DimensionError, NumericError, SvdResult,
                         TruncationPolicy, clamp_spectrum, contract, qr,
                         qr_svd, svd_truncated)
from conftest import random_complex, random_unitary


class TestContract:
    def test_identity_times_vector(self, rng):
        v = random_complex(rng, 2)
        out = contract(np.eye(2), v, [(1, 0)])
        assert np.allclose(out, v, atol=1e-15)

    def test_matches_triple_loop(self, rng):
        a = random_complex(rng, 2, 3)
        b = random_complex(rng, 3, 4)
        ref = np.zeros((2, 4), dtype=complex)
        for i in range(2):
            for j in range(4):
                for k in range(3):
                    ref[i, j] += a[i, k] * b[k, j]
        assert np.allclose(contract(a, b, [(1, 0)]), ref, atol=1e-13)

    def test_full_contraction_is_squared_norm(self, rng):
        a = random_complex(rng, 3, 4, 2)
        out = contract(a, a.conj(), [(0, 0), (1, 1), (2, 2)])
        assert out.shape == ()
        assert np.allclose(out, np.sum(np.abs(a) ** 2), atol=1e-12)

    def test_extent_mismatch(self, rng):
        with pytest.raises(DimensionError):
            contract(random_complex(rng, 2, 3), random_complex(rng, 4, 2), [(1, 0)])

    def test_associativity_three_chain(self, rng):
        a = random_complex(rng, 4, 5)
        b = random_complex(rng, 5, 6)
        c = random_complex(rng, 6, 3)
        left = contract(contract(a, b, [(1, 0)]), c, [(1, 0)])
        right = contract(a, contract(b, c, [(1, 0)]), [(1, 0)])
        assert np.allclose(left, right, rtol=1e-12, atol=1e-12)

    def test_permutation_round_trip(self, rng):
        a = random_complex(rng, 3, 4, 5)
        perm = (2, 0, 1)
        inv = np.argsort(perm)
        back = np.ascontiguousarray(np.transpose(np.transpose(a, perm), inv))
        assert back.tobytes() == a.tobytes()


class TestSvdTruncated:
    def test_diagonal_truncation(self):
        m = np.diag([3.0, 1.0, 0.0]).astype(complex)
        res = svd_truncated(m, TruncationPolicy(rel_threshold=0.5))
        assert np.allclose(res.s, [3.0])
        assert res.discarded_weight == pytest.approx(1.0 / 10.0, abs=1e-14)

    def test_unitary_spectrum(self, rng):
        u = random_unitary(rng, 4)
        res = svd_truncated(u, TruncationPolicy(rel_threshold=1e-10))
        assert np.allclose(res.s, np.ones(4), atol=1e-12)

    def test_rank_one(self, rng):
        u = random_complex(rng, 5)
        v = random_complex(rng, 3)
        res = svd_truncated(np.outer(u, v.conj()), TruncationPolicy(rel_threshold=1e-8))
        assert res.rank == 1
        assert res.s[0] == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v), rel=1e-12)

    def test_reconstruction_weight_randomized(self, rng):
        # always-on property: squared reconstruction error equals the
        # discarded weight for arbitrary shapes and thresholds
        for _ in range(100):
            rows = int(rng.integers(1, 8))
            cols = int(rng.integers(1, 8))
            m = random_complex(rng, rows, cols)
            thr = float(rng.choice([0.0, 1e-10, 1e-2, 0.3, 0.8]))
            res = svd_truncated(m, TruncationPolicy(rel_threshold=thr))
            rec = res.u @ np.diag(res.s) @ res.vh
            err2 = np.sum(np.abs(m - rec) ** 2) / np.sum(np.abs(m) ** 2)
            assert err2 == pytest.approx(res.discarded_weight, abs=1e-10)
            assert np.allclose(res.u.conj().T @ res.u, np.eye(res.rank), atol=1e-12)
            assert np.allclose(res.vh @ res.vh.conj().T, np.eye(res.rank), atol=1e-12)
            assert np.all(np.diff(res.s) <= 1e-15)

    def test_max_rank_cap(self, rng):
        m = random_complex(rng, 6, 6)
        res = svd_truncated(m, TruncationPolicy(rel_threshold=0.0, max_rank=2))
        assert res.rank == 2

    def test_gauge_deterministic(self, rng):
        m = random_complex(rng, 5, 5)
        r1 = svd_truncated(m, TruncationPolicy())
        r2 = svd_truncated(m.copy(), TruncationPolicy())
        assert r1.u.tobytes() == r2.u.tobytes()
        piv = np.abs(r1.u).argmax(axis=0)
        vals = r1.u[piv, np.arange(r1.rank)]
        assert np.all(vals.real > 0)
        assert np.allclose(vals.imag, 0.0, atol=1e-12)

    def test_nonfinite_rejected(self):
        m = np.array([[1.0, np.nan], [0.0, 1.0]])
        with pytest.raises(NumericError):
            svd_truncated(m, TruncationPolicy())

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            TruncationPolicy(rel_threshold=1.0)
        with pytest.raises(ValueError):
            TruncationPolicy(max_rank=0)


class TestQr:
    def test_identity(self):
        q, r = qr(np.eye(3))
        assert np.allclose(np.abs(q), np.eye(3), atol=1e-14)
        assert np.allclose(q @ r, np.eye(3), atol=1e-14)

    def test_isometry(self, rng):
        m = random_complex(rng, 6, 3)
        q, r = qr(m)
        assert np.allclose(q.conj().T @ q, np.eye(3), atol=1e-12)

    def test_reconstruction(self, rng):
        m = random_complex(rng, 5, 4)
        q, r = qr(m)
        assert np.abs(q @ r - m).max() < 1e-12


def test_clamp_spectrum():
    s = np.array([1.0, 1e-3, 1e-15])
    out = clamp_spectrum(s)
    assert out[2] == 0.0 and out[1] == 1e-3


def test_qr_svd_matches_lapack(rng):
    t = random_complex(rng, 8, 200)
    s1, u1, w1 = qr_svd(t)
    s2 = np.linalg.svd(t, compute_uv=False)
    assert np.allclose(s1, s2, rtol=1e-10, atol=1e-12)
    # left vectors reconstruct T up to unitary freedom: U U^H T == T
    assert np.abs(u1 @ (u1.conj().T @ t) - t).max() < 1e-10
