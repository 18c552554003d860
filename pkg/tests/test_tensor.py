import numpy as np
import numpy.testing as npt
import pytest

from mpolstm import tensor


class TestReshape:
    def test_product_preserving_reshape_succeeds(self):
        t = np.arange(256 * 1024, dtype=np.float64).reshape(256, 1024)
        out = tensor.reshape(t, (8, 2, 2, 8, 8, 2, 2, 8, 4))
        assert out.shape == (8, 2, 2, 8, 8, 2, 2, 8, 4)
        npt.assert_array_equal(out.ravel(), t.ravel())

    def test_round_trip_is_identity(self):
        t = np.arange(6, dtype=np.float64)
        back = tensor.reshape(tensor.reshape(t, (2, 3)), (6,))
        assert back.tobytes() == t.tobytes()

    def test_product_mismatch_raises(self):
        with pytest.raises(ValueError):
            tensor.reshape(np.zeros(4), (3,))

    def test_non_positive_extent_raises(self):
        with pytest.raises(ValueError):
            tensor.reshape(np.zeros(4), (4, 0))


class TestPermute:
    def test_swap_is_transpose(self):
        t = np.arange(6, dtype=np.float64).reshape(2, 3)
        npt.assert_array_equal(tensor.permute(t, (1, 0)), t.T)

    def test_inverse_round_trip_is_bit_exact(self):
        rng = np.random.default_rng(3)
        t = rng.standard_normal((2, 3, 4, 5))
        perm = (2, 0, 3, 1)
        back = tensor.permute(tensor.permute(t, perm), tuple(np.argsort(perm)))
        assert back.tobytes() == np.ascontiguousarray(t).tobytes()

    def test_invalid_permutation_raises(self):
        with pytest.raises(ValueError):
            tensor.permute(np.zeros((2, 2)), (0, 0))


class TestMatmul:
    def test_identity(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 4))
        npt.assert_allclose(tensor.matmul(np.eye(4), a), a, rtol=0, atol=0)

    def test_zero(self):
        a = np.random.default_rng(1).standard_normal((3, 5))
        npt.assert_array_equal(tensor.matmul(a, np.zeros((5, 2))), np.zeros((3, 2)))

    def test_hand_expanded_product(self):
        a = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        b = np.array([[7.0, 8.0], [9.0, 10.0], [11.0, 12.0]])
        # expanded by hand: row-by-column sums
        expected = np.array([[1 * 7 + 2 * 9 + 3 * 11, 1 * 8 + 2 * 10 + 3 * 12],
                             [4 * 7 + 5 * 9 + 6 * 11, 4 * 8 + 5 * 10 + 6 * 12]],
                            dtype=np.float64)
        npt.assert_array_equal(tensor.matmul(a, b), expected)

    def test_extent_mismatch_raises(self):
        with pytest.raises(ValueError):
            tensor.matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def _matrix_with_spectrum(rng, spectrum, m, n):
    """Build Q1 @ diag(spectrum) @ Q2.T from random orthogonal factors."""
    q1, _ = np.linalg.qr(rng.standard_normal((m, m)))
    q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    r = len(spectrum)
    return (q1[:, :r] * np.asarray(spectrum)) @ q2[:, :r].T


class TestTruncatedSvd:
    def test_identity_full_rank(self):
        res = tensor.truncated_svd(np.eye(4), max_rank=4)
        npt.assert_allclose(res.s, np.ones(4), rtol=0, atol=1e-15)
        assert res.discarded_norm == 0.0

    def test_rank_one_outer_product(self):
        rng = np.random.default_rng(5)
        u = rng.standard_normal(6)
        v = rng.standard_normal(4)
        res = tensor.truncated_svd(np.outer(u, v), max_rank=3)
        assert res.rank == 1
        npt.assert_allclose(res.s[0], np.linalg.norm(u) * np.linalg.norm(v),
                            rtol=1e-12)

    def test_known_spectrum_discarded_norm(self):
        # oracle: the spectrum is known by construction and checked against a
        # full eigendecomposition of A^T A
        rng = np.random.default_rng(7)
        spectrum = [8.0, 4.0, 2.0, 1.0, 0.5, 0.25, 0.125, 0.0625]
        a = _matrix_with_spectrum(rng, spectrum, 8, 8)
        eigs = np.sqrt(np.maximum(np.linalg.eigvalsh(a.T @ a), 0.0))[::-1]
        npt.assert_allclose(eigs, spectrum, rtol=1e-10, atol=1e-12)
        res = tensor.truncated_svd(a, max_rank=2)
        expected = float(np.sqrt(np.sum(np.asarray(spectrum[2:]) ** 2)))
        npt.assert_allclose(res.discarded_norm, expected, rtol=1e-9)
        npt.assert_allclose(np.linalg.norm(res.reconstruct() - a), expected,
                            rtol=1e-9)

    @pytest.mark.parametrize("shape", [(6, 6), (9, 5), (4, 11)])
    def test_reconstruction_exact_at_full_rank(self, shape):
        rng = np.random.default_rng(sum(shape))
        a = rng.standard_normal(shape)
        res = tensor.truncated_svd(a, max_rank=min(shape))
        rel = np.linalg.norm(res.reconstruct() - a) / np.linalg.norm(a)
        assert rel < 1e-10

    def test_eckart_young_property_random(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            a = rng.standard_normal((10, 7))
            r = int(rng.integers(1, 7))
            res = tensor.truncated_svd(a, max_rank=r)
            full_s = np.linalg.svd(a, compute_uv=False)
            expected = np.sqrt(np.sum(full_s[r:] ** 2))
            err = np.linalg.norm(res.reconstruct() - a)
            assert abs(err - expected) <= 1e-9 * max(expected, 1e-12)
            assert abs(res.discarded_norm - expected) <= 1e-9 * max(expected, 1e-12)

    def test_pythagorean_split(self):
        rng = np.random.default_rng(13)
        a = rng.standard_normal((8, 8))
        res = tensor.truncated_svd(a, max_rank=3)
        total = np.linalg.norm(a) ** 2
        kept = np.linalg.norm(res.reconstruct()) ** 2
        npt.assert_allclose(kept + res.discarded_norm**2, total, rtol=1e-9)

    def test_sorted_nonnegative_singular_values(self):
        rng = np.random.default_rng(17)
        res = tensor.truncated_svd(rng.standard_normal((9, 9)), max_rank=9)
        assert np.all(res.s >= 0)
        assert np.all(np.diff(res.s) <= 0)

    def test_sign_convention(self):
        rng = np.random.default_rng(19)
        res = tensor.truncated_svd(rng.standard_normal((7, 7)), max_rank=7)
        for j in range(res.rank):
            k = int(np.argmax(np.abs(res.u[:, j])))
            assert res.u[k, j] >= 0

    def test_deterministic_across_calls(self):
        rng = np.random.default_rng(23)
        a = rng.standard_normal((12, 8))
        r1 = tensor.truncated_svd(a, max_rank=5)
        r2 = tensor.truncated_svd(a.copy(), max_rank=5)
        assert r1.u.tobytes() == r2.u.tobytes()
        assert r1.s.tobytes() == r2.s.tobytes()
        assert r1.vt.tobytes() == r2.vt.tobytes()

    def test_non_finite_input_raises(self):
        a = np.zeros((3, 3))
        a[1, 1] = np.nan
        with pytest.raises(FloatingPointError):
            tensor.truncated_svd(a, max_rank=2)

    def test_bad_max_rank_raises(self):
        with pytest.raises(ValueError):
            tensor.truncated_svd(np.eye(3), max_rank=0)
