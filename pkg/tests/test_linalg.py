import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachecast.errors import NotPsdError, ValidationError
from cachecast.linalg import hermitian_eig, matrix_sqrt, min_eigenvalue, trace_inner


def random_hermitian(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * 0.5 * (a + a.conj().T)


def random_psd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (a @ a.conj().T)


class TestHermitianEig:
    def test_identity(self):
        w, v = hermitian_eig(np.eye(3))
        assert np.allclose(w, 1.0)
        assert np.allclose(v @ v.conj().T, np.eye(3), atol=1e-10)

    def test_diagonal(self):
        w, v = hermitian_eig(np.diag([2.0, -1.0]))
        assert np.allclose(w, [2.0, -1.0])
        # standard basis vectors up to phase
        assert np.allclose(np.abs(v), np.eye(2), atol=1e-12)

    def test_reconstruction_from_planted_spectrum(self):
        # build A = V diag(lam) V^H from a random unitary and check recovery
        rng = np.random.default_rng(7)
        lam = np.sort(rng.uniform(-3.0, 5.0, size=4))[::-1]
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
        a = (q * lam) @ q.conj().T
        w, v = hermitian_eig(a)
        assert np.allclose(w, lam, atol=1e-10)
        rec = (v * w) @ v.conj().T
        assert np.linalg.norm(rec - a) <= 1e-9 * np.linalg.norm(a)
        assert np.allclose(v.conj().T @ v, np.eye(4), atol=1e-10)

    def test_eigenvalues_sorted_descending(self):
        rng = np.random.default_rng(3)
        w, _ = hermitian_eig(random_hermitian(rng, 6))
        assert np.all(np.diff(w) <= 1e-12)

    def test_rejects_non_hermitian(self):
        a = np.array([[1.0, 2.0], [0.0, 1.0]], dtype=complex)
        with pytest.raises(ValidationError):
            hermitian_eig(a)

    def test_rejects_non_square(self):
        with pytest.raises(ValidationError):
            hermitian_eig(np.ones((2, 3)))


class TestMatrixSqrt:
    def test_identity(self):
        assert np.allclose(matrix_sqrt(np.eye(4)), np.eye(4))

    def test_diagonal(self):
        s = matrix_sqrt(np.diag([4.0, 9.0]))
        assert np.allclose(s, np.diag([2.0, 3.0]))

    def test_squaring_oracle(self):
        rng = np.random.default_rng(11)
        k = random_psd(rng, 5)
        s = matrix_sqrt(k)
        assert np.linalg.norm(s @ s - k) <= 1e-9 * np.linalg.norm(k)
        assert min_eigenvalue(s) >= -1e-10 * np.real(np.trace(s))

    def test_commutes_with_input(self):
        rng = np.random.default_rng(12)
        k = random_psd(rng, 4)
        s = matrix_sqrt(k)
        assert np.linalg.norm(s @ k - k @ s) <= 1e-9 * np.linalg.norm(k)

    def test_rejects_indefinite(self):
        with pytest.raises(NotPsdError):
            matrix_sqrt(np.diag([1.0, -1.0]))

    def test_clamps_tiny_negative(self):
        s = matrix_sqrt(np.diag([1.0, -5e-11]))
        assert np.allclose(s, np.diag([1.0, 0.0]), atol=1e-5)


class TestTraceInner:
    def test_trace_of_w(self):
        assert trace_inner(np.eye(3), np.diag([1.0, 2.0, 3.0])) == pytest.approx(6.0)

    def test_norm_squared(self):
        h = np.array([1.0, 1j])
        hh = np.outer(h, h.conj())
        assert trace_inner(hh, np.eye(2)) == pytest.approx(2.0)

    def test_double_loop_oracle(self):
        rng = np.random.default_rng(5)
        h = random_hermitian(rng, 4)
        w = random_hermitian(rng, 4)
        acc = 0.0
        for i in range(4):
            for j in range(4):
                acc += (h[i, j] * w[j, i]).real
        assert trace_inner(h, w) == pytest.approx(acc, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            trace_inner(np.eye(2), np.eye(3))

    def test_rank_one_against_psd_nonnegative(self):
        rng = np.random.default_rng(9)
        h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        w = random_psd(rng, 4)
        assert trace_inner(np.outer(h, h.conj()), w) >= -1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
    def test_bilinearity(self, seed, a, b):
        rng = np.random.default_rng(seed)
        h1 = random_hermitian(rng, 3)
        h2 = random_hermitian(rng, 3)
        w = random_hermitian(rng, 3)
        lhs = trace_inner(a * h1 + b * h2, w)
        rhs = a * trace_inner(h1, w) + b * trace_inner(h2, w)
        scale = max(abs(lhs), abs(rhs), 1e-6)
        assert abs(lhs - rhs) <= 1e-10 * scale
