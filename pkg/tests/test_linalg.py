import numpy as np
import pytest
import scipy.linalg

from shared import linalg
from shared.errors import NoConvergence, NonPowerOfTwo, NotPositiveDefinite


def test_cholesky_identity():
    assert np.array_equal(linalg.cholesky(np.eye(3)), np.eye(3))


def test_cholesky_upper_factor_reconstructs():
    a = np.array([[4.0, 2.0], [2.0, 5.0]])
    L = linalg.cholesky(a)
    assert np.allclose(np.tril(L, -1), 0.0)
    assert np.max(np.abs(L.T @ L - a)) <= 1e-12


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        linalg.cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_cholesky_jitter_rescues_semidefinite_rounding():
    v = np.array([[1.0], [1.0]])
    L = linalg.cholesky(v @ v.T)
    assert np.allclose(L.T @ L, v @ v.T, atol=1e-10)


def test_min_eig_sym_examples(rng):
    assert linalg.min_eig_sym(np.diag([3.0, 1.0, 2.0])) == pytest.approx(1.0)
    assert linalg.min_eig_sym(np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(1.0)

    a = rng.standard_normal((2, 2))
    a = a + a.T
    tr, det = np.trace(a), np.linalg.det(a)
    expected = 0.5 * (tr - np.sqrt(tr * tr - 4.0 * det))
    assert abs(linalg.min_eig_sym(a) - expected) <= 1e-10


def test_min_eig_sym_maps_lapack_failure(monkeypatch):
    def fail(*args, **kwargs):
        raise scipy.linalg.LinAlgError("did not converge")

    monkeypatch.setattr(scipy.linalg, "eigvalsh", fail)
    with pytest.raises(NoConvergence, match="수렴하지 않았습니다"):
        linalg.min_eig_sym(np.eye(2))


def test_spectral_norm(rng):
    assert linalg.spectral_norm(np.array([[-1.0], [-1.0]])) == pytest.approx(np.sqrt(2.0), abs=1e-7)
    assert linalg.spectral_norm(np.eye(4)) == pytest.approx(1.0)
    assert linalg.spectral_norm(np.zeros((2, 3))) == 0.0

    a = rng.standard_normal((3, 3))
    expected = np.sqrt(np.linalg.eigvalsh(a.T @ a)[-1])
    assert linalg.spectral_norm(a) == pytest.approx(expected, abs=1e-8)


def test_solve_psd(rng):
    b = rng.standard_normal(3)
    assert np.allclose(linalg.solve_psd(np.eye(3), b), b)
    assert np.allclose(linalg.solve_psd(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1.0, 1.0])

    m = rng.standard_normal((5, 5))
    a = m @ m.T + 5.0 * np.eye(5)
    rhs = rng.standard_normal((5, 2))
    assert np.max(np.abs(a @ linalg.solve_psd(a, rhs) - rhs)) <= 1e-10


def test_inverse_psd_is_symmetric(rng):
    m = rng.standard_normal((4, 4))
    a = m @ m.T + np.eye(4)
    inv = linalg.inverse_psd(a)
    assert np.array_equal(inv, inv.T)
    assert np.allclose(inv @ a, np.eye(4), atol=1e-10)


def test_fft2_delta_and_parseval(rng):
    delta = np.zeros((4, 4))
    delta[0, 0] = 1.0
    assert np.allclose(linalg.fft2(delta), np.ones((4, 4)))

    x = rng.standard_normal((8, 8))
    X = linalg.fft2(x)
    assert np.max(np.abs(linalg.fft2(X, inverse=True) - x)) <= 1e-12
    assert abs(np.sum(x ** 2) - np.sum(np.abs(X) ** 2) / 64.0) <= 1e-10


def test_fft2_rejects_non_power_of_two():
    with pytest.raises(NonPowerOfTwo):
        linalg.fft2(np.zeros((6, 8)))


def test_kron_eye_and_block_diag():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    k = linalg.kron_eye(2, a)
    assert k.shape == (4, 4)
    assert np.array_equal(k[:2, :2], a) and np.array_equal(k[2:, 2:], a)
    assert not np.any(k[:2, 2:])
    assert linalg.block_diag(np.eye(1), 2 * np.eye(2)).shape == (3, 3)
