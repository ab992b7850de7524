import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qstate_vae import linalg
from qstate_vae.errors import NumericError, PreconditionError, RankDeficientError, ShapeError
from qstate_vae.quantum import W_ALPHA, psi_w, rho_alpha

SY = linalg.PAULI_Y
I2, I4 = np.eye(2), np.eye(4)


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a + a.conj().T


def index_sum_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]), dtype=complex)
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def test_cmatrix_rejects_non_finite():
    with pytest.raises(NumericError):
        linalg.cmatrix([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(ShapeError):
        linalg.cmatrix([1.0, 2.0])


def test_matmul_identity_and_sigma_yy_involution():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(4, 4))
    assert np.array_equal(linalg.matmul(I4, m), m)
    syy = linalg.kron(SY, SY)
    assert np.allclose(linalg.matmul(syy, syy), I4, atol=0)


def test_matmul_against_index_sum():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    b = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert np.linalg.norm(linalg.matmul(a, b) - index_sum_matmul(a, b)) < 1e-12


def test_matmul_associativity_and_shape_error():
    rng = np.random.default_rng(2)
    a, b, c = (x / np.linalg.norm(x) for x in rng.normal(size=(3, 4, 4)))
    lhs = linalg.matmul(linalg.matmul(a, b), c)
    rhs = linalg.matmul(a, linalg.matmul(b, c))
    assert np.linalg.norm(lhs - rhs) < 1e-12
    with pytest.raises(ShapeError):
        linalg.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_kron_examples():
    assert np.array_equal(linalg.kron(I2, I2), I4)
    # sigma_y = [[0, -i], [i, 0]] expanded by hand
    expected = np.array([[0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]])
    assert np.array_equal(linalg.kron(SY, SY), expected)


def test_kron_mixed_product():
    rng = np.random.default_rng(3)
    a, b, c, d = (x + 1j * y for x, y in zip(rng.normal(size=(4, 2, 2)), rng.normal(size=(4, 2, 2))))
    lhs = linalg.kron(a, b) @ linalg.kron(c, d)
    rhs = linalg.kron(a @ c, b @ d)
    assert np.linalg.norm(lhs - rhs) < 1e-12
    assert np.array_equal(linalg.kron(a, b), np.kron(a, b))


def test_dagger():
    rng = np.random.default_rng(4)
    s = rng.normal(size=(4, 4))
    s = s + s.T
    assert np.array_equal(linalg.dagger(s), s)
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.array_equal(linalg.dagger(linalg.dagger(a)), a)


def test_eig_simple_cases():
    w, _ = linalg.hermitian_eig(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(w, [3, 2, 1], atol=1e-14)
    w, _ = linalg.hermitian_eig(rho_alpha(np.pi))
    assert np.allclose(w, [1, 0, 0, 0], atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 8])
def test_eig_reconstruction_and_unitarity(n):
    rng = np.random.default_rng(n)
    for _ in range(50):
        a = random_hermitian(rng, n)
        w, v = linalg.hermitian_eig(a)
        assert np.all(np.diff(w) <= 0)
        assert abs(w.sum() - np.trace(a).real) < 1e-10
        assert np.linalg.norm(v @ np.diag(w) @ v.conj().T - a) < 1e-10
        assert np.linalg.norm(v.conj().T @ v - np.eye(n)) < 1e-10
        # independent oracle: LAPACK
        assert np.allclose(w, np.linalg.eigvalsh(a)[::-1], atol=1e-10)


def test_eig_degenerate_and_precondition():
    w, v = linalg.hermitian_eig(np.eye(4))
    assert np.array_equal(w, np.ones(4))
    with pytest.raises(PreconditionError):
        linalg.hermitian_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ShapeError):
        linalg.hermitian_eig(np.eye(9))


def test_qr_identity_and_unitary_input():
    q, r = linalg.qr_decompose(np.eye(4))
    assert np.linalg.norm(q @ r - np.eye(4)) < 1e-12
    assert np.allclose(np.abs(np.diag(r)), 1.0) and np.allclose(np.abs(q), np.eye(4))
    rng = np.random.default_rng(5)
    u, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    _, r = linalg.qr_decompose(u)
    assert np.linalg.norm(r - np.diag(np.diag(r))) < 1e-10
    assert np.allclose(np.abs(np.diag(r)), 1.0, atol=1e-10)


def test_qr_random_seeds():
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        d = 2 if seed % 2 else 4
        z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        q, r = linalg.qr_decompose(z)
        assert np.linalg.norm(q.conj().T @ q - np.eye(d)) < 1e-10
        assert np.linalg.norm(q @ r - z) < 1e-10
        assert np.all(np.tril(r, -1) == 0)


def test_qr_rank_deficient():
    with pytest.raises(RankDeficientError):
        linalg.qr_decompose(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_qr_real_input_stays_real():
    z = np.random.default_rng(6).normal(size=(4, 4))
    q, r = linalg.qr_decompose(z)
    assert np.isrealobj(q) and np.isrealobj(r)
    assert np.linalg.norm(q.T @ q - np.eye(4)) < 1e-10


def test_psd_sqrt_examples():
    assert np.allclose(linalg.psd_sqrt(np.diag([4.0, 1.0, 0.0, 0.0])), np.diag([2.0, 1.0, 0.0, 0.0]), atol=1e-14)
    p = rho_alpha(1.0)  # rank-one projector
    assert np.linalg.norm(linalg.psd_sqrt(p) - p) < 1e-12
    rho = rho_alpha(np.pi / 3)
    s = linalg.psd_sqrt(rho)
    assert np.linalg.norm(s @ s - rho) < 1e-9


def test_psd_sqrt_random_inputs():
    rng = np.random.default_rng(7)
    for i in range(1000):
        d = 2 if i % 2 else 4
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        a = g @ g.conj().T
        s = linalg.psd_sqrt(a)
        assert np.linalg.norm(s @ s - a) < 1e-9
        assert np.linalg.norm(s - s.conj().T) < 1e-12


def test_psd_sqrt_rejects_negative():
    with pytest.raises(PreconditionError):
        linalg.psd_sqrt(np.diag([1.0, -1e-6]))
    # finite-precision negatives are clamped
    s = linalg.psd_sqrt(np.diag([1.0, -1e-12]))
    assert np.allclose(s, np.diag([1.0, 0.0]))


def test_partial_trace_examples():
    rng = np.random.default_rng(8)
    a = rng.normal(size=(2, 2)); ra = a @ a.T / np.trace(a @ a.T)
    b = rng.normal(size=(2, 2)); rb = b @ b.T / np.trace(b @ b.T)
    prod = np.kron(ra, rb)
    assert np.allclose(linalg.partial_trace(prod, (2, 2), [1]), rb, atol=1e-14)
    assert np.allclose(linalg.partial_trace(prod, (2, 2), [0]), ra, atol=1e-14)
    bell = rho_alpha(np.pi)
    for k in (0, 1):
        assert np.allclose(linalg.partial_trace(bell, (2, 2), [k]), np.eye(2) / 2, atol=1e-14)


def test_partial_trace_w_state_bc():
    # |W><W| with |W> = (|001> + |010> + |100>)/sqrt(3); tracing A leaves
    # 1/3 |00><00| + 1/3 (|01> + |10>)(<01| + <10|)
    reduced = linalg.partial_trace(psi_w(W_ALPHA), (2, 2, 2), [1, 2])
    expected = np.array([[1, 0, 0, 0], [0, 1, 1, 0], [0, 1, 1, 0], [0, 0, 0, 0]]) / 3
    assert np.allclose(reduced, expected, atol=1e-12)


def test_partial_trace_errors_and_trace():
    with pytest.raises(ShapeError):
        linalg.partial_trace(np.eye(4), (2, 3), [0])
    rho = psi_w(0.7)
    for keep in ([0], [1, 2], [0, 2], []):
        assert abs(np.trace(linalg.partial_trace(rho, (2, 2, 2), keep)) - 1) < 1e-10


def test_partial_transpose():
    m = np.arange(16.0).reshape(4, 4)
    # qutip's reference layout for transposing the second qubit
    expected = np.array([[0, 4, 2, 6], [1, 5, 3, 7], [8, 12, 10, 14], [9, 13, 11, 15]])
    assert np.array_equal(linalg.partial_transpose(m, 1), expected)
    assert np.array_equal(linalg.partial_transpose(linalg.partial_transpose(m, 0), 0), m)
    assert np.array_equal(linalg.partial_transpose(linalg.partial_transpose(m, 0), 1), m.T)
    bell_pt = linalg.partial_transpose(rho_alpha(np.pi), 1)
    assert abs(linalg.eigvalsh_desc(bell_pt)[-1] + 0.5) < 1e-12
    prod = np.kron(np.diag([0.3, 0.7]), np.array([[0.5, 0.2], [0.2, 0.5]]))
    assert np.allclose(linalg.eigvalsh_desc(linalg.partial_transpose(prod, 1)), linalg.eigvalsh_desc(prod))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 8]))
def test_eig_property(seed, n):
    a = random_hermitian(np.random.default_rng(seed), n)
    w, v = linalg.hermitian_eig(a)
    assert abs(w.sum() - np.trace(a).real) < 1e-10
    assert np.linalg.norm(v.conj().T @ v - np.eye(n)) < 1e-10
