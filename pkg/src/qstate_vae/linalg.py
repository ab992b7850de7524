"""Dense complex linear algebra for 2-, 4- and 8-dimensional operators.

Matrices are plain ``numpy`` arrays (complex128 or float64). The routines
here are deliberately small: a cyclic Jacobi eigensolver for Hermitian
matrices, Householder QR, PSD square roots, and partial trace/transpose on
qubit registers.
"""

import math
from typing import NamedTuple, Sequence

import numpy as np

from .errors import NumericError, PreconditionError, RankDeficientError, ShapeError

HERMITIAN_TOL = 1e-10
JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 100
PSD_CLAMP = 1e-10
PSD_REJECT = 1e-8
# eigenvalues this far below the largest one are rounding noise
PSD_NOISE_FLOOR = 1e-13
RANK_TOL = 1e-12
MAX_DIM = 8

PAULI_Y = np.array([[0, -1j], [1j, 0]])


class HermEig(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def cmatrix(data) -> np.ndarray:
    """Build a complex matrix, rejecting non-finite entries."""
    a = np.array(data, dtype=complex)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix has non-finite entries")
    return a


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def kron(a, b) -> np.ndarray:
    """Kronecker product with block layout ``a[i, j] * b``."""
    a, b = _as_matrix(a), _as_matrix(b)
    ra, ca = a.shape
    rb, cb = b.shape
    out = a[:, None, :, None] * b[None, :, None, :]
    return out.reshape(ra * rb, ca * cb)


def dagger(a) -> np.ndarray:
    return _as_matrix(a).conj().T


def is_hermitian(a, tol: float = HERMITIAN_TOL) -> bool:
    a = _as_matrix(a)
    return a.shape[0] == a.shape[1] and np.linalg.norm(a - a.conj().T) <= tol


def _check_hermitian(a) -> np.ndarray:
    a = _as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ShapeError(f"expected a square matrix, got {a.shape}")
    if n > MAX_DIM:
        raise ShapeError(f"dimension {n} exceeds supported maximum {MAX_DIM}")
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix has non-finite entries")
    if np.linalg.norm(a - a.conj().T) > HERMITIAN_TOL:
        raise PreconditionError("matrix is not Hermitian")
    return a


def hermitian_eig(a) -> HermEig:
    """Cyclic Jacobi diagonalisation of a Hermitian matrix.

    Each rotation first removes the phase of the pivot ``a[p, q]`` and then
    applies a real Givens rotation that zeroes it. Eigenvalues come back in
    descending order (stable with respect to Jacobi output order).
    """
    a = _check_hermitian(a)
    n = a.shape[0]
    # Scalar loops beat numpy call overhead at n <= 8.
    h = 0.5 * (a + a.conj().T)
    w = [[complex(x) for x in row] for row in h.tolist()]
    v = [[1.0 + 0j if i == j else 0j for j in range(n)] for i in range(n)]
    scale = max(1.0, float(np.linalg.norm(h)))
    tol2 = (JACOBI_TOL * scale) ** 2

    for _ in range(JACOBI_MAX_SWEEPS):
        off2 = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                z = w[p][q]
                off2 += 2.0 * (z.real * z.real + z.imag * z.imag)
        if off2 < tol2:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = w[p][q]
                mag = abs(apq)
                if mag < 1e-300:
                    continue
                ph = (apq / mag).conjugate()
                theta = (w[q][q].real - w[p][p].real) / (2.0 * mag)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # g = diag(1, ph) @ [[c, s], [-s, c]]
                g10, g11 = -s * ph, c * ph
                for row in w:
                    xp, xq = row[p], row[q]
                    row[p] = xp * c + xq * g10
                    row[q] = xp * s + xq * g11
                rp, rq = w[p], w[q]
                g10c, g11c = g10.conjugate(), g11.conjugate()
                for k in range(n):
                    xp, xq = rp[k], rq[k]
                    rp[k] = c * xp + g10c * xq
                    rq[k] = s * xp + g11c * xq
                rp[q] = rq[p] = 0j
                rp[p] = complex(rp[p].real)
                rq[q] = complex(rq[q].real)
                for row in v:
                    xp, xq = row[p], row[q]
                    row[p] = xp * c + xq * g10
                    row[q] = xp * s + xq * g11
    else:
        raise NumericError("Jacobi iteration did not converge")

    vals = np.array([w[i][i].real for i in range(n)])
    order = np.argsort(-vals, kind="stable")
    return HermEig(vals[order], np.array(v, dtype=complex)[:, order])


def eigvalsh_desc(a) -> np.ndarray:
    return hermitian_eig(a).eigenvalues


def qr_decompose(z) -> tuple[np.ndarray, np.ndarray]:
    """Householder QR of a square matrix, ``z = q @ r``.

    Raises :class:`RankDeficientError` when some ``|r[i, i]| < 1e-12``.
    """
    z = _as_matrix(z)
    n, m = z.shape
    if n != m:
        raise ShapeError(f"expected a square matrix, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NumericError("matrix has non-finite entries")
    r = z.astype(complex)
    q = np.eye(n, dtype=complex)
    for k in range(n - 1):
        x = r[k:, k]
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            continue
        x0 = x[0]
        phase = x0 / abs(x0) if x0 != 0 else 1.0
        v = x.copy()
        v[0] += phase * norm_x
        v /= np.linalg.norm(v)
        r[k:, :] -= 2.0 * np.outer(v, v.conj() @ r[k:, :])
        q[:, k:] -= 2.0 * np.outer(q[:, k:] @ v, v.conj())
        r[k + 1:, k] = 0.0
    if np.min(np.abs(np.diag(r))) < RANK_TOL:
        raise RankDeficientError("matrix is rank deficient")
    if np.isrealobj(z):
        return q.real, r.real
    return q, r


def psd_sqrt(a) -> np.ndarray:
    """Hermitian PSD square root.

    Negative eigenvalues down to -1e-8 are clamped to zero, as are positive
    ones below ``1e-13 * max(1, lambda_max)``; without the latter, rounding
    noise of order 1e-17 turns into 1e-9-sized entries after the root.
    """
    w, v = hermitian_eig(a)
    if w[-1] < -PSD_REJECT:
        raise PreconditionError(f"matrix is not PSD (min eigenvalue {w[-1]:.3e})")
    floor = PSD_NOISE_FLOOR * max(1.0, w[0])
    w = np.sqrt(np.where(w < floor, 0.0, w))
    s = (v * w) @ v.conj().T
    return 0.5 * (s + s.conj().T)


def partial_trace(rho, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Reduced operator on the subsystems listed in ``keep`` (in index order)."""
    rho = _as_matrix(rho)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    if rho.shape != (total, total):
        raise ShapeError(f"dims {dims} inconsistent with matrix shape {rho.shape}")
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise ShapeError(f"keep indices {keep} out of range for {n} subsystems")
    traced = [i for i in range(n) if i not in keep]
    t = rho.reshape(dims + dims)
    # trace out from the highest index so axis numbers stay valid
    for i in sorted(traced, reverse=True):
        cur = t.ndim // 2
        t = np.trace(t, axis1=i, axis2=i + cur)
    d = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(d, d)


def partial_transpose(rho, subsystem: int) -> np.ndarray:
    """Transpose the indices of qubit ``subsystem`` (0 or 1) of a 4x4 operator."""
    rho = _as_matrix(rho)
    if rho.shape != (4, 4):
        raise ShapeError(f"partial transpose expects a 4x4 matrix, got {rho.shape}")
    if subsystem not in (0, 1):
        raise ShapeError(f"subsystem must be 0 or 1, got {subsystem}")
    t = rho.reshape(2, 2, 2, 2)
    if subsystem == 0:
        t = t.transpose(2, 1, 0, 3)
    else:
        t = t.transpose(0, 3, 2, 1)
    return t.reshape(4, 4)
