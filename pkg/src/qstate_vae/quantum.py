"""State families and two-qubit entanglement measures.

Qubit ordering is big-endian: for two qubits the basis is |00>, |01>, |10>,
|11> with the first label belonging to qubit A. All stochastic constructors
take an explicit ``numpy.random.Generator``; nothing touches global RNG state.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import linalg
from .errors import NumericError, PreconditionError, RankDeficientError, ShapeError

W_ALPHA = 2.0 * np.arccos(1.0 / np.sqrt(3.0))
DM_HERMITIAN_TOL = 1e-10
DM_TRACE_TOL = 1e-10
DM_PSD_TOL = 1e-9
UNITARY_TOL = 1e-10
PPT_TOL = 1e-10
R_CLAMP = 1e-12

SIGMA_YY = linalg.kron(linalg.PAULI_Y, linalg.PAULI_Y).real

FAMILIES = ("RhoAlpha", "Scrambled", "RandomUnitary", "Depolarized", "WSubpartition")
PAIRS = ("AB", "AC", "BC")
_PAIR_KEEP = {"AB": (0, 1), "AC": (0, 2), "BC": (1, 2)}


class RSpectrum(NamedTuple):
    lambdas: np.ndarray


def check_density_matrix(rho, dims: tuple[int, ...] = (4, 8)) -> np.ndarray:
    """Validate Hermiticity, unit trace and positivity; return the matrix."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] not in dims:
        raise ShapeError(f"density matrix must be square with size in {dims}, got {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise NumericError("density matrix has non-finite entries")
    if np.linalg.norm(rho - rho.conj().T) > DM_HERMITIAN_TOL:
        raise PreconditionError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > DM_TRACE_TOL:
        raise PreconditionError(f"density matrix trace {np.trace(rho).real:.12f} != 1")
    if linalg.eigvalsh_desc(rho)[-1] < -DM_PSD_TOL:
        raise PreconditionError("density matrix is not positive semidefinite")
    return rho


def is_density_matrix(rho) -> bool:
    try:
        check_density_matrix(rho)
    except (PreconditionError, ShapeError, NumericError):
        return False
    return True


def purity(rho) -> float:
    rho = np.asarray(rho)
    return float(np.real(np.trace(rho @ rho)))


def pure_density(psi) -> np.ndarray:
    psi = np.asarray(psi)
    return np.outer(psi, psi.conj())


def rho_alpha_amplitudes(alpha: float) -> np.ndarray:
    """State vector of the Hadamard + controlled-Ry circuit at angle ``alpha``."""
    c, s = np.cos(alpha / 2.0), np.sin(alpha / 2.0)
    return np.array([1.0, c, 0.0, s]) / np.sqrt(2.0)


def rho_alpha(alpha: float) -> np.ndarray:
    """Real 4x4 circuit state; concurrence is ``sin(alpha / 2)``."""
    if not np.isfinite(alpha):
        raise PreconditionError("alpha must be finite")
    c, s = np.cos(alpha / 2.0), np.sin(alpha / 2.0)
    return 0.5 * np.array(
        [
            [1.0, c, 0.0, s],
            [c, c * c, 0.0, s * c],
            [0.0, 0.0, 0.0, 0.0],
            [s, s * c, 0.0, s * s],
        ]
    )


def _haar(d: int, rng: np.random.Generator, complex_entries: bool) -> np.ndarray:
    if d not in (2, 4):
        raise ShapeError(f"Haar sampling supports d in {{2, 4}}, got {d}")
    while True:
        z = rng.standard_normal((d, d))
        if complex_entries:
            z = z + 1j * rng.standard_normal((d, d))
        try:
            q, r = linalg.qr_decompose(z)
        except RankDeficientError:
            continue
        diag = np.diag(r)
        return q * (diag / np.abs(diag))


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random d x d unitary: QR of a complex Ginibre matrix, phase-fixed."""
    return _haar(d, rng, complex_entries=True)


def haar_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random d x d real orthogonal matrix (same recipe, real Gaussian)."""
    return _haar(d, rng, complex_entries=False)


def _check_unitary(u, d: int) -> np.ndarray:
    u = np.asarray(u)
    if u.shape != (d, d):
        raise ShapeError(f"expected a {d}x{d} unitary, got {u.shape}")
    if np.linalg.norm(u.conj().T @ u - np.eye(d)) > UNITARY_TOL:
        raise PreconditionError("local factor is not unitary")
    return u


def scramble(rho, u_a, u_b) -> np.ndarray:
    """Conjugate a two-qubit state by the local unitary ``u_a (x) u_b``."""
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        raise ShapeError(f"scramble expects a 4x4 state, got {rho.shape}")
    u = linalg.kron(_check_unitary(u_a, 2), _check_unitary(u_b, 2))
    out = u @ rho @ u.conj().T
    return 0.5 * (out + out.conj().T)


def rho_s(alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Circuit state scrambled by independent Haar-random local orthogonals."""
    u_a = haar_orthogonal(2, rng)
    u_b = haar_orthogonal(2, rng)
    return scramble(rho_alpha(alpha), u_a, u_b)


def rho_u(rng: np.random.Generator) -> np.ndarray:
    """Pure real state ``O|00><00|O^T`` with ``O`` Haar-random in O(4)."""
    o = haar_orthogonal(4, rng)
    return pure_density(o[:, 0])


def rho_d(gamma: float) -> np.ndarray:
    """Bell state mixed with white noise: ``(1 - gamma) rho(pi) + gamma I / 4``."""
    if not (0.0 <= gamma <= 1.0):
        raise PreconditionError(f"gamma must lie in [0, 1], got {gamma}")
    return (1.0 - gamma) * rho_alpha(np.pi) + gamma * np.eye(4) / 4.0


def psi_w_amplitudes(alpha: float) -> np.ndarray:
    c, s = np.cos(alpha / 2.0), np.sin(alpha / 2.0) / np.sqrt(2.0)
    psi = np.zeros(8)
    psi[0b100] = c
    psi[0b010] = s
    psi[0b001] = s
    return psi


def psi_w(alpha: float) -> np.ndarray:
    """Three-qubit state from |100> (alpha = 0) to the W state (alpha = W_ALPHA)."""
    if not (-1e-12 <= alpha <= W_ALPHA + 1e-12):
        raise PreconditionError(f"alpha must lie in [0, {W_ALPHA:.6f}], got {alpha}")
    return pure_density(psi_w_amplitudes(alpha))


def w_subpartition(alpha: float, pair: str) -> np.ndarray:
    if pair not in _PAIR_KEEP:
        raise PreconditionError(f"pair must be one of {PAIRS}, got {pair!r}")
    return linalg.partial_trace(psi_w(alpha), (2, 2, 2), _PAIR_KEEP[pair])


def spin_flip(rho) -> np.ndarray:
    rho = np.asarray(rho)
    return SIGMA_YY @ rho.conj() @ SIGMA_YY


def r_spectrum(rho) -> RSpectrum:
    """Descending eigenvalues of ``sqrt(sqrt(rho) rho~ sqrt(rho))``."""
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        raise ShapeError(f"R matrix needs a 4x4 state, got {rho.shape}")
    root = linalg.psd_sqrt(rho)
    inner = root @ spin_flip(rho) @ root
    r = linalg.psd_sqrt(0.5 * (inner + inner.conj().T))
    lam = linalg.eigvalsh_desc(r)
    lam = np.where(lam < R_CLAMP, 0.0, lam)
    return RSpectrum(np.sort(lam)[::-1])


def presum(rho) -> float:
    """Signed combination l1 - l2 - l3 - l4 before the max in the concurrence."""
    lam = r_spectrum(rho).lambdas
    return float(lam[0] - lam[1] - lam[2] - lam[3])


def concurrence(rho) -> float:
    return max(0.0, presum(rho))


def concurrence_pure(psi) -> float:
    """``2|ad - bc|`` for amplitudes ``(a, b, c, d)`` of a normalised two-qubit ket."""
    psi = np.asarray(psi, dtype=complex).ravel()
    if psi.shape != (4,):
        raise ShapeError(f"expected 4 amplitudes, got {psi.shape}")
    if abs(np.vdot(psi, psi).real - 1.0) > 1e-10:
        raise PreconditionError("amplitudes are not normalised")
    a, b, c, d = psi
    return float(2.0 * abs(a * d - b * c))


def partial_transpose_eigenvalues(rho) -> np.ndarray:
    pt = linalg.partial_transpose(rho, 1)
    return linalg.eigvalsh_desc(0.5 * (pt + pt.conj().T))


def negativity(rho) -> float:
    """Twice the summed magnitude of negative partial-transpose eigenvalues.

    The factor two makes this equal to the concurrence on pure two-qubit states.
    """
    ev = partial_transpose_eigenvalues(rho)
    return float(2.0 * -np.sum(ev[ev < 0.0]))


def is_ppt_separable(rho) -> bool:
    return bool(partial_transpose_eigenvalues(rho)[-1] >= -PPT_TOL)


@dataclass(frozen=True)
class StateFamilySpec:
    """Which generative family to draw from, plus its parameters.

    ``seed`` is only consulted by the stochastic families (Scrambled,
    RandomUnitary).
    """

    family: str
    alpha: Optional[float] = None
    gamma: Optional[float] = None
    pair: Optional[str] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise PreconditionError(f"unknown family {self.family!r}")
        if self.family in ("RhoAlpha", "Scrambled") and self.alpha is not None:
            if not (0.0 <= self.alpha <= np.pi + 1e-12):
                raise PreconditionError(f"alpha must lie in [0, pi], got {self.alpha}")
        if self.family == "WSubpartition":
            if self.alpha is not None and not (0.0 <= self.alpha <= W_ALPHA + 1e-12):
                raise PreconditionError(f"alpha must lie in [0, {W_ALPHA:.6f}]")
            if self.pair is not None and self.pair not in PAIRS:
                raise PreconditionError(f"pair must be one of {PAIRS}")
        if self.gamma is not None and not (0.0 <= self.gamma <= 1.0):
            raise PreconditionError(f"gamma must lie in [0, 1], got {self.gamma}")

    def build(self) -> np.ndarray:
        f = self.family
        if f == "RhoAlpha":
            return rho_alpha(self.alpha)
        if f == "Scrambled":
            return rho_s(self.alpha, np.random.default_rng(self.seed))
        if f == "RandomUnitary":
            return rho_u(np.random.default_rng(self.seed))
        if f == "Depolarized":
            return rho_d(self.gamma)
        return w_subpartition(self.alpha, self.pair)
