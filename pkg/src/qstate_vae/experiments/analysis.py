"""Regressions and summary tables computed from trained encoders."""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import quantum
from ..errors import PreconditionError
from ..vae import VAEModel, encode, kl_loss_per_latent
from .data import Dataset

ACTIVE_KL = 0.1
INACTIVE_KL = 0.01
SEPARABLE_GAMMA = 2.0 / 3.0
AFFINE_MODES = ("paper_constants", "anchored_fit")


@dataclass
class EncodingTable:
    """Per-sample encoder outputs; ``z`` is the latent mean."""

    mu: np.ndarray
    logvar: np.ndarray
    concurrence: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    pair: list

    @property
    def z(self) -> np.ndarray:
        return self.mu


def encode_dataset(model: VAEModel, ds: Dataset) -> EncodingTable:
    enc = encode(model, ds.x)
    return EncodingTable(enc.mu, enc.logvar, ds.concurrence.copy(), ds.alpha.copy(), ds.gamma.copy(), list(ds.pair))


def mean_kl_per_latent(model: VAEModel, x: np.ndarray) -> np.ndarray:
    """Per-latent KL to the prior, averaged over the rows of ``x``."""
    return kl_loss_per_latent(encode(model, x)).mean(axis=0)


@dataclass
class RegressionResult:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    x_label: str = "x"
    y_label: str = "y"
    degenerate: bool = False


def linreg_r2(x, y, x_label: str = "x", y_label: str = "y") -> RegressionResult:
    """Ordinary least squares of ``y`` on ``x``.

    Constant ``y`` (zero total sum of squares) is reported as r^2 = 1 with
    ``degenerate`` set, since the fit is then exact.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise PreconditionError("x and y differ in length")
    if x.size < 3:
        raise PreconditionError("need at least 3 points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise PreconditionError("non-finite regression input")
    dx = x - x.mean()
    sxx = dx @ dx
    if sxx <= 0.0:
        raise PreconditionError("x is constant; regression undefined")
    slope = (dx @ (y - y.mean())) / sxx
    intercept = y.mean() - slope * x.mean()
    resid = y - (slope * x + intercept)
    ss_res = resid @ resid
    ss_tot = (y - y.mean()) @ (y - y.mean())
    if ss_tot == 0.0:
        return RegressionResult(float(slope), float(intercept), 1.0, x.size, x_label, y_label, degenerate=True)
    r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return RegressionResult(float(slope), float(intercept), float(r2), x.size, x_label, y_label)


@dataclass
class KLActivityTable:
    """Mean KL per latent for each beta.

    ``raw`` has shape ``(n_beta, n_repeat, N)`` with each run's values sorted
    descending. ``rows`` is the per-beta median over repeats divided by its
    row maximum.
    """

    betas: np.ndarray
    raw: np.ndarray

    @property
    def median_kl(self) -> np.ndarray:
        return np.median(self.raw, axis=1)

    @property
    def rows(self) -> np.ndarray:
        med = self.median_kl
        peak = med.max(axis=1, keepdims=True)
        return np.divide(med, peak, out=np.zeros_like(med), where=peak > 0)

    def active_counts(self) -> np.ndarray:
        """Active latents (mean KL above ``ACTIVE_KL``) per beta and repeat."""
        return (self.raw > ACTIVE_KL).sum(axis=2)

    def single_active(self) -> np.ndarray:
        """Per beta and repeat: exactly one active latent, all others inactive."""
        return _single(self.raw)

    def median_single_active(self) -> np.ndarray:
        """Per beta: the single-active rule applied to the median KL row."""
        return _single(self.median_kl)

    def single_active_window(self) -> list:
        """Betas whose median KL row has exactly one active latent."""
        return [float(b) for b, ok in zip(self.betas, self.median_single_active()) if ok]


def _single(sorted_kl: np.ndarray) -> np.ndarray:
    rest = sorted_kl[..., 1:]
    return (sorted_kl[..., 0] > ACTIVE_KL) & np.all(rest < INACTIVE_KL, axis=-1)


def kl_activity_table(betas: Sequence[float], per_run_kl) -> KLActivityTable:
    """``per_run_kl[i][r]`` is the unsorted mean-KL vector of repeat ``r`` at ``betas[i]``."""
    raw = np.array([[np.sort(np.asarray(k, dtype=np.float64))[::-1] for k in runs] for runs in per_run_kl])
    return KLActivityTable(np.asarray(betas, dtype=np.float64), raw)


@dataclass
class AffineClampMap:
    """``T(z) = max(scale * z + offset, clamp_floor)``."""

    scale: float
    offset: float
    clamp_floor: float = 0.0
    mode: str = "anchored_fit"

    def __call__(self, z):
        return np.maximum(self.scale * np.asarray(z, dtype=np.float64) + self.offset, self.clamp_floor)


def fit_affine_clamp(z, gamma, mode: str = "anchored_fit") -> AffineClampMap:
    """Map depolarization-sweep latents onto the entanglement scale.

    ``paper_constants`` min-max normalizes ``z`` and applies ``2.5 u - 0.5``.
    ``anchored_fit`` fits ``z`` linearly in ``gamma`` and sends the fitted
    values at gamma = 0 and gamma = 2/3 to 1 and 0.
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    gamma = np.asarray(gamma, dtype=np.float64).ravel()
    if mode not in AFFINE_MODES:
        raise PreconditionError(f"unknown mode {mode!r}")
    z_min, z_max = z.min(), z.max()
    if z_max == z_min:
        raise PreconditionError("latent values are constant")
    if mode == "paper_constants":
        scale = 2.5 / (z_max - z_min)
        return AffineClampMap(scale, -scale * z_min - 0.5, 0.0, mode)
    fit = linreg_r2(gamma, z)
    z_top = fit.intercept
    z_sep = fit.intercept + fit.slope * SEPARABLE_GAMMA
    if z_top == z_sep:
        raise PreconditionError("latent does not vary with gamma")
    scale = 1.0 / (z_top - z_sep)
    return AffineClampMap(float(scale), float(-scale * z_sep), 0.0, mode)


def presum_curve(gammas) -> np.ndarray:
    """Signed ``l1 - l2 - l3 - l4`` of the depolarized Bell state along ``gammas``."""
    return np.array([quantum.presum(quantum.rho_d(float(g))) for g in gammas])
