"""Grids of independent training runs (latent size and beta sweeps)."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from ..errors import NumericError
from ..vae import TrainConfig, VAEModel, train
from .analysis import KLActivityTable, kl_activity_table, mean_kl_per_latent

log = logging.getLogger(__name__)


def repeat_seed(master: int, repeat: int) -> int:
    return int(np.random.SeedSequence([master, repeat]).generate_state(1, np.uint64)[0])


@dataclass
class CellResult:
    latent_dim: int
    beta: float
    seed: int
    final: Optional[dict]
    mean_kl: Optional[np.ndarray]
    model: Optional[VAEModel]
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def train_cell(x: np.ndarray, latent_dim: int, config: TrainConfig) -> CellResult:
    """One training run; numeric failures are captured rather than raised."""
    model = VAEModel.init(latent_dim, np.random.default_rng([config.seed, 1]))
    try:
        model, metrics = train(model, x, config)
    except NumericError as exc:
        log.warning("cell N=%d beta=%g seed=%d failed: %s", latent_dim, config.beta_final, config.seed, exc)
        return CellResult(latent_dim, config.beta_final, config.seed, None, None, None, str(exc))
    final = metrics[-1] if metrics else None
    return CellResult(latent_dim, config.beta_final, config.seed, final, mean_kl_per_latent(model, x), model)


def _run_cell(args):
    return train_cell(*args)


def run_cells(cells: Sequence[tuple], workers: int = 1) -> list:
    """Run ``(x, latent_dim, config)`` cells, at most ``workers`` at a time.

    Results come back in input order, so the outcome does not depend on
    the pool size.
    """
    if workers <= 1 or len(cells) <= 1:
        return [_run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, cells))


@dataclass
class LatentSweepTable:
    """Final validation loss per latent size; ``losses`` is ``(len(n_values), repeats)``,
    NaN where a run failed."""

    n_values: np.ndarray
    losses: np.ndarray
    failures: list

    @property
    def mean(self) -> np.ndarray:
        return np.nanmean(self.losses, axis=1)

    @property
    def std(self) -> np.ndarray:
        return np.nanstd(self.losses, axis=1)

    def loss_at(self, n: int) -> float:
        return float(self.mean[list(self.n_values).index(n)])


def latent_sweep(x: np.ndarray, n_values: Sequence[int], repeats: int, config: TrainConfig,
                 workers: int = 1) -> tuple[LatentSweepTable, list]:
    """Train every ``(N, repeat)`` pair; repeat ``r`` uses the same seed for every N."""
    cells = [(x, int(n), replace(config, seed=repeat_seed(config.seed, r)))
             for n in n_values for r in range(repeats)]
    results = run_cells(cells, workers)
    losses = np.full((len(n_values), repeats), np.nan)
    failures = []
    for k, res in enumerate(results):
        i, r = divmod(k, repeats)
        if res.ok:
            losses[i, r] = res.final["val_loss"]
        else:
            failures.append((res.latent_dim, res.seed, res.error))
    return LatentSweepTable(np.asarray(n_values), losses, failures), results


def beta_sweep(x: np.ndarray, betas: Sequence[float], latent_dim: int, config: TrainConfig, repeats: int = 1,
               workers: int = 1) -> tuple[KLActivityTable, list]:
    """Per-latent dataset-mean KL for each final beta."""
    cells = [(x, latent_dim, replace(config, beta_final=float(b), seed=repeat_seed(config.seed, r)))
             for b in betas for r in range(repeats)]
    results = run_cells(cells, workers)
    per_run = []
    for i in range(len(betas)):
        row = []
        for res in results[i * repeats:(i + 1) * repeats]:
            row.append(res.mean_kl if res.ok else np.full(latent_dim, np.nan))
        per_run.append(row)
    return kl_activity_table(betas, per_run), results
