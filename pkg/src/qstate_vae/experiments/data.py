"""Datasets of flattened two-qubit density matrices with their concurrence."""

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import quantum
from ..errors import FormatError, PreconditionError
from ..quantum import StateFamilySpec

MATRIX_COLUMNS = [f"m{i}{j}" for i in range(4) for j in range(4)]
HEADER = ["sample_id", "family", "alpha", "gamma", "pair", "seed", "concurrence"] + MATRIX_COLUMNS
CONCURRENCE_TOL = 1e-9
TEST_POINTS = 21
TEST_SAMPLES = 10


@dataclass
class Dataset:
    """Column-oriented records. ``x`` has shape ``(n, 16)`` (row-major 4x4)."""

    sample_id: np.ndarray
    family: list
    alpha: np.ndarray
    gamma: np.ndarray
    pair: list
    seed: np.ndarray
    concurrence: np.ndarray
    x: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]

    def subset(self, mask) -> "Dataset":
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
        return Dataset(
            self.sample_id[idx], [self.family[i] for i in idx], self.alpha[idx], self.gamma[idx],
            [self.pair[i] for i in idx], self.seed[idx], self.concurrence[idx], self.x[idx],
        )


def sample_seed(seed: int, point: int, sample: int) -> int:
    """Independent 64-bit stream seed for one record."""
    return int(np.random.SeedSequence([seed, point, sample]).generate_state(1, np.uint64)[0])


def _grid_param(family: str) -> str:
    return "gamma" if family == "Depolarized" else "alpha"


def gen_dataset(template: StateFamilySpec, grid: Sequence[float], samples_per_point: int, seed: int) -> Dataset:
    """Build ``samples_per_point`` states at each grid value.

    The grid sets ``gamma`` for the depolarized family and ``alpha`` otherwise;
    other template fields are kept. ``RandomUnitary`` ignores the grid value.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise PreconditionError("grid must be non-empty")
    if samples_per_point < 1:
        raise PreconditionError("samples_per_point must be >= 1")
    key = _grid_param(template.family)
    n = len(grid) * samples_per_point
    alpha, gamma = np.full(n, np.nan), np.full(n, np.nan)
    seeds = np.zeros(n, dtype=np.uint64)
    conc = np.empty(n)
    x = np.empty((n, 16))
    k = 0
    for i, value in enumerate(grid):
        for j in range(samples_per_point):
            s = sample_seed(seed, i, j)
            spec = replace(template, seed=s, **{key: value})
            rho = spec.build()
            if np.iscomplexobj(rho):
                if np.max(np.abs(rho.imag)) > 0:
                    raise PreconditionError(f"{template.family} produced a complex state")
                rho = rho.real
            x[k] = rho.ravel()
            conc[k] = quantum.concurrence(rho)
            seeds[k] = s
            if template.family != "RandomUnitary":
                alpha[k] = spec.alpha if key == "alpha" else np.nan
                gamma[k] = spec.gamma if key == "gamma" else np.nan
            k += 1
    pair = template.pair if template.family == "WSubpartition" else ""
    return Dataset(np.arange(n), [template.family] * n, alpha, gamma, [pair] * n, seeds, conc, x)


def alpha_grid(points: int, upper: float = math.pi) -> np.ndarray:
    return np.linspace(0.0, upper, points)


def test_preset(template: StateFamilySpec, seed: int) -> Dataset:
    """Evaluation set: 10 samples at each of 21 evenly spaced angles in [0, pi]."""
    return gen_dataset(template, alpha_grid(TEST_POINTS), TEST_SAMPLES, seed)


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for k in range(len(ds)):
            w.writerow([int(ds.sample_id[k]), ds.family[k], _fmt(ds.alpha[k]), _fmt(ds.gamma[k]), ds.pair[k],
                        int(ds.seed[k]), repr(float(ds.concurrence[k]))] + [repr(float(v)) for v in ds.x[k]])


def load_dataset(path, validate: bool = False) -> Dataset:
    """Read a dataset CSV. With ``validate`` each state is re-checked and its
    concurrence recomputed."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HEADER:
            raise FormatError(f"{path}: unexpected header")
        rows = list(reader)
    n = len(rows)
    ds = Dataset(np.zeros(n, dtype=np.int64), [], np.empty(n), np.empty(n), [], np.zeros(n, dtype=np.uint64),
                 np.empty(n), np.empty((n, 16)))
    for k, row in enumerate(rows):
        if len(row) != len(HEADER):
            raise FormatError(f"{path}: line {k + 2} has {len(row)} fields")
        try:
            ds.sample_id[k] = int(row[0])
            ds.family.append(row[1])
            ds.alpha[k] = float(row[2]) if row[2] else np.nan
            ds.gamma[k] = float(row[3]) if row[3] else np.nan
            ds.pair.append(row[4])
            ds.seed[k] = int(row[5])
            ds.concurrence[k] = float(row[6])
            ds.x[k] = [float(v) for v in row[7:]]
        except ValueError as exc:
            raise FormatError(f"{path}: line {k + 2}: {exc}") from exc
    if validate:
        validate_dataset(ds)
    return ds


def validate_dataset(ds: Dataset) -> None:
    for k in range(len(ds)):
        rho = ds.x[k].reshape(4, 4)
        quantum.check_density_matrix(rho)
        c = quantum.concurrence(rho)
        if abs(c - ds.concurrence[k]) > CONCURRENCE_TOL:
            raise PreconditionError(f"sample {ds.sample_id[k]}: stored concurrence {ds.concurrence[k]} != {c}")
