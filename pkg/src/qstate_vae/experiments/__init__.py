"""Dataset generation, training sweeps, analysis and reporting."""

from .analysis import (
    AffineClampMap,
    EncodingTable,
    KLActivityTable,
    RegressionResult,
    encode_dataset,
    fit_affine_clamp,
    kl_activity_table,
    linreg_r2,
    mean_kl_per_latent,
    presum_curve,
)
from .data import Dataset, gen_dataset, load_dataset, save_dataset, test_preset, validate_dataset
from .pipeline import SCALES, PipelineResult, reproduce_all
from .report import FigureSpec, ReportTable, emit_report
from .sweeps import LatentSweepTable, beta_sweep, latent_sweep, run_cells, train_cell

__all__ = [
    "AffineClampMap", "EncodingTable", "KLActivityTable", "RegressionResult", "encode_dataset",
    "fit_affine_clamp", "kl_activity_table", "linreg_r2", "mean_kl_per_latent", "presum_curve",
    "Dataset", "gen_dataset", "load_dataset", "save_dataset", "test_preset", "validate_dataset",
    "SCALES", "PipelineResult", "reproduce_all", "FigureSpec", "ReportTable", "emit_report",
    "LatentSweepTable", "beta_sweep", "latent_sweep", "run_cells", "train_cell",
]
