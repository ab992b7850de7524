"""End-to-end reproduction: datasets, training runs, regressions and report."""

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import NumericError
from ..quantum import PAIRS, W_ALPHA, StateFamilySpec
from ..vae import TrainConfig, save_checkpoint
from .analysis import encode_dataset, fit_affine_clamp, linreg_r2, presum_curve
from .data import alpha_grid, gen_dataset, test_preset
from .report import FigureSpec, ReportTable, emit_report
from .sweeps import beta_sweep, latent_sweep, repeat_seed, run_cells

log = logging.getLogger(__name__)

LATENT_SIZES = tuple(range(1, 9))
BETAS = (0.01, 0.2, 0.4, 0.6, 0.75, 0.9, 1.0, 1.2)
BETA_SWEEP_LATENT = 8
CONCURRENCE_BETA = 0.75
RANDOM_UNITARY_SAMPLES = 200
DEPOLARIZED_POINTS = 101
W_POINTS = 21
W_OFFSETS = {"AB": 0.0, "AC": 0.15, "BC": 0.3}


@dataclass(frozen=True)
class Scale:
    points: int
    samples: int
    epochs: int
    repeats: int


SCALES = {
    "desk": Scale(points=101, samples=128, epochs=300, repeats=3),
    "paper": Scale(points=101, samples=1000, epochs=1000, repeats=9),
    # tiny end-to-end run for plumbing checks; numbers are meaningless
    "smoke": Scale(points=11, samples=4, epochs=3, repeats=1),
}


def stage_seed(master: int, stage: int) -> int:
    return int(np.random.SeedSequence([master, 1000 + stage]).generate_state(1, np.uint64)[0])


@dataclass
class PipelineResult:
    summary: dict
    tables: dict
    written: list


def _median_index(values) -> int:
    """Index of the (lower) median among the finite entries."""
    values = np.asarray(values, dtype=np.float64)
    ok = np.flatnonzero(np.isfinite(values))
    if ok.size == 0:
        raise NumericError("every training run in this stage failed")
    order = ok[np.argsort(values[ok], kind="stable")]
    return int(order[(ok.size - 1) // 2])


def _r2_per_run(runs, ds, target, use_abs):
    out = []
    for res in runs:
        if not res.ok:
            out.append(float("nan"))
            continue
        z = encode_dataset(res.model, ds).z[:, 0]
        out.append(linreg_r2(target, np.abs(z) if use_abs else z).r_squared)
    return out


def _sweep_table(sweep) -> ReportTable:
    reps = sweep.losses.shape[1]
    header = ["latent_dim", "mean_loss", "std_loss"] + [f"loss_r{r}" for r in range(reps)]
    rows = [[int(n), float(m), float(s)] + [float(v) for v in sweep.losses[i]]
            for i, (n, m, s) in enumerate(zip(sweep.n_values, sweep.mean, sweep.std))]
    return ReportTable(header, rows, FigureSpec("line", "latent_dim", "mean_loss", yerr="std_loss"))


def reproduce_all(out_dir, scale: str = "desk", seed: int = 0, base: Optional[TrainConfig] = None,
                  workers: int = 1, betas=BETAS, latent_sizes=LATENT_SIZES) -> PipelineResult:
    """Run every experiment and write the report into ``out_dir``."""
    sc = SCALES[scale]
    base = replace(base or TrainConfig(), epochs=sc.epochs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables, summary = {}, {"scale": scale, "seed": seed, "repeats": sc.repeats}
    grid = alpha_grid(sc.points)
    run_seeds = [repeat_seed(seed, r) for r in range(sc.repeats)]

    log.info("generating datasets")
    rho_train = gen_dataset(StateFamilySpec("RhoAlpha"), grid, sc.samples, stage_seed(seed, 0))
    scr_train = gen_dataset(StateFamilySpec("Scrambled"), grid, sc.samples, stage_seed(seed, 1))
    rho_test = test_preset(StateFamilySpec("RhoAlpha"), stage_seed(seed, 2))
    scr_test = test_preset(StateFamilySpec("Scrambled"), stage_seed(seed, 3))

    # single latent on the unscrambled family: z should track alpha
    log.info("training rho-VAE")
    cells = [(rho_train.x, 1, replace(base, beta_final=0.0, seed=s)) for s in run_seeds]
    rho_runs = run_cells(cells, workers)
    r2s = _r2_per_run(rho_runs, rho_test, rho_test.alpha, use_abs=False)
    pick = _median_index(r2s)
    enc = encode_dataset(rho_runs[pick].model, rho_test)
    fit = linreg_r2(rho_test.alpha, enc.z[:, 0], "alpha", "z")
    tables["z_vs_alpha"] = ReportTable(
        ["alpha", "z", "concurrence"],
        [[a, z, c] for a, z, c in zip(rho_test.alpha, enc.z[:, 0], rho_test.concurrence)],
        FigureSpec("scatter", "alpha", "z", regression=fit),
    )
    save_checkpoint(rho_runs[pick].model, out / "rho_vae.json")
    summary["rho_vae"] = {"r2_per_seed": r2s, "r2_median": float(np.median(r2s)),
                          "final_recon": [r.final["recon_loss"] if r.ok else None for r in rho_runs]}

    log.info("latent-size sweeps")
    config0 = replace(base, beta_final=0.0, seed=stage_seed(seed, 4))
    for name, ds in (("rho", rho_train), ("scrambled", scr_train)):
        sweep, _ = latent_sweep(ds.x, latent_sizes, sc.repeats, config0, workers)
        tables[f"loss_vs_n_{name}"] = _sweep_table(sweep)
        entry = {"n": [int(n) for n in sweep.n_values], "mean_loss": sweep.mean.tolist(),
                 "std_loss": sweep.std.tolist(), "failures": len(sweep.failures)}
        if {2, 3, 4} <= set(entry["n"]):
            entry["ratio_2_3"] = sweep.loss_at(2) / sweep.loss_at(3)
            entry["ratio_3_4"] = sweep.loss_at(3) / sweep.loss_at(4)
        summary[f"loss_vs_n_{name}"] = entry

    log.info("beta sweep")
    kl_table, _ = beta_sweep(scr_train.x, betas, BETA_SWEEP_LATENT, replace(base, seed=stage_seed(seed, 5)),
                             sc.repeats, workers)
    cols = [f"kl_{i}" for i in range(BETA_SWEEP_LATENT)]
    tables["kl_activity"] = ReportTable(["beta"] + cols, [[b] + list(r) for b, r in zip(kl_table.betas, kl_table.rows)],
                                        FigureSpec("heatmap", "beta"))
    tables["kl_activity_raw"] = ReportTable(["beta"] + cols,
                                            [[b] + list(r) for b, r in zip(kl_table.betas, kl_table.median_kl)])
    summary["beta_sweep"] = {
        "betas": kl_table.betas.tolist(),
        "median_kl": kl_table.median_kl.tolist(),
        "active_counts": kl_table.active_counts().tolist(),
        "single_active": kl_table.single_active().tolist(),
        "single_active_window": kl_table.single_active_window(),
    }

    log.info("training concurrence VAE")
    cells = [(scr_train.x, 1, replace(base, beta_final=CONCURRENCE_BETA, seed=s)) for s in run_seeds]
    conc_runs = run_cells(cells, workers)
    r2s = _r2_per_run(conc_runs, scr_test, scr_test.concurrence, use_abs=True)
    pick = _median_index(r2s)
    model = conc_runs[pick].model
    save_checkpoint(model, out / "concurrence_vae.json")
    enc = encode_dataset(model, scr_test)
    absz = np.abs(enc.z[:, 0])
    fit = linreg_r2(scr_test.concurrence, absz, "concurrence", "abs_z")
    tables["abs_z_vs_concurrence"] = ReportTable(
        ["concurrence", "abs_z", "z", "alpha"],
        [[c, a, z, al] for c, a, z, al in zip(scr_test.concurrence, absz, enc.z[:, 0], scr_test.alpha)],
        FigureSpec("scatter", "concurrence", "abs_z", regression=fit),
    )
    summary["concurrence_vae"] = {"r2_per_seed": r2s, "r2_median": float(np.median(r2s)), "selected_seed": pick,
                                  "kl": [float(r.mean_kl[0]) if r.ok else None for r in conc_runs]}

    log.info("generalization")
    gen = {}
    ru = gen_dataset(StateFamilySpec("RandomUnitary"), [0.0], RANDOM_UNITARY_SAMPLES, stage_seed(seed, 6))
    absz = np.abs(encode_dataset(model, ru).z[:, 0])
    fit = linreg_r2(ru.concurrence, absz, "concurrence", "abs_z")
    tables["gen_random_unitary"] = ReportTable(["concurrence", "abs_z"], [[c, a] for c, a in zip(ru.concurrence, absz)],
                                               FigureSpec("scatter", "concurrence", "abs_z", regression=fit))
    gen["random_unitary_r2"] = fit.r_squared

    gammas = np.linspace(0.0, 1.0, DEPOLARIZED_POINTS)
    dep = gen_dataset(StateFamilySpec("Depolarized"), gammas, 1, stage_seed(seed, 7))
    z = encode_dataset(model, dep).z[:, 0]
    t_fit = fit_affine_clamp(z, gammas, "anchored_fit")
    t_lit = fit_affine_clamp(z, gammas, "paper_constants")
    t = t_fit(z)
    fit = linreg_r2(dep.concurrence, t, "concurrence", "t_anchored")
    tables["gen_depolarized"] = ReportTable(
        ["gamma", "concurrence", "z", "t_anchored", "t_constants", "presum"],
        [list(r) for r in zip(gammas, dep.concurrence, z, t, t_lit(z), presum_curve(gammas))],
        FigureSpec("scatter", "concurrence", "t_anchored", regression=fit),
    )
    gen["depolarized_r2"] = fit.r_squared
    gen["t_at_gamma0"] = float(t[0])
    gen["t_max_gamma_ge_0.8"] = float(t[gammas >= 0.8 - 1e-12].max())
    gen["affine_map"] = {"scale": t_fit.scale, "offset": t_fit.offset}

    rows, fits = [], []
    for pair in PAIRS:
        wd = gen_dataset(StateFamilySpec("WSubpartition", pair=pair), alpha_grid(W_POINTS, W_ALPHA), 1,
                         stage_seed(seed, 8))
        absz = np.abs(encode_dataset(model, wd).z[:, 0])
        f = linreg_r2(wd.concurrence, absz)
        fits.append([pair, f.slope, f.intercept, f.r_squared])
        gen[f"w_{pair}_r2"] = f.r_squared
        rows += [[pair, a, c, v] for a, c, v in zip(wd.alpha, wd.concurrence, absz)]
    tables["gen_w"] = ReportTable(["pair", "alpha", "concurrence", "abs_z"], rows,
                                  FigureSpec("scatter", "concurrence", "abs_z", group="pair", offsets=W_OFFSETS))
    tables["gen_w_fits"] = ReportTable(["pair", "slope", "intercept", "r_squared"], fits)
    summary["generalization"] = gen

    written = emit_report(tables, out / "report")
    return PipelineResult(summary, tables, written)


def finite_summary(obj):
    """Replace non-finite floats so the summary serializes as strict JSON."""
    if isinstance(obj, dict):
        return {k: finite_summary(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [finite_summary(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
