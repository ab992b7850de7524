"""Command-line entry point: ``qstate-vae <command> [options]``.

Every command writes a JSON manifest before doing any work and finalizes it
with the outcome. Exit codes: 0 success, 1 usage or configuration error,
2 runtime failure or cancellation.
"""

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import ConfigError, FormatError, NumericError, PreconditionError, ShapeError
from .experiments import analysis, data, pipeline, report, sweeps
from .quantum import FAMILIES, PAIRS, W_ALPHA, StateFamilySpec
from .vae import MAX_LATENT, TrainConfig, VAEModel, load_checkpoint, save_checkpoint, train

log = logging.getLogger("qstate_vae")

OUTPUT_ENV = "QSTATE_VAE_OUTPUT_DIR"
MANIFEST = "manifest.json"
FAMILY_ALIASES = {
    "rho-alpha": "RhoAlpha",
    "scrambled": "Scrambled",
    "random-unitary": "RandomUnitary",
    "depolarized": "Depolarized",
    "w-subpartition": "WSubpartition",
}
PAPER_EPOCHS = 1000
PAPER_SAMPLES = 1000


class UsageError(Exception):
    pass


@dataclass
class DataConfig:
    family: str = "Scrambled"
    points: int = 101
    samples: int = 128
    pair: str = "AB"


@dataclass
class SweepConfig:
    latent_sizes: list = field(default_factory=lambda: list(pipeline.LATENT_SIZES))
    betas: list = field(default_factory=lambda: list(pipeline.BETAS))
    beta_latent_dim: int = pipeline.BETA_SWEEP_LATENT
    repeats: int = 3
    workers: int = 1


@dataclass
class RunConfig:
    scale: str
    seed: int
    latent_dim: int
    train: TrainConfig
    data: DataConfig
    sweep: SweepConfig

    def to_dict(self) -> dict:
        return {"scale": self.scale, "seed": self.seed, "latent_dim": self.latent_dim,
                "train": self.train.to_dict(), "data": asdict(self.data), "sweep": asdict(self.sweep)}


def _check_keys(section: str, given: dict, allowed) -> None:
    for key in given:
        if key not in allowed:
            raise ConfigError(f"{section}.{key}" if section else key, "unknown key")


def _family_name(name: str) -> str:
    if name in FAMILIES:
        return name
    try:
        return FAMILY_ALIASES[name.lower()]
    except KeyError:
        raise ConfigError("data.family", f"unknown family {name!r}") from None


def load_config(path: Optional[str]) -> RunConfig:
    """Parse a TOML config; omitted keys take desk-scale defaults.

    Top-level keys: ``scale`` (desk|paper), ``seed``, ``latent_dim``.
    Sections: ``[data]``, ``[train]`` (TrainConfig fields), ``[sweep]``.
    """
    doc = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("config", f"{path}: {exc}") from None
    _check_keys("", doc, {"scale", "seed", "latent_dim", "data", "train", "sweep"})
    scale = doc.get("scale", "desk")
    if scale not in ("desk", "paper"):
        raise ConfigError("scale", "must be 'desk' or 'paper'")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "must be a non-negative integer")
    latent_dim = doc.get("latent_dim", 1)
    if not isinstance(latent_dim, int) or not (1 <= latent_dim <= MAX_LATENT):
        raise ConfigError("latent_dim", f"must be an integer in [1, {MAX_LATENT}]")

    d = dict(doc.get("data", {}))
    _check_keys("data", d, {f.name for f in fields(DataConfig)})
    if scale == "paper":
        d.setdefault("samples", PAPER_SAMPLES)
    dcfg = DataConfig(**d)
    dcfg.family = _family_name(dcfg.family)
    if dcfg.points < 1:
        raise ConfigError("data.points", "must be >= 1")
    if dcfg.samples < 1:
        raise ConfigError("data.samples", "must be >= 1")
    if dcfg.pair not in PAIRS:
        raise ConfigError("data.pair", f"must be one of {PAIRS}")

    t = dict(doc.get("train", {}))
    _check_keys("train", t, {f.name for f in fields(TrainConfig)})
    if scale == "paper":
        t.setdefault("epochs", PAPER_EPOCHS)
    t.setdefault("seed", seed)
    try:
        tcfg = TrainConfig.from_dict(t)
    except ConfigError as exc:
        raise ConfigError(f"train.{exc.key}", exc.message) from None
    except TypeError as exc:
        raise ConfigError("train", str(exc)) from None

    s = dict(doc.get("sweep", {}))
    _check_keys("sweep", s, {f.name for f in fields(SweepConfig)})
    if scale == "paper":
        s.setdefault("repeats", pipeline.SCALES["paper"].repeats)
    scfg = SweepConfig(**s)
    if not scfg.latent_sizes or any(not (1 <= n <= MAX_LATENT) for n in scfg.latent_sizes):
        raise ConfigError("sweep.latent_sizes", f"values must lie in [1, {MAX_LATENT}]")
    if not scfg.betas or any(b < 0 for b in scfg.betas):
        raise ConfigError("sweep.betas", "values must be >= 0")
    if scfg.repeats < 1:
        raise ConfigError("sweep.repeats", "must be >= 1")
    if scfg.workers < 1:
        raise ConfigError("sweep.workers", "must be >= 1")
    if not (1 <= scfg.beta_latent_dim <= MAX_LATENT):
        raise ConfigError("sweep.beta_latent_dim", f"must lie in [1, {MAX_LATENT}]")
    return RunConfig(scale, seed, latent_dim, tcfg, dcfg, scfg)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qstate-vae", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, output_help):
        sp.add_argument("--config", help="TOML configuration file")
        sp.add_argument("-o", "--output", help=output_help)
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--force", action="store_true", help="overwrite an existing manifest")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("gen-data", help="generate a dataset CSV")
    common(sp, "dataset CSV path")
    sp.add_argument("--family", help="rho-alpha, scrambled, random-unitary, depolarized or w-subpartition")
    sp.add_argument("--points", type=int)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--pair", choices=PAIRS)

    sp = sub.add_parser("train", help="train one model")
    common(sp, "checkpoint path")
    sp.add_argument("--data", help="dataset CSV (generated from the config if omitted)")
    sp.add_argument("--latent-dim", type=int)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--epochs", type=int)

    for name, what in (("sweep-latent", "latent-size sweep"), ("sweep-beta", "beta sweep")):
        sp = sub.add_parser(name, help=what)
        common(sp, "output directory")
        sp.add_argument("--data", help="dataset CSV (generated from the config if omitted)")
        sp.add_argument("--workers", type=int)

    sp = sub.add_parser("encode", help="encode a dataset with a trained model")
    common(sp, "encodings CSV path")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)

    sp = sub.add_parser("analyze", help="regress a latent against a state parameter")
    common(sp, "output directory")
    sp.add_argument("--encodings", required=True, help="CSV written by 'encode'")
    sp.add_argument("--latent", type=int, default=0)
    sp.add_argument("--target", choices=("concurrence", "alpha", "gamma"), default="concurrence")
    sp.add_argument("--abs", action="store_true", help="regress |z| instead of z")

    sp = sub.add_parser("reproduce-all", help="run every experiment and write the report")
    common(sp, "output directory")
    sp.add_argument("--scale", choices=tuple(pipeline.SCALES))
    sp.add_argument("--workers", type=int)
    return p


def _output(args, default_name: str) -> Path:
    if args.output:
        return Path(args.output)
    return Path(os.environ.get(OUTPUT_ENV, ".")) / default_name


class Manifest:
    """Run record written before any result and finalized afterwards."""

    def __init__(self, path: Path, force: bool):
        self.path = path
        if path.exists() and not force:
            raise UsageError(f"{path} exists; pass --force to overwrite")
        self.doc = {}
        self.t0 = time.perf_counter()

    def start(self, command: str, argv, config: dict) -> None:
        self.doc = {
            "command": command,
            "argv": list(argv),
            "config": config,
            "versions": {"qstate_vae": __version__, "python": platform.python_version(), "numpy": np.__version__},
            "status": "running",
            "outputs": [],
        }
        self.write()

    def finish(self, status: str, **extra) -> None:
        self.doc["status"] = status
        self.doc["wall_time_s"] = round(time.perf_counter() - self.t0, 3)
        self.doc.update(extra)
        self.write()

    def write(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(pipeline.finite_summary(self.doc), indent=1) + "\n")


def _dataset_from_config(cfg: RunConfig) -> data.Dataset:
    fam = cfg.data.family
    upper = W_ALPHA if fam == "WSubpartition" else np.pi
    grid = np.linspace(0.0, 1.0 if fam == "Depolarized" else upper, cfg.data.points)
    template = StateFamilySpec(fam, pair=cfg.data.pair if fam == "WSubpartition" else None)
    return data.gen_dataset(template, grid, cfg.data.samples, cfg.seed)


def _load_or_generate(args, cfg: RunConfig) -> data.Dataset:
    return data.load_dataset(args.data) if getattr(args, "data", None) else _dataset_from_config(cfg)


def cmd_gen_data(args, cfg, out: Path) -> dict:
    ds = _dataset_from_config(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.save_dataset(ds, out)
    return {"outputs": [str(out)], "records": len(ds)}


def cmd_train(args, cfg, out: Path) -> dict:
    ds = _load_or_generate(args, cfg)
    model = VAEModel.init(cfg.latent_dim, np.random.default_rng([cfg.train.seed, 1]))
    out.parent.mkdir(parents=True, exist_ok=True)
    metrics_path = out.with_suffix(".metrics.csv")
    model, metrics = train(model, ds.x, cfg.train, metrics_path)
    save_checkpoint(model, out)
    return {"outputs": [str(out), str(metrics_path)], "final": metrics[-1] if metrics else None}


def cmd_sweep_latent(args, cfg, out: Path) -> dict:
    ds = _load_or_generate(args, cfg)
    table, _ = sweeps.latent_sweep(ds.x, cfg.sweep.latent_sizes, cfg.sweep.repeats, cfg.train, cfg.sweep.workers)
    written = report.emit_report({"loss_vs_n": pipeline._sweep_table(table)}, out / "report")
    return {"outputs": [str(p) for p in written], "mean_loss": table.mean.tolist(), "failures": table.failures}


def cmd_sweep_beta(args, cfg, out: Path) -> dict:
    ds = _load_or_generate(args, cfg)
    n = cfg.sweep.beta_latent_dim
    table, _ = sweeps.beta_sweep(ds.x, cfg.sweep.betas, n, cfg.train, cfg.sweep.repeats, cfg.sweep.workers)
    cols = [f"kl_{i}" for i in range(n)]
    tables = {
        "kl_activity": report.ReportTable(["beta"] + cols, [[b] + list(r) for b, r in zip(table.betas, table.rows)],
                                          report.FigureSpec("heatmap", "beta")),
        "kl_activity_raw": report.ReportTable(["beta"] + cols,
                                              [[b] + list(r) for b, r in zip(table.betas, table.median_kl)]),
    }
    written = report.emit_report(tables, out / "report")
    return {"outputs": [str(p) for p in written], "single_active_window": table.single_active_window(),
            "active_counts": table.active_counts().tolist()}


def cmd_encode(args, cfg, out: Path) -> dict:
    model = load_checkpoint(args.checkpoint)
    ds = data.load_dataset(args.data)
    enc = analysis.encode_dataset(model, ds)
    n = model.latent_dim
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "family", "alpha", "gamma", "pair", "concurrence"]
                   + [f"mu_{i}" for i in range(n)] + [f"logvar_{i}" for i in range(n)])
        for k in range(len(ds)):
            w.writerow([int(ds.sample_id[k]), ds.family[k], data._fmt(ds.alpha[k]), data._fmt(ds.gamma[k]),
                        ds.pair[k], repr(float(ds.concurrence[k]))]
                       + [repr(float(v)) for v in enc.mu[k]] + [repr(float(v)) for v in enc.logvar[k]])
    return {"outputs": [str(out)], "records": len(ds)}


def cmd_analyze(args, cfg, out: Path) -> dict:
    with open(args.encodings, newline="") as fh:
        rows = list(csv.DictReader(fh))
    col = f"mu_{args.latent}"
    if not rows or col not in rows[0]:
        raise FormatError(f"{args.encodings}: no column {col}")
    try:
        x = np.array([float(r[args.target]) if r[args.target] else np.nan for r in rows])
        z = np.array([float(r[col]) for r in rows])
    except ValueError as exc:
        raise FormatError(f"{args.encodings}: {exc}") from exc
    keep = np.isfinite(x)
    y = np.abs(z) if args.abs else z
    y_name = f"abs_z_{args.latent}" if args.abs else f"z_{args.latent}"
    fit = analysis.linreg_r2(x[keep], y[keep], args.target, y_name)
    table = report.ReportTable([args.target, y_name], [[a, b] for a, b in zip(x[keep], y[keep])],
                               report.FigureSpec("scatter", args.target, y_name, regression=fit))
    written = report.emit_report({"regression": table}, out / "report")
    return {"outputs": [str(p) for p in written], "regression": asdict(fit)}


def cmd_reproduce_all(args, cfg, out: Path) -> dict:
    res = pipeline.reproduce_all(out, cfg.scale, cfg.seed, cfg.train, cfg.sweep.workers, cfg.sweep.betas,
                                 cfg.sweep.latent_sizes)
    summary = pipeline.finite_summary(res.summary)
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    window = summary["beta_sweep"]["single_active_window"]
    return {"outputs": [str(p) for p in res.written] + [str(out / "summary.json")], "beta_window": window}


# command -> (handler, writes a directory, default output name)
COMMANDS = {
    "gen-data": (cmd_gen_data, False, "dataset.csv"),
    "train": (cmd_train, False, "model.json"),
    "sweep-latent": (cmd_sweep_latent, True, "sweep-latent"),
    "sweep-beta": (cmd_sweep_beta, True, "sweep-beta"),
    "encode": (cmd_encode, False, "encodings.csv"),
    "analyze": (cmd_analyze, True, "analysis"),
    "reproduce-all": (cmd_reproduce_all, True, "reproduce-all"),
}


def _apply_overrides(args, cfg: RunConfig) -> RunConfig:
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed", "must be non-negative")
        cfg.seed = args.seed
        cfg.train = replace(cfg.train, seed=args.seed)
    if getattr(args, "family", None):
        cfg.data.family = _family_name(args.family)
    for key in ("points", "samples", "pair"):
        if getattr(args, key, None) is not None:
            setattr(cfg.data, key, getattr(args, key))
    if getattr(args, "latent_dim", None) is not None:
        if not (1 <= args.latent_dim <= MAX_LATENT):
            raise ConfigError("latent_dim", f"must lie in [1, {MAX_LATENT}]")
        cfg.latent_dim = args.latent_dim
    if getattr(args, "beta", None) is not None:
        cfg.train = replace(cfg.train, beta_final=args.beta)
    if getattr(args, "epochs", None) is not None:
        cfg.train = replace(cfg.train, epochs=args.epochs)
    if getattr(args, "workers", None) is not None:
        cfg.sweep.workers = max(1, args.workers)
    if getattr(args, "scale", None) is not None:
        cfg.scale = args.scale
    return cfg


def dispatch(argv) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _apply_overrides(args, load_config(args.config))
        func, is_dir, default_name = COMMANDS[args.command]
        out = _output(args, default_name)
        mpath = out / MANIFEST if is_dir else out.with_name(out.name + ".manifest.json")
        manifest = Manifest(mpath, args.force)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    manifest.start(args.command, argv, cfg.to_dict())
    try:
        result = func(args, cfg, out)
    except KeyboardInterrupt:
        manifest.finish("cancelled")
        print("cancelled", file=sys.stderr)
        return 2
    except (NumericError, PreconditionError, ShapeError, FormatError, OSError) as exc:
        manifest.finish("failed", error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 2
    manifest.finish("ok", **result)
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
