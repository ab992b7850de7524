"""CSV tables and SVG figures for experiment results."""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .analysis import RegressionResult

FIGURE_KINDS = ("scatter", "line", "heatmap")


@dataclass
class FigureSpec:
    """How to draw a table.

    ``scatter`` and ``line`` plot column ``y`` against column ``x``, one
    series per value of ``group`` if given. ``offsets`` shifts a group
    vertically at draw time only. ``heatmap`` draws every numeric column
    except ``x`` as a grid with one row per table row.
    """

    kind: str
    x: str
    y: Optional[str] = None
    yerr: Optional[str] = None
    group: Optional[str] = None
    offsets: Mapping[str, float] = field(default_factory=dict)
    regression: Optional[RegressionResult] = None
    title: str = ""


@dataclass
class ReportTable:
    header: list
    rows: list
    figure: Optional[FigureSpec] = None

    def column(self, name: str) -> np.ndarray:
        i = self.header.index(name)
        return np.array([r[i] for r in self.rows])


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_table_csv(table: ReportTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header)
        for row in table.rows:
            w.writerow([_cell(v) for v in row])


def emit_report(tables: Mapping[str, ReportTable], path_prefix) -> list:
    """Write ``<prefix>_<name>.csv`` for each table and ``.svg`` for each
    non-empty table with a figure. Returns the written paths."""
    prefix = Path(path_prefix)
    written = []
    for name, table in tables.items():
        csv_path = prefix.parent / f"{prefix.name}_{name}.csv"
        try:
            write_table_csv(table, csv_path)
        except OSError as exc:
            raise OSError(f"cannot write {csv_path}: {exc}") from exc
        written.append(csv_path)
        if table.figure is not None and table.rows:
            svg_path = csv_path.with_suffix(".svg")
            try:
                _draw(table, svg_path)
            except OSError as exc:
                raise OSError(f"cannot write {svg_path}: {exc}") from exc
            written.append(svg_path)
    return written


def _draw(table: ReportTable, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    spec = table.figure
    if spec.kind not in FIGURE_KINDS:
        raise ValueError(f"unknown figure kind {spec.kind!r}")
    with matplotlib.rc_context({"svg.fonttype": "none", "svg.hashsalt": "qstate-vae"}):
        fig, ax = plt.subplots(figsize=(5, 4))
        if spec.kind == "heatmap":
            cols = [c for c in table.header if c != spec.x]
            grid = np.array([[float(r[table.header.index(c)]) for c in cols] for r in table.rows])
            im = ax.imshow(grid, aspect="auto", cmap="viridis", vmin=0.0)
            ax.set_yticks(range(len(table.rows)), [_cell(v) for v in table.column(spec.x)])
            ax.set_xticks(range(len(cols)), cols, rotation=45)
            ax.set_ylabel(spec.x)
            fig.colorbar(im, ax=ax)
        else:
            groups = [None] if spec.group is None else sorted(set(table.column(spec.group)))
            for g in groups:
                mask = np.ones(len(table.rows), bool) if g is None else table.column(spec.group) == g
                x = table.column(spec.x)[mask].astype(float)
                y = table.column(spec.y)[mask].astype(float) + spec.offsets.get(g, 0.0)
                label = None if g is None else str(g)
                if spec.kind == "line":
                    err = table.column(spec.yerr)[mask].astype(float) if spec.yerr else None
                    ax.errorbar(x, y, yerr=err, marker="o", ms=3, label=label)
                else:
                    ax.scatter(x, y, s=6, label=label)
            if spec.regression is not None:
                r = spec.regression
                xs = np.linspace(*_span(table.column(spec.x).astype(float)), 2)
                ax.plot(xs, r.slope * xs + r.intercept, "k--", lw=1, label="fit", gid="fitted-line")
                ax.text(0.03, 0.95, f"r² = {r.r_squared:.4f}", transform=ax.transAxes, va="top")
            if spec.group is not None:
                ax.legend(fontsize=7)
            ax.set_xlabel(spec.x)
            ax.set_ylabel(spec.y)
        if spec.title:
            ax.set_title(spec.title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def _span(v: np.ndarray) -> tuple:
    return float(v.min()), float(v.max())
