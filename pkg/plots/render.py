#!/usr/bin/env python3
"""Batch renderer for the four standard figures from experiment CSV output.

    python plots/render.py --figure fig3 --in out-transition-sweep --out fig3.png

Figures and the files they read (all documented experiment artifacts):

  fig1  bifurcation diagram      bifurcation.csv, bifurcation_branches.csv
  fig2  sample field snapshots   snapshots.csv, critical_points.csv
  fig3  transition times vs beta sweep.csv, rate_report_beta*.json
  fig4  ergodicity panels        traj_seed*.csv, diagnostics.json

Rendering is a pure function of the CSV content and the figure spec: fixed
styles, no timestamps in the image metadata.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

FIGURES = ("fig1", "fig2", "fig3", "fig4")

# strip the Software tag so identical inputs give identical bytes
_PNG_METADATA = {"Software": None}


class SchemaError(ValueError):
    """An input CSV is missing a required column."""


@dataclass
class FigureSpec:
    figure: str
    input_dir: Path
    output: Path
    log_scale: bool = True
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.figure not in FIGURES and self.figure != "empty":
            raise ValueError(f"unknown figure {self.figure!r}")


def read_csv_columns(path: Path, required=()):
    """Load a CSV as {column: float array}; raises SchemaError on missing columns."""
    if not path.exists():
        raise SchemaError(f"missing input file {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    for col in required:
        if col not in header:
            raise SchemaError(f"{path.name}: required column {col!r} not found in {header}")
    data = {}
    for j, name in enumerate(header):
        data[name] = np.array([float(r[j]) if r[j] != "" else np.nan for r in rows])
    return data


def fig3_theory_params(sweep_csv: Path):
    """(slope, intercept) of ln tau_theory_limit vs beta from the sweep table.

    For the conservative-limit law tau = 2 pi Lambda e^{beta dE} the slope
    is the barrier dE and the intercept is ln(2 pi Lambda).
    """
    data = read_csv_columns(sweep_csv, required=("beta", "tau_theory_limit"))
    beta = data["beta"]
    log_tau = np.log(data["tau_theory_limit"])
    slope, intercept = np.polyfit(beta, log_tau, 1)
    return float(slope), float(intercept)


def _render_fig1(spec: FigureSpec, ax):
    main = read_csv_columns(spec.input_dir / "bifurcation.csv", ("delta", "energy", "index"))
    branches = read_csv_columns(
        spec.input_dir / "bifurcation_branches.csv", ("delta", "branch", "energy")
    )
    for n in sorted(set(branches["branch"].astype(int))):
        mask = branches["branch"].astype(int) == n
        ax.plot(branches["delta"][mask], branches["energy"][mask], "-", lw=1.6,
                label=f"branch {n}")
    ax.axhline(0.25, color="k", ls=":", lw=1.0, label="uniform zero, E = 1/4")
    for n in (1, 2, 3):
        ax.axvline(1.0 / (n * math.pi), color="0.75", lw=0.8)
    ax.set_xlabel(r"$\delta$")
    ax.set_ylabel("saddle energy")
    ax.legend(fontsize=8)
    ax2 = ax.twinx()
    ax2.step(main["delta"], main["index"], where="mid", color="tab:red", alpha=0.45, lw=1.0)
    ax2.set_ylabel("Morse index of the zero field", color="tab:red")


def _render_fig2(spec: FigureSpec, fig):
    snaps = read_csv_columns(spec.input_dir / "snapshots.csv", ("x",))
    crit = read_csv_columns(
        spec.input_dir / "critical_points.csv", ("x", "u_minus", "u_plus", "u_saddle")
    )
    ax_top, ax_bot = fig.subplots(2, 1, sharex=True)
    for name, values in snaps.items():
        if name == "x":
            continue
        ax_top.plot(snaps["x"], values, lw=1.2, label=name.replace("_", " "))
    ax_top.set_ylabel("u(x)")
    ax_top.legend(fontsize=8)
    for name, style in (("u_minus", "r--"), ("u_plus", "b-"), ("u_saddle", "k-.")):
        ax_bot.plot(crit["x"], crit[name], style, lw=1.4, label=name.replace("_", " "))
    ax_bot.set_xlabel("x")
    ax_bot.set_ylabel("critical points")
    ax_bot.legend(fontsize=8)


def _render_fig3(spec: FigureSpec, ax):
    data = read_csv_columns(
        spec.input_dir / "sweep.csv",
        ("beta", "tau_emp", "tau_emp_stderr", "tau_theory_finiteN", "tau_theory_limit"),
    )
    beta = data["beta"]
    ax.errorbar(beta, data["tau_emp"], yerr=data["tau_emp_stderr"], fmt="o", ms=5,
                capsize=3, label="ensemble estimate")
    slope, intercept = fig3_theory_params(spec.input_dir / "sweep.csv")
    bb = np.linspace(beta.min(), beta.max(), 200)
    ax.plot(bb, np.exp(intercept + slope * bb), "k-", lw=1.2,
            label=f"theory: slope {slope:.4g}")
    ax.plot(beta, data["tau_theory_finiteN"], "s", ms=3, color="0.4", label="finite-N theory")
    if spec.log_scale:
        ax.set_yscale("log")
    ax.set_xlabel(r"$\beta$")
    ax.set_ylabel(r"mean transition time $\tau$")
    ax.legend(fontsize=8)


def _render_fig4(spec: FigureSpec, fig):
    diag = json.loads((spec.input_dir / "diagnostics.json").read_text())
    beta = diag["beta"]
    seeds = sorted(spec.input_dir.glob("traj_seed*.csv"))
    if not seeds:
        raise SchemaError(f"no traj_seed*.csv files in {spec.input_dir}")
    (ax_avg, ax_single), (ax_all, ax_h) = fig.subplots(2, 2)
    first = None
    for path in seeds:
        tr = read_csv_columns(path, ("t", "ubar", "pbar", "H"))
        if first is None:
            first = tr
        t, pbar = tr["t"], tr["pbar"]
        p2 = pbar**2
        seg = 0.5 * (p2[1:] + p2[:-1]) * np.diff(t)
        with np.errstate(invalid="ignore", divide="ignore"):
            running = np.concatenate(([p2[0]], np.cumsum(seg) / (t[1:] - t[0])))
        ax_avg.plot(t, running, lw=0.9)
        ax_all.plot(tr["ubar"], tr["pbar"], lw=0.5, alpha=0.7)
    ax_avg.axhline(1.0 / beta, color="k", ls=":", lw=1.2)
    ax_avg.set_xlabel("t")
    ax_avg.set_ylabel(r"running avg of $\bar p^2$")
    ax_single.plot(first["ubar"], first["pbar"], lw=0.6)
    ax_single.set_xlabel(r"$\bar u$")
    ax_single.set_ylabel(r"$\bar p$ (one seed)")
    ax_all.set_xlabel(r"$\bar u$")
    ax_all.set_ylabel(r"$\bar p$ (all seeds)")
    for path in seeds:
        tr = read_csv_columns(path, ("t", "H"))
        ax_h.plot(tr["t"], tr["H"], lw=0.7)
    ax_h.set_xlabel("t")
    ax_h.set_ylabel(r"$H_N$")
    fig.tight_layout()


def render(spec: FigureSpec) -> Path:
    """Render one figure to spec.output; returns the written path."""
    if spec.figure == "empty":
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.set_title("no data")
    elif spec.figure == "fig2":
        fig = plt.figure(figsize=(6, 5))
        _render_fig2(spec, fig)
    elif spec.figure == "fig4":
        fig = plt.figure(figsize=(8, 6))
        _render_fig4(spec, fig)
    else:
        fig, ax = plt.subplots(figsize=(5.2, 3.8))
        if spec.figure == "fig1":
            _render_fig1(spec, ax)
        else:
            _render_fig3(spec, ax)
        fig.tight_layout()
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output, dpi=130, metadata=_PNG_METADATA)
    plt.close(fig)
    return spec.output


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--figure", required=True, choices=FIGURES + ("empty",))
    parser.add_argument("--in", dest="input_dir", type=Path, default=Path("."),
                        help="directory with the experiment CSV output")
    parser.add_argument("--out", type=Path, required=True, help="output image path")
    parser.add_argument("--linear", action="store_true", help="linear instead of log tau axis")
    args = parser.parse_args(argv)
    spec = FigureSpec(args.figure, args.input_dir, args.out, log_scale=not args.linear)
    try:
        path = render(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
