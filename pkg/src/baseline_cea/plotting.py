"""SVG figures, each written next to a CSV holding exactly the plotted numbers.

CC results are drawn in red and AC results in blue.  SVG output is made
reproducible by fixing the hash salt and dropping the date metadata.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .econ import CeacCurve, CepCloud, write_ceac_csv, write_cep_csv  # noqa: E402
from .trial_data import AC, CC, MissingnessReport  # noqa: E402

COLORS = {CC: "tab:red", AC: "tab:blue"}
_LINESTYLES = ("-", "--", ":", "-.", (0, (5, 1)), (0, (3, 1, 1, 1, 1, 1)))


def _save(fig, path: Path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": "baseline-cea", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_ceac(curves: Sequence[CeacCurve], path) -> tuple[Path, Path]:
    """One line per curve; colour by convention, line style by model."""
    path = Path(path)
    models = list(dict.fromkeys(c.model for c in curves))
    fig, ax = plt.subplots(figsize=(6, 4))
    for c in curves:
        style = _LINESTYLES[models.index(c.model) % len(_LINESTYLES)]
        label = f"{c.model} {c.convention}".strip()
        ax.plot(c.grid, c.p, color=COLORS.get(c.convention, "black"), linestyle=style, label=label)
    ax.set_xlabel("willingness to pay (per QALY)")
    ax.set_ylabel("probability of cost-effectiveness")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)
    data = path.with_suffix(".csv")
    write_ceac_csv(data, curves)
    return path, data


def plot_cep(clouds: Sequence[CepCloud], path, k: float = 20000.0) -> tuple[Path, Path]:
    """Scatter of incremental draws with mean markers and the line ``dc = k * de``."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 5))
    for cl in clouds:
        color = COLORS.get(cl.convention, "black")
        label = f"{cl.model} {cl.convention}".strip()
        ax.scatter(cl.delta_e, cl.delta_c, s=2, alpha=0.25, color=color, linewidths=0)
        ax.plot([cl.mean_e], [cl.mean_c], marker="o", markersize=7, color=color,
                markeredgecolor="black", linestyle="none", label=label)
    lo, hi = ax.get_xlim()
    ax.plot([lo, hi], [k * lo, k * hi], color="grey", linewidth=0.8)
    ax.set_xlim(lo, hi)
    ax.axhline(0, color="black", linewidth=0.5)
    ax.axvline(0, color="black", linewidth=0.5)
    ax.set_xlabel("QALY difference")
    ax.set_ylabel("cost difference")
    ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)
    data = path.with_suffix(".csv")
    write_cep_csv(data, clouds)
    return path, data


def plot_baseline_histograms(report: MissingnessReport, path) -> tuple[Path, Path]:
    """CC and AC baseline histograms per arm and variable, with their means."""
    path = Path(path)
    comps = [c for c in report.comparisons if c.bin_edges]
    variables = list(dict.fromkeys(c.variable for c in comps))
    fig, axes = plt.subplots(len(variables), 2, figsize=(8, 3 * len(variables)), squeeze=False)
    rows = []
    for c in comps:
        ax = axes[variables.index(c.variable)][c.arm]
        edges = list(c.bin_edges)
        for kind, counts, mean in ((AC, c.ac_counts, c.ac_mean), (CC, c.cc_counts, c.cc_mean)):
            ax.stairs(counts, edges, color=COLORS[kind], label=kind,
                      fill=kind == AC, alpha=0.35 if kind == AC else 1.0)
            if mean is not None:
                ax.axvline(mean, color=COLORS[kind], linestyle="--", linewidth=1)
            for k, n in enumerate(counts):
                rows.append([c.variable, c.arm, kind, k, repr(edges[k]), repr(edges[k + 1]), n])
            rows.append([c.variable, c.arm, kind, "mean", "", "",
                         "NA" if mean is None else repr(mean)])
        ax.set_title(f"{c.variable}, arm {c.arm}")
        ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)
    data = path.with_suffix(".csv")
    with data.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "arm", "convention", "bin", "lower", "upper", "value"])
        w.writerows(rows)
    return path, data


__all__ = ["COLORS", "plot_baseline_histograms", "plot_ceac", "plot_cep"]
