"""Report figures rendered to files next to the JSON/CSV output."""

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .workflows import MODIFICATION_KINDS

_STATUS_ORDER = ("determined-correct", "determined-error", "trained",
                 "approximated")
_STATUS_COLORS = {"determined-correct": "#2a9d2a",
                  "determined-error": "#d62728",
                  "trained": "#7f7f7f",
                  "approximated": "#1f77b4"}


def loocv_figure(report, path):
    """Fold statuses and the widths of the screening intervals."""
    statuses = [r.status for r in report.per_instance]
    counts = [statuses.count(s) for s in _STATUS_ORDER]
    widths = []
    for r in report.per_instance:
        w = r.bound.width
        widths.append(w if math.isfinite(w) else np.nan)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.bar(range(len(_STATUS_ORDER)), counts,
            color=[_STATUS_COLORS[s] for s in _STATUS_ORDER])
    ax1.set_xticks(range(len(_STATUS_ORDER)))
    ax1.set_xticklabels(_STATUS_ORDER, rotation=20, ha="right", fontsize=8)
    ax1.set_ylabel("folds")
    ax1.set_title("fold outcomes (errors: %d, trainings: %d)"
                  % (report.error_count, report.trainings_performed))
    colors = [_STATUS_COLORS[s] for s in statuses]
    ax2.scatter(range(len(widths)), widths, s=8, c=colors)
    ax2.set_xlabel("fold")
    ax2.set_ylabel("interval width")
    if np.isfinite(widths).any() and np.nanmax(widths) > 0:
        ax2.set_yscale("log")
    ax2.set_title("screening interval width per fold")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def stepwise_figure(report, path):
    """Trained vs screened candidates per elimination step."""
    steps = report.per_step
    idx = np.arange(len(steps))
    trained = [s.candidates_trained for s in steps]
    screened = [s.candidates_screened for s in steps]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(idx, trained, label="trained", color="#7f7f7f")
    ax.bar(idx, screened, bottom=trained, label="screened", color="#2a9d2a")
    ax.set_xlabel("elimination step")
    ax.set_ylabel("candidates")
    ax.set_xticks(idx)
    ax2 = ax.twinx()
    ax2.plot(idx, [s.e_best for s in steps], "o-", color="#d62728",
             label="best validation error")
    ax2.set_ylabel("validation errors")
    handles1, labels1 = ax.get_legend_handles_labels()
    handles2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(handles1 + handles2, labels1 + labels2, fontsize=8)
    ax.set_title("removed: %s" % (report.selected if report.selected
                                  else "nothing"))
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def tightness_figure(rows, path):
    """Label determination rate against modification count, one panel per
    modification kind, lines per (penalty weight, bound construction)."""
    kinds = [k for k in MODIFICATION_KINDS
             if any(r["kind"] == k for r in rows)]
    if not kinds:
        raise ValueError("no rows to plot")
    lambdas = sorted({r["lambda"] for r in rows}, reverse=True)
    bounds_seen = sorted({r["bound"] for r in rows})
    cmap = plt.get_cmap("viridis")
    colors = {lam: cmap(i / max(len(lambdas) - 1, 1))
              for i, lam in enumerate(lambdas)}
    styles = {"primal-scb": "-", "dual-scb": "--"}
    ncol = min(len(kinds), 2)
    nrow = (len(kinds) + ncol - 1) // ncol
    fig, axes = plt.subplots(nrow, ncol, figsize=(5 * ncol, 3.2 * nrow),
                             squeeze=False)
    for ax, kind in zip(axes.flat, kinds):
        for lam in lambdas:
            for b in bounds_seen:
                pts = sorted((r["count"], r["rate"]) for r in rows
                             if r["kind"] == kind and r["lambda"] == lam
                             and r["bound"] == b)
                if not pts:
                    continue
                ax.plot([p[0] for p in pts], [p[1] for p in pts],
                        styles.get(b, ":"), color=colors[lam], marker=".",
                        label="lam=%g %s" % (lam, b))
        ax.set_title(kind)
        ax.set_xlabel("modifications")
        ax.set_ylabel("determination rate")
        ax.set_ylim(-0.05, 1.05)
    for ax in axes.flat[len(kinds):]:
        ax.set_visible(False)
    axes.flat[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
