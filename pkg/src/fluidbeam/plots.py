"""Figure rendering for the report paths.

Each run_* report writes a PNG next to its CSV.  Headless backend; nothing
here affects the numbers.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def training_curve(history, path):
    epochs = [h.epoch for h in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [h.train_wsr for h in history], label="train", lw=1.5)
    ax.plot(epochs, [h.eval_wsr for h in history], label="eval", lw=1.5, ls="--")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean weighted sum rate (bits/s/Hz)")
    ax.legend()
    ax.grid(alpha=0.3)
    _save(fig, path)


def benchmark_figure(summary_rows, path):
    """summary_rows: (sweep_var, value, scheme, draws, mean, std)."""
    schemes = []
    for row in summary_rows:
        if row[2] not in schemes:
            schemes.append(row[2])
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for scheme in schemes:
        pts = [(float(r[1]), r[4], r[5], int(r[3])) for r in summary_rows
               if r[2] == scheme]
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        err = [p[2] / np.sqrt(p[3]) for p in pts]
        if len(xs) > 1:
            ax.errorbar(xs, ys, yerr=err, label=scheme, marker="o", ms=3, lw=1.2)
        else:
            ax.errorbar([scheme], ys, yerr=err, marker="o", ls="none")
    if summary_rows:
        ax.set_xlabel(summary_rows[0][0])
    ax.set_ylabel("mean weighted sum rate (bits/s/Hz)")
    if len({r[2] for r in summary_rows}) > 1 and len({r[1] for r in summary_rows}) > 1:
        ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _save(fig, path)


def rps_figure(rows, path):
    """rows: (trials, draw, best_wsr)."""
    counts = sorted({int(r[0]) for r in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    means = []
    for t in counts:
        vals = [float(r[2]) for r in rows if int(r[0]) == t]
        means.append(np.mean(vals))
        ax.plot([t] * len(vals), vals, ".", color="0.6", ms=3)
    ax.plot(counts, means, "o-", color="C0", label="mean best-of-T")
    ax.set_xscale("log")
    ax.set_xlabel("selection trials T")
    ax.set_ylabel("best weighted sum rate (bits/s/Hz)")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    _save(fig, path)


def sched_figure(reports, path):
    bs = [r.task_count for r in reports]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(bs, [r.total_cycles for r in reports], "o-", label="total")
    ax.plot(bs, [r.memory_cycles for r in reports], "s--", label="memory")
    ax.plot(bs, [r.compute_cycles for r in reports], "^--", label="compute")
    for r in reports:
        ax.annotate(r.bound[0].upper(), (r.task_count, r.total_cycles),
                    textcoords="offset points", xytext=(0, 6), ha="center",
                    fontsize=8)
    ax.set_xlabel("batched tasks B")
    ax.set_ylabel("cycles")
    ax.legend()
    ax.grid(alpha=0.3)
    _save(fig, path)
