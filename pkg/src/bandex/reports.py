"""Delimited report output and the matplotlib figures rendered next to it."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def render_deficiency_figure(rows, path) -> None:
    """Exact policy value vs. support deficiency, one line per method.

    rows: (temperature, unsupported_fraction, method, mean, std)."""
    methods = sorted({r[2] for r in rows})
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for method in methods:
        pts = sorted((r[1], r[3], r[4]) for r in rows if r[2] == method)
        xs = [p[0] for p in pts]
        means = [p[1] for p in pts]
        stds = [p[2] for p in pts]
        ax.errorbar(xs, means, yerr=stds, marker="o", capsize=3, label=method)
    ax.set_xlabel("fraction of unsupported (context, action) pairs")
    ax.set_ylabel("exact policy value")
    ax.set_title("Learned policy value vs. support deficiency")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep_figure(sweep_result, path) -> None:
    """Validation estimates per selector across the reward-shift grid."""
    entries = [e for e in sweep_result.entries if e.error is None]
    ks = [e.k for e in entries]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    selectors = sorted({s for e in entries for s in e.estimates})
    for s in selectors:
        ax.plot(ks, [e.estimates[s] for e in entries], marker="o", label=s)
    if entries and entries[0].exact_value is not None:
        ax.plot(ks, [e.exact_value for e in entries], "k--", label="exact value")
    ax.set_xlabel("reward shift k")
    ax.set_ylabel("validation estimate")
    ax.set_title("Model selection over the reward shift")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
