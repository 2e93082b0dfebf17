"""Figure rendering for batch tables and single-run diagnostics.

Figures are written next to the delimited outputs as PNG files; the CSV/JSONL
files remain the canonical data products.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .batch import OutcomeTable  # noqa: E402
from .simulate import OUTCOME_KINDS  # noqa: E402

_KIND_LABELS = {"a_first": "A first", "b_first": "B first",
                "deadlock": "deadlock", "collision": "collision"}
_KIND_COLORS = {"a_first": "tab:blue", "b_first": "tab:gray",
                "deadlock": "tab:orange", "collision": "tab:red"}


def render_outcome_figure(table: OutcomeTable, out_dir) -> Path:
    """Outcome proportions vs initial distance difference with Wilson bars."""
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.asarray(table.conditions, float)
    for kind in OUTCOME_KINDS:
        props = [table.proportion(d, kind) for d in table.conditions]
        los, his = zip(*[table.interval(d, kind) for d in table.conditions])
        err = [np.subtract(props, los), np.subtract(his, props)]
        ax.errorbar(xs, props, yerr=err, marker="o", capsize=3,
                    label=_KIND_LABELS[kind], color=_KIND_COLORS[kind])
    ax.set_xlabel("initial distance difference [m]")
    ax.set_ylabel("outcome proportion")
    ax.set_ylim(-0.05, 1.05)
    ax.set_title(f"regime: {table.regime}")
    ax.legend(loc="center left", fontsize=8)
    ax.grid(alpha=0.3)
    path = Path(out_dir) / f"outcomes_{table.regime}.png"
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_adversarial_figure(table: OutcomeTable, raw: list[dict],
                              out_dir) -> Path:
    """Collision proportion and first-replan times across the sweep."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    xs = np.asarray(table.conditions, float)
    props = [table.proportion(d, "collision") for d in table.conditions]
    los, his = zip(*[table.interval(d, "collision") for d in table.conditions])
    ax1.errorbar(xs, props, yerr=[np.subtract(props, los), np.subtract(his, props)],
                 marker="o", capsize=3, color="tab:red")
    ax1.set_ylabel("collision proportion")
    ax1.set_ylim(-0.05, 1.05)
    ax1.grid(alpha=0.3)

    means, q05, q95 = [], [], []
    for d in table.conditions:
        ts = [r["t_first_replan_a"] for r in raw
              if r["delta_d0"] == d and r.get("t_first_replan_a") is not None]
        if ts:
            means.append(np.mean(ts))
            q05.append(np.percentile(ts, 5))
            q95.append(np.percentile(ts, 95))
        else:
            means.append(np.nan)
            q05.append(np.nan)
            q95.append(np.nan)
    means = np.asarray(means)
    ax2.errorbar(xs, means, yerr=[means - np.asarray(q05),
                                  np.asarray(q95) - means],
                 marker="s", capsize=3, color="tab:blue")
    ax2.set_ylabel("first re-plan time [s]")
    ax2.set_xlabel("initial distance difference [m]")
    ax2.grid(alpha=0.3)
    path = Path(out_dir) / "adversarial_sweep.png"
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_run_figure(log: list[dict], out_dir, drift_rate: float,
                      name: str = "run") -> Path:
    """Per-run diagnostics: distance difference, speeds, evidence, pragmatic parts."""
    ticks = [r for r in log if r.get("record") == "tick"]
    agents = sorted({r["agent"] for r in ticks})
    by = {a: [r for r in ticks if r["agent"] == a] for a in agents}
    fig, axes = plt.subplots(4, 1, figsize=(7, 9), sharex=True)
    colors = {"A": "tab:blue", "B": "tab:gray"}

    if all(a in by for a in ("A", "B")) and by["A"] and by["B"]:
        n = min(len(by["A"]), len(by["B"]))
        ts = [by["A"][i]["t"] for i in range(n)]
        dd = [by["B"][i]["d_long"] - by["A"][i]["d_long"] for i in range(n)]
        axes[0].plot(ts, dd, color="k")
    axes[0].axhline(0.0, color="k", lw=0.5, ls=":")
    axes[0].set_ylabel("distance difference [m]")

    for a in agents:
        ts = [r["t"] for r in by[a]]
        axes[1].plot(ts, [r["v"] for r in by[a]], label=a, color=colors.get(a))
        axes[2].plot(ts, [r["evidence"] for r in by[a]], color=colors.get(a),
                     label=a)
        comp = [drift_rate * (r.get("prag_collision", 0.0)
                              + r.get("prag_safety", 0.0)) for r in by[a]]
        axes[3].plot(ts, comp, color=colors.get(a),
                     label=f"{a} collision part")
        for r in by[a]:
            if r["replanned"]:
                for ax in axes:
                    ax.axvline(r["t"], color=colors.get(a), lw=0.6, ls="--",
                               alpha=0.5)
    axes[1].set_ylabel("speed [m/s]")
    axes[1].legend(fontsize=8)
    axes[2].axhline(1.0, color="k", lw=0.5, ls=":")
    axes[2].set_ylabel("accumulated evidence")
    axes[3].set_ylabel("scaled collision pragmatic value")
    axes[3].set_xlabel("time [s]")
    for ax in axes:
        ax.grid(alpha=0.3)
    path = Path(out_dir) / f"{name}.png"
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
