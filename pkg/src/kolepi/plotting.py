"""Figure rendering for the benchmark and optimal-control reports.

Every function writes a PNG next to the delimited output it illustrates.
Rendering is headless (Agg); the CLI report paths call these after the
CSV/JSON files are on disk.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_benchmark_boxplots(entries, model_name: str, path) -> Path:
    """Side-by-side per-sample error boxplots per kernel, one color per mode."""
    kernels = sorted({e.kernel_name for e in entries})
    modes = ["partial", "m"]
    colors = {"partial": "tab:blue", "m": "tab:red"}
    fig, ax = plt.subplots(figsize=(1.8 * len(kernels) + 2, 4.5))
    width = 0.35
    for j, mode in enumerate(modes):
        data, positions = [], []
        for i, kname in enumerate(kernels):
            match = [e for e in entries if e.kernel_name == kname and e.mode == mode]
            if match:
                data.append(match[0].pooled_errors)
                positions.append(i + (j - 0.5) * width)
        bp = ax.boxplot(data, positions=positions, widths=width * 0.9, whis=1.5,
                        flierprops={"marker": ".", "markersize": 3},
                        medianprops={"color": colors[mode]})
        for element in ("boxes", "whiskers", "caps"):
            for artist in bp[element]:
                artist.set_color(colors[mode])
    ax.set_yscale("log")
    ax.set_xticks(range(len(kernels)))
    ax.set_xticklabels(kernels, rotation=20)
    ax.set_ylabel("prediction relative error")
    ax.set_title(f"{model_name.upper()}: per-sample errors (blue: derivative mode, red: map mode)")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def render_scaling(rows, model_name: str, path) -> Path:
    """Error and fit-time versus training size, log-log."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    for mode, marker in (("m", "o"), ("partial", "s")):
        sub = [r for r in rows if r.model == model_name and r.mode == mode]
        if not sub:
            continue
        sizes = [r.size for r in sub]
        ax1.loglog(sizes, [r.error for r in sub], marker=marker, label=f"KOL-{mode}")
        ax2.loglog(sizes, [max(r.fit_seconds, 1e-4) for r in sub], marker=marker, label=f"KOL-{mode}")
    ax1.set_xlabel("training size")
    ax1.set_ylabel("prediction relative error")
    ax2.set_xlabel("training size")
    ax2.set_ylabel("fit seconds")
    for ax in (ax1, ax2):
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
    fig.suptitle(model_name.upper())
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def render_eradication(summaries: dict[str, list[dict]], path) -> Path:
    """Three panels versus u_max: optimal switch time, eradication time,
    susceptibles at eradication.  One line per provider."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.8))
    styles = {"ode": {"ls": "-", "marker": ""}, "kol-m": {"ls": "", "marker": "o"},
              "kol-partial": {"ls": "", "marker": "^"}}
    for provider, rows in summaries.items():
        rows = sorted(rows, key=lambda r: r["u_max"])
        u = [r["u_max"] for r in rows]
        style = styles.get(provider, {"ls": "--", "marker": "x"})
        axes[0].plot(u, [r["tau_star"] for r in rows], label=provider, **style)
        axes[1].plot(u, [r["te_star"] for r in rows], label=provider, **style)
        axes[2].plot(u, [r["s_star"] for r in rows], label=provider, **style)
    for ax, title in zip(axes, ["optimal switch time", "eradication time", "susceptibles at eradication"]):
        ax.set_xlabel("u_max")
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def render_schedules(records: list[dict], t_star: float, path) -> Path:
    """Step plots of the optimal schedules, one panel per weight pair."""
    n = len(records)
    cols = min(4, max(1, n))
    rows_n = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows_n, cols, figsize=(3.2 * cols, 2.6 * rows_n), squeeze=False)
    for k, rec in enumerate(records):
        ax = axes[k // cols][k % cols]
        for provider, levels in rec["levels"].items():
            levels = np.asarray(levels)
            edges = np.linspace(0.0, t_star, levels.size + 1)
            ax.stairs(levels, edges, label=provider)
        ax.set_title(f"C_I={rec['c_i']:g}, C_u={rec['c_u']:g}", fontsize=9)
        ax.set_ylim(-0.02, 0.75)
        ax.grid(True, alpha=0.3)
    axes[0][0].legend(fontsize=7)
    for k in range(n, rows_n * cols):
        axes[k // cols][k % cols].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def render_cost_bars(records: list[dict], path) -> Path:
    """Cross-evaluated true costs per weight pair, grouped by provider."""
    providers = sorted({p for rec in records for p in rec["true_cost"]})
    labels = [f"{rec['c_i']:g}/{rec['c_u']:g}" for rec in records]
    x = np.arange(len(records))
    width = 0.8 / max(1, len(providers))
    fig, ax = plt.subplots(figsize=(1.1 * len(records) + 2, 4))
    for j, provider in enumerate(providers):
        vals = [rec["true_cost"][provider] for rec in records]
        ax.bar(x + (j - (len(providers) - 1) / 2) * width, vals, width, label=provider)
    ax.set_yscale("log")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=45, fontsize=8)
    ax.set_xlabel("C_I / C_u")
    ax.set_ylabel("cost under the true dynamics")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)
