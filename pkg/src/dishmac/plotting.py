"""Render figure datasets and optimizer curves to image files.

All rendering goes through the Agg backend so the CLI can emit PNGs next
to its CSV output on headless machines.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["render_dataset", "render_sigma_curve", "render_sigma_table"]

_X_LABELS = {
    "lambda": "packet arrival rate (pkt/s per node)",
    "n": "node density / population",
    "sigma": "control-to-data bandwidth ratio",
    "m": "number of data channels",
}


def _axis_label(name):
    return _X_LABELS.get(name, name)


def render_dataset(dataset, path) -> None:
    """One line per column over the swept grid; gaps are skipped."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, values in dataset.columns.items():
        if name.endswith("_std"):
            continue
        xs = [x for x, v in zip(dataset.x_values, values) if v is not None]
        ys = [v for v in values if v is not None]
        if not xs:
            continue
        style = "--" if "analytic" in name or name.startswith("sigma") else "-"
        marker = "" if len(xs) > 30 else "o"
        ax.plot(xs, ys, style, marker=marker, markersize=4, label=name)
    ax.set_xlabel(_axis_label(dataset.x_name))
    ax.set_ylabel("value")
    ax.set_title(dataset.figure_id)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_sigma_curve(result, path) -> None:
    """Optimizer sweep with the located maximum marked."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    xs = [s for s, v in result.curve if v is not None]
    ys = [v for _, v in result.curve if v is not None]
    ax.plot(xs, ys, "-", lw=1.5, label=f"m = {result.m}")
    ax.axvline(result.sigma_star, color="k", ls=":", lw=1)
    ax.plot([result.sigma_star], [result.p_co_max], "k*", markersize=10,
            label=f"sigma* = {result.sigma_star:.2f}")
    ax.set_xlabel(_axis_label("sigma"))
    ax.set_ylabel("cooperation availability")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_sigma_table(table, path) -> None:
    """sigma* against channel count, one line per scenario."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for n, lam in table.scenarios:
        col = table.column(n, lam)
        xs = [m for m, v in zip(table.m_values, col) if v is not None]
        ys = [v for v in col if v is not None]
        ax.plot(xs, ys, "o-", markersize=4, label=f"n={n:g}, lambda={lam:g}")
    ax.set_xlabel(_axis_label("m"))
    ax.set_ylabel("optimal bandwidth ratio")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
