"""Figure rendering for experiment reports.

Figures are written next to the delimited trace output; the CSV/JSON files
remain the canonical record and nothing downstream depends on the images.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiments import RunResult

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
FIG_WIDTH = 6.0

plt.rcParams.update(
    {
        "figure.figsize": (FIG_WIDTH, FIG_WIDTH * _GOLDEN),
        "font.size": 9,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "savefig.dpi": 150,
    }
)


def _median_curve(results: list[RunResult], column: str) -> tuple[np.ndarray, np.ndarray]:
    n_ref = results[0].trace.n
    rows = [getattr(r.trace, column) for r in results if len(r.trace) == n_ref.size]
    return n_ref, np.median(np.stack(rows), axis=0)


def _by_variant(results: list[RunResult]) -> dict[str, list[RunResult]]:
    grouped: dict[str, list[RunResult]] = {}
    for r in results:
        if not r.diverged:
            grouped.setdefault(r.variant, []).append(r)
    return grouped


def residual_figure(results: list[RunResult], path) -> Path:
    """Median averaged residual per variant against the iteration index."""
    fig, ax = plt.subplots()
    for name, group in _by_variant(results).items():
        n, med = _median_curve(group, "avg_residual")
        keep = med > 0
        ax.plot(n[keep], med[keep], label=name)
    ax.set_xlabel("iteration n")
    ax.set_ylabel("averaged residual")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def distance_figure(results: list[RunResult], path) -> Path | None:
    """Median l1 distance to the reference fixed point, when recorded."""
    grouped = _by_variant(results)
    if not grouped or any(
        np.isnan(r.trace.dist_to_ref).any() for g in grouped.values() for r in g
    ):
        return None
    fig, ax = plt.subplots()
    for name, group in grouped.items():
        n, med = _median_curve(group, "dist_to_ref")
        keep = med > 0
        ax.plot(n[keep], med[keep], label=name)
    ax.set_xlabel("iteration n")
    ax.set_ylabel("l1 distance to fixed point")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def rate_figure(curves: dict[str, tuple[np.ndarray, np.ndarray, float]], path) -> Path:
    """Log-log averaged residual vs step sum, one curve per schedule.

    ``curves`` maps a label to (A_n, avg_residual_n, fitted_slope).
    """
    fig, ax = plt.subplots()
    for label, (a_n, avg, slope) in curves.items():
        keep = (a_n > 0) & (avg > 0)
        ax.plot(a_n[keep], avg[keep], label=f"{label} (slope {slope:.2f})")
    ax.set_xlabel("step sum A_n")
    ax.set_ylabel("averaged residual")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def experiment_figures(results: list[RunResult], out_dir) -> list[Path]:
    """Render the standard report figures for a finished experiment."""
    out = Path(out_dir)
    written = [residual_figure(results, out / "avg_residual.png")]
    dist = distance_figure(results, out / "distance_to_ref.png")
    if dist is not None:
        written.append(dist)
    return written
