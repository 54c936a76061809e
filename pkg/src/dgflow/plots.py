"""Figure rendering for report outputs (headless Agg backend, SVG files).

Scatter panels follow the paper-style layout: real data brown, base samples
blue, refined samples red.
"""

import matplotlib
import numpy as np

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "dgflow"  # reproducible SVG ids

import matplotlib.pyplot as plt  # noqa: E402

REAL_COLOR = "#8c510a"
BASE_COLOR = "#2166ac"
REFINED_COLOR = "#b2182b"

_SVG_META = {"Date": None}  # drop the timestamp so reruns are byte-identical


def _save(fig, path):
    if str(path).endswith(".svg"):
        fig.savefig(path, metadata=_SVG_META)
    else:
        fig.savefig(path)
    plt.close(fig)


def scatter_panel(path, real, base, refined=None, title=None, lim=2.0):
    """Side-by-side scatter of real/base(/refined) point sets."""
    sets = []
    if real is not None and len(real):
        sets.append(("real", real, REAL_COLOR))
    sets.append(("base", base, BASE_COLOR))
    if refined is not None:
        sets.append(("refined", refined, REFINED_COLOR))
    fig, axes = plt.subplots(1, len(sets), figsize=(3.2 * len(sets), 3.2),
                             sharex=True, sharey=True)
    if len(sets) == 1:
        axes = [axes]
    for ax, (label, pts, color) in zip(axes, sets):
        ax.scatter(pts[:, 0], pts[:, 1], s=2.0, c=color, alpha=0.5, linewidths=0)
        ax.set_title(label)
        ax.set_xlim(-lim, lim)
        ax.set_ylim(-lim, lim)
        ax.set_aspect("equal")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    _save(fig, path)


def vector_field(path, points, vectors, title=None):
    """Quiver plot of drift vectors on a grid."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    scale = None if np.any(vectors) else 1.0  # autoscale chokes on all-zero fields
    ax.quiver(points[:, 0], points[:, 1], vectors[:, 0], vectors[:, 1],
              angles="xy", color=BASE_COLOR, scale=scale)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def density_comparison(path, centers, grid_density, samples, title=None):
    """Grid PDE solution against a particle histogram."""
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.hist(samples, bins=100, density=True, alpha=0.45, color=BASE_COLOR,
            label="particles")
    ax.plot(centers, grid_density, color=REFINED_COLOR, lw=1.5, label="grid")
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
