"""Report figures rendered off-screen with the Agg backend.

Figures are built on :class:`matplotlib.figure.Figure` directly, so nothing
here touches pyplot's global state and no display is needed.
"""

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

# fixed metadata keeps repeated renders byte-identical
_PNG_METADATA = {"Software": None}


def _save(fig, path):
    FigureCanvasAgg(fig)
    fig.savefig(path, format="png", dpi=100, metadata=_PNG_METADATA)


def plot_trace(trace, path, title=None):
    """Objective and step sizes per stage, two stacked panels."""
    stages = [r.stage for r in trace.records]
    fig = Figure(figsize=(6.0, 5.0), layout="constrained")
    ax_obj, ax_eta = fig.subplots(2, 1, sharex=True)
    ax_obj.semilogy(stages, [max(r.objective, 1e-300) for r in trace.records],
                    marker="o", ms=3, label="objective")
    ax_obj.semilogy(stages, [max(r.fidelity, 1e-300) for r in trace.records],
                    ls="--", label="fidelity")
    ax_obj.set_ylabel("value")
    ax_obj.legend(frameon=False)
    ax_obj.grid(True, which="both", alpha=0.3)
    for name in ("eta1", "eta2", "eta3"):
        vals = [getattr(r, name) for r in trace.records]
        if any(vals):
            ax_eta.semilogy(stages, vals, marker=".", label=name)
    ax_eta.set_xlabel("stage")
    ax_eta.set_ylabel("step size")
    ax_eta.legend(frameon=False)
    ax_eta.grid(True, which="both", alpha=0.3)
    if title:
        fig.suptitle(title)
    _save(fig, path)


def plot_panel(images, titles, path):
    """Side-by-side view of RGB images in [0, 1]; rain layers are shown rescaled."""
    fig = Figure(figsize=(3.0 * len(images), 3.2), layout="constrained")
    axes = np.atleast_1d(fig.subplots(1, len(images)))
    for ax, img, title in zip(axes, images, titles):
        ax.imshow(np.clip(img, 0.0, 1.0), interpolation="nearest")
        ax.set_title(title, fontsize=9)
        ax.set_axis_off()
    _save(fig, path)


def plot_atoms(sheet, path, title=None):
    fig = Figure(figsize=(4.0, 4.0), layout="constrained")
    ax = fig.subplots()
    ax.imshow(sheet, interpolation="nearest")
    ax.set_axis_off()
    if title:
        ax.set_title(title, fontsize=9)
    _save(fig, path)
