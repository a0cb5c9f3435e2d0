"""Small output helpers: atomic writes and SVG plots."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

__all__ = ["atomic_write_text", "svg_heatmap", "svg_lines"]


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _figure_to_svg(fig, path) -> Path:
    import io

    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    import matplotlib.pyplot as plt

    plt.close(fig)
    return atomic_write_text(path, buf.getvalue())


def svg_heatmap(path, x, y, values, *, title="", xlabel="", ylabel="", cbar=""):
    """Heatmap of ``values`` on the scattered or gridded points ``(x, y)``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "tangent-harmonic"
    fig, ax = plt.subplots(figsize=(4.5, 6.0))
    x, y, v = (np.asarray(a, float).ravel() for a in (x, y, values))
    im = ax.tripcolor(x, y, v, shading="gouraud", cmap="viridis")
    ax.set_aspect("equal")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.colorbar(im, ax=ax, label=cbar)
    fig.tight_layout()
    return _figure_to_svg(fig, path)


def svg_lines(path, series, *, title="", xlabel="", ylabel="", logy=False):
    """Line plot; ``series`` maps a label to ``(x, y)`` arrays."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "tangent-harmonic"
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, (x, y) in series.items():
        ax.plot(x, y, marker="o", ms=3, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    return _figure_to_svg(fig, path)
