"""
Moreau-W2 - Plotting
Description: Single-panel SVG line charts rendered from sweep tables
"""

import logging
from pathlib import Path
from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from moreau_w2.utils.errors import ArtifactIOError  # noqa: E402

logger = logging.getLogger(__name__)

# fixed ids so reruns produce the same file
plt.rcParams["svg.hashsalt"] = "moreau-w2"


def line_chart_svg(
        path: Path,
        x: Sequence[float],
        series: Dict[str, Sequence[float]],
        xlabel: str,
        ylabel: str,
        title: str = "",
        loglog: bool = False,
):
    """
    Draw one or more series against a shared x column and save as SVG.

    Args:
        path: Output .svg path
        x: Abscissa values
        series: Label -> ordinate values (same length as x)
        xlabel: X axis label
        ylabel: Y axis label
        title: Figure title
        loglog: Logarithmic axes; nonpositive points are dropped
    """
    x = np.asarray(x, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, values in series.items():
        y = np.asarray(values, dtype=float)
        mask = np.isfinite(x) & np.isfinite(y)
        if loglog:
            mask &= (x > 0) & (y > 0)
        order = np.argsort(x[mask])
        ax.plot(x[mask][order], y[mask][order], marker="o", label=label)
    if loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise ArtifactIOError(f"Cannot write {path}: {e}", path=str(path))
    finally:
        plt.close(fig)
    logger.info(f"SVG written: {path}")
