"""Static SVG plots: 2D level-set overlays and 1D curves."""

from __future__ import annotations

from logging import getLogger
from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402
from matplotlib.patches import Circle  # noqa: E402

if TYPE_CHECKING:
    from typing import List, Optional, Sequence, Tuple, Union

    from numpy.typing import NDArray

    from phasewiz.models.field import Ball
    from phasewiz.models.level_set import Competitor, LevelSet

LOGGER = getLogger("phasewiz.harness")


def _segments(surface: LevelSet) -> NDArray:
    return surface.vertices[surface.facets]


def plot_overlay(
    surface: LevelSet,
    path: Union[str, Path],
    ball: Optional[Ball] = None,
    competitors: Sequence[Competitor] = (),
    title: str = "",
) -> Tuple[int, Path]:
    """Draws a 2D level set, the modified parts of its competitors and the ball."""
    out = Path(path).resolve()
    if surface.dim != 2:
        LOGGER.info(
            "Skipping the overlay for the %sD level set %s", surface.dim, surface.name
        )
        return 1, out
    out.parent.mkdir(parents=True, exist_ok=True)
    with plt.style.context("bmh"):
        fig, axis = plt.subplots(figsize=(6, 6), dpi=100)
        axis.grid(color="darkgrey", alpha=0.65, linestyle="-")
        axis.set_facecolor("w")
        for competitor in competitors:
            if competitor.is_identity:
                continue
            moved = _segments(competitor.surface)[competitor.modified]
            axis.add_collection(
                LineCollection(moved, colors="tab:orange", linewidths=0.6, alpha=0.4)
            )
        axis.add_collection(
            LineCollection(_segments(surface), colors="tab:blue", linewidths=1.2)
        )
        if ball is not None:
            axis.add_patch(
                Circle(ball.center, ball.radius, fill=False, linestyle="--", color="k")
            )
            axis.add_patch(
                Circle(
                    ball.center,
                    0.9 * ball.radius,
                    fill=False,
                    linestyle=":",
                    color="grey",
                )
            )
        axis.autoscale()
        axis.set_aspect("equal")
        axis.set_xlabel("x")
        axis.set_ylabel("y")
        if title:
            axis.set_title(title)
        fig.savefig(str(out), format="svg")
        plt.close(fig)
    LOGGER.info("Saved the overlay to %s", out)
    if out.is_file():
        return 0, out
    else:
        return 1, out


def plot_curves(
    curves: List[Tuple[str, NDArray, NDArray]],
    path: Union[str, Path],
    xlabel: str = "t",
    title: str = "",
) -> Tuple[int, Path]:
    """Plots (label, x, y) curves on one axis."""
    out = Path(path).resolve()
    out.parent.mkdir(parents=True, exist_ok=True)
    with plt.style.context("bmh"):
        fig, axis = plt.subplots(figsize=(7.5, 4), dpi=100)
        axis.grid(color="darkgrey", alpha=0.65, linestyle="-")
        axis.set_facecolor("w")
        for label, x, y in curves:
            axis.plot(x, y, label=label)
        axis.set_xlabel(xlabel)
        if title:
            axis.set_title(title)
        axis.legend(loc="best")
        axis.margins(0)
        fig.savefig(str(out), format="svg")
        plt.close(fig)
    LOGGER.info("Saved %s curves to %s", len(curves), out)
    if out.is_file():
        return 0, out
    else:
        return 1, out
