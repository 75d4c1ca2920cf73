"""SVG charts for benchmark reports and episode traces."""

import logging
from pathlib import Path
from typing import List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from app.core.errors import DatalogError  # noqa: E402
from app.models.records import ComparisonTable, EpisodeRecord  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed hash salt and no date keep the SVG output byte-stable.
matplotlib.rcParams["svg.hashsalt"] = "compliant-adaptor"
_SVG_METADATA = {"Date": None}

BAR_WIDTH = 0.38
COLORS = {"baseline": "#8c8c8c", "adaptor": "#2b7bb9"}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata=_SVG_METADATA, bbox_inches="tight")
    except OSError as e:
        raise DatalogError(f"Failed to write chart {path}: {e}") from e
    finally:
        plt.close(fig)
    logger.info(f"Wrote chart {path}")
    return path


def render_success_chart(table: ComparisonTable, path: Path) -> Path:
    """Per-scenario success rate bars, baseline next to adaptor."""
    names = [row.scenario for row in table.rows] + [table.aggregate.scenario]
    rows = table.rows + [table.aggregate]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(1.6 * len(names) + 2.0, 4.0))
    ax.bar(x - BAR_WIDTH / 2, [r.baseline_success_rate for r in rows], BAR_WIDTH,
           label="baseline", color=COLORS["baseline"])
    ax.bar(x + BAR_WIDTH / 2, [r.adaptor_success_rate for r in rows], BAR_WIDTH,
           label="adaptor", color=COLORS["adaptor"])
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=15)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("success rate")
    ax.legend(loc="upper left")
    ax.grid(axis="y", alpha=0.3)
    return _save(fig, path)


def render_episode_trace(
    records: List[EpisodeRecord], path: Path, force_limit: Optional[float] = 30.0
) -> Path:
    """Measured force components and stiffness per axis over time."""
    if not records:
        raise DatalogError(f"No records to plot for {path}")
    t = np.array([r.t for r in records])
    force = np.array([r.wrench[:3] for r in records])
    k = np.array([r.k for r in records])

    fig, (ax_f, ax_k) = plt.subplots(2, 1, sharex=True, figsize=(8.0, 5.5))
    for i, axis in enumerate("xyz"):
        ax_f.plot(t, force[:, i], label=f"F_{axis}", lw=1.2)
        ax_k.plot(t, k[:, i], label=f"k_{axis}", lw=1.2)
    if force_limit is not None:
        for sign in (1.0, -1.0):
            ax_f.axhline(sign * force_limit, color="red", ls="--", lw=0.8)
    first = records[0]
    ax_f.set_title(f"{first.task_id} ({first.mode.value})")
    ax_f.set_ylabel("force [N]")
    ax_k.set_ylabel("stiffness [N/m]")
    ax_k.set_xlabel("time [s]")
    ax_f.legend(loc="upper right", ncol=3)
    ax_k.legend(loc="upper right", ncol=3)
    ax_f.grid(alpha=0.3)
    ax_k.grid(alpha=0.3)
    return _save(fig, path)
