import io
import logging
import math
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams.update({"svg.fonttype": "none", "axes.unicode_minus": False})
import matplotlib.pyplot as plt  # noqa: E402

from ..training import RunReport  # noqa: E402

logger = logging.getLogger(__name__)


def render_nll_chart(reports: Sequence[RunReport], path: Optional[Union[str, Path]] = None,
                     title: str = "Validation NLL vs wallclock") -> str:
    """
    One line per report of valid NLL against training wallclock, returned as a
    self-contained SVG document and optionally written to `path`.
    """
    fig, ax = plt.subplots(figsize=(7, 4.2), constrained_layout=True)
    for report in reports:
        points = [(r.wallclock_s, r.valid_nll) for r in report.rows if math.isfinite(r.valid_nll)]
        if not points:
            continue
        xs, ys = zip(*points)
        line, = ax.plot(xs, ys, marker="o", markersize=3, label=report.name or "run")
        if report.diverged:
            ax.axvline(report.rows[-1].wallclock_s, color=line.get_color(), linestyle=":", alpha=0.6)
    ax.set_title(title)
    ax.set_xlabel("Training wallclock (s)")
    ax.set_ylabel("Validation NLL")
    ax.grid(True, alpha=0.3)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="best", fontsize=8)

    buffer = io.StringIO()
    fig.savefig(buffer, format="svg")
    plt.close(fig)
    svg = buffer.getvalue()
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(svg, encoding="utf-8")
        logger.info(f"NLL chart written to {path}")
    return svg
