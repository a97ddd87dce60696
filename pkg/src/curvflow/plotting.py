"""Static SVG plots of the per-step metrics (convergence, conformality,
sphericity). Kept separate so the core never imports matplotlib."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "curvflow"  # reproducible element ids

import matplotlib.pyplot as plt  # noqa: E402

PANELS = (
    ("convergence", "convergence_delta", "change per step", True),
    ("conformality", "qc_error", "quasi-conformal error", False),
    ("sphericity", "sphericity_variance", "radius variance", False),
)


def plot_metrics(series: dict, out_dir, stem: str = "") -> list:
    """Write the three metric panels as SVG files.

    ``series`` maps a legend label to a dict of column name -> list of
    floats (parsed metrics CSV). Returns the written paths.
    """
    written = []
    prefix = f"{stem}_" if stem else ""
    for panel, column, ylabel, logy in PANELS:
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for label, cols in series.items():
            ax.plot(cols["step"], cols[column], label=label, linewidth=1.2)
        ax.set_xlabel("step")
        ax.set_ylabel(ylabel)
        if logy:
            ax.set_yscale("log")
        ax.set_title(panel)
        if len(series) > 1:
            ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"{prefix}{panel}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
