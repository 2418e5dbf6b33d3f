"""Figure rendering for sweep reports.

The CLI writes delimited sweep data; the helpers here render the matching
matplotlib figures next to it.  The Agg backend is forced so rendering works
headless.
"""

from __future__ import annotations

import itertools
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from . import design
from .criteria import CriterionSpec
from .model import ModelConfig

_LINE_STYLES = ("-", "--", ":", "-.")
_AXIS_LABELS = {
    "w_star": "optimal treatment weight",
    "efficiency_fixed": "efficiency of the fixed-model weight",
    "criterion_value": "criterion value",
}

REPORT_RATIOS = (2.0, 0.6, 0.001)
REPORT_CURVES = (
    ("a_prediction_one_treatment", "A", 2),
    ("a_prediction_two_treatments", "A", 3),
    ("d_prediction", "D", 2),
    ("e_prediction", "E", 2),
)


def plot_sweep(rows, path, value: str = "w_star", title: str | None = None):
    """Render one sweep panel, one black line per distinct variance ratio b."""
    if not rows:
        raise ValueError("nothing to plot")
    if value not in _AXIS_LABELS:
        raise ValueError(f"unknown sweep column {value!r}")
    grouped: dict[float, list] = {}
    for row in rows:
        grouped.setdefault(row.b, []).append(row)

    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    styles = itertools.cycle(_LINE_STYLES)
    for b, curve in sorted(grouped.items(), reverse=True):
        ax.plot(
            [r.rho for r in curve],
            [getattr(r, value) for r in curve],
            color="black",
            linestyle=next(styles),
            label=f"b = {b:g}",
        )
    ax.set_xlabel(r"$\rho$")
    ax.set_ylabel(_AXIS_LABELS[value])
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_report(outdir, N: int = 100, K: int = 10, sigma2: float = 1.0,
                  points: int = 60, threads: int = 1) -> list[Path]:
    """Write the standard prediction-design report: CSV plus figures per curve set.

    Each curve set sweeps the three reference variance ratios over the rho
    grid and yields one CSV, one weight figure, and one efficiency figure.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    grid = design.default_rho_grid(points)
    written: list[Path] = []
    for stem, criterion, J in REPORT_CURVES:
        spec = CriterionSpec(criterion, "prediction")
        template = ModelConfig(J=J, N=N, K=K, u=1.0, v=1.0, sigma2=sigma2)
        rows: list[design.SweepRow] = []
        for b in REPORT_RATIOS:
            rows.extend(design.sweep(template, spec, b, grid, threads=threads))
        csv_path = outdir / f"{stem}.csv"
        with open(csv_path, "w") as fh:
            design.write_sweep_csv(rows, fh)
        written.append(csv_path)
        for value, suffix in (("w_star", "weight"), ("efficiency_fixed", "efficiency")):
            written.append(plot_sweep(rows, outdir / f"{stem}_{suffix}.png", value=value))
    return written
