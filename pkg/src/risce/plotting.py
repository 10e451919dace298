"""Render sweep results as NMSE-versus-SNR figures next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import SweepResult
from .records import format_variant_value

FIGURE_METRICS = {
    "nmse_channel": "Channel NMSE",
    "nmse_gain": "Gain NMSE",
    "nmse_angle": "Angle NMSE",
    "nmse_delay": "Delay NMSE",
}


def _series(result: SweepResult, metric_key: str):
    """Collect (snr, mean, stderr) triples per (variant value) for one metric."""
    by_variant: dict = {}
    for rec in result.records:
        if metric_key not in rec.metrics:
            continue
        stat = rec.metrics[metric_key]
        by_variant.setdefault(rec.variant_value, []).append(
            (rec.snr_db, stat.mean, stat.stderr)
        )
    return by_variant


def render_sweep_figures(result: SweepResult, out_dir: Path, stem: str) -> list[Path]:
    """Write one semilog NMSE/SNR figure per parameter family; returns paths."""
    out_dir = Path(out_dir)
    scenario = result.scenario
    written = []
    for family, ylabel in FIGURE_METRICS.items():
        fig, ax = plt.subplots(figsize=(6.0, 4.2))
        plotted = False
        for estimator in scenario.estimators:
            for variant, pts in sorted(
                _series(result, f"{estimator}_{family}").items(), key=str
            ):
                pts = sorted(pts)
                label = estimator.upper()
                if scenario.variant_field:
                    label += f", {scenario.variant_field}={format_variant_value(variant)}"
                ax.errorbar(
                    [p[0] for p in pts],
                    [p[1] for p in pts],
                    yerr=[p[2] for p in pts],
                    marker="o",
                    capsize=2,
                    label=label,
                )
                plotted = True
        if family == "nmse_channel":
            for variant, pts in sorted(_series(result, "crlb_channel_bound").items(), key=str):
                pts = sorted(pts)
                label = "CRLB"
                if scenario.variant_field:
                    label += f", {scenario.variant_field}={format_variant_value(variant)}"
                ax.plot(
                    [p[0] for p in pts],
                    [p[1] for p in pts],
                    linestyle="--",
                    color="k",
                    label=label,
                )
                plotted = True
        if not plotted:
            plt.close(fig)
            continue
        ax.set_yscale("log")
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel(ylabel)
        ax.set_title(scenario.name)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"{stem}_{family}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
