"""Rendering of the simulation-vs-model divergence report.

Writes the per-bin comparison as CSV and renders overview figures to PNG
next to the delimited output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .montecarlo import DivergenceReport


def report_summary(report: DivergenceReport) -> dict:
    """JSON-ready summary of a divergence report."""
    return {
        "degenerate": report.degenerate,
        "message": report.message,
        "reduced_chi2": report.reduced_chi2,
        "dof": report.dof,
        "n_bins_used": report.n_bins_used,
        "per_peak_reduced_chi2": report.per_peak_chi2,
        "peak_area_z_scores": report.peak_area_z,
        "total_observed": report.total_observed,
        "total_expected": report.total_expected,
    }


def write_report_bins(report: DivergenceReport, path) -> None:
    """Per-bin CSV: tau, observed, expected, normalized residual."""
    if report.histogram is None or report.expected is None:
        raise ValueError("report carries no histograms (degenerate input?)")
    obs = report.histogram
    exp = report.expected
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("tau_ns,observed,expected,residual\n")
        for tau, o, e in zip(obs.bin_centers, obs.counts, exp.counts):
            residual = (o - e) / np.sqrt(e) if e > 0 else 0.0
            fh.write(f"{tau:.17g},{o:.17g},{e:.17g},{residual:.6g}\n")


def render_report_figure(report: DivergenceReport, path) -> None:
    """Two-panel overview: histogram overlay and normalized residuals."""
    if report.histogram is None or report.expected is None:
        raise ValueError("report carries no histograms (degenerate input?)")
    obs = report.histogram
    exp = report.expected
    centers = obs.bin_centers
    residual = np.zeros_like(obs.counts)
    positive = exp.counts > 0
    residual[positive] = (obs.counts[positive] - exp.counts[positive]) / np.sqrt(
        exp.counts[positive]
    )

    fig, (ax_top, ax_bottom) = plt.subplots(
        2, 1, figsize=(9.0, 6.0), sharex=True, height_ratios=[2.5, 1.0]
    )
    ax_top.plot(centers, obs.counts, drawstyle="steps-mid", lw=0.8, label="simulated")
    ax_top.plot(centers, exp.counts, lw=1.2, alpha=0.85, label="analytic model")
    ax_top.set_ylabel("coincidences per bin")
    chi2 = "n/a" if report.reduced_chi2 is None else f"{report.reduced_chi2:.3f}"
    ax_top.set_title(f"simulation vs analytic model (reduced chi2 = {chi2})")
    ax_top.legend(loc="upper right", frameon=False)

    ax_bottom.axhline(0.0, color="k", lw=0.6)
    ax_bottom.plot(centers, residual, lw=0.6)
    ax_bottom.set_ylabel(r"(O$-$E)/$\sqrt{E}$")
    ax_bottom.set_xlabel("detection time difference (ns)")

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
