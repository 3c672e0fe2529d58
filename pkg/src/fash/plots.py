"""Matplotlib renderings of the report tables, written next to the CSVs."""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

PIPELINE_STYLE = {"mle": ("black", "maximum likelihood"), "bf_adjusted": ("tab:blue", "BF adjusted")}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def figure_pi0_sweep(rows: list[dict], path) -> Path:
    """Estimated vs true null proportion, one panel per test."""
    tests = sorted({r["test"] for r in rows})
    fig, axes = plt.subplots(1, len(tests), figsize=(5.2 * len(tests), 4.2), squeeze=False)
    for ax, test in zip(axes[0], tests):
        sub = [r for r in rows if r["test"] == test]
        truths = sorted({r["pi0_true"] for r in sub})
        for pipeline, (color, label) in PIPELINE_STYLE.items():
            xs, means, los, his = [], [], [], []
            for truth in truths:
                vals = np.array([r["pi0_hat"] for r in sub if r["pipeline"] == pipeline and r["pi0_true"] == truth])
                if vals.size == 0:
                    continue
                xs.append(truth)
                means.append(vals.mean())
                los.append(vals.min())
                his.append(vals.max())
            ax.fill_between(xs, los, his, color=color, alpha=0.15)
            ax.plot(xs, means, "o-", color=color, label=label, markersize=4)
        lims = [min(truths) - 0.05, 1.02]
        ax.plot(lims, lims, "r--", linewidth=1, label="truth")
        ax.set_xlabel("true null proportion")
        ax.set_ylabel("estimated null proportion")
        ax.set_title(test)
        ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    return _save(fig, path)


def figure_calibration(rows: list[dict], path) -> Path:
    """Empirical FDR and power against the nominal level, per test."""
    tests = sorted({r["test"] for r in rows})
    fig, axes = plt.subplots(2, len(tests), figsize=(5.2 * len(tests), 7.6), squeeze=False)
    for col, test in enumerate(tests):
        sub = [r for r in rows if r["test"] == test]
        alphas = sorted({r["alpha"] for r in sub})
        for metric, ax in (("fdr", axes[0][col]), ("power", axes[1][col])):
            for pipeline, (color, label) in PIPELINE_STYLE.items():
                ys = [
                    np.mean([r[metric] for r in sub if r["pipeline"] == pipeline and r["alpha"] == a])
                    for a in alphas
                ]
                ax.plot(alphas, ys, "o-", color=color, label=label, markersize=4)
            if metric == "fdr":
                ax.plot(alphas, alphas, "k--", linewidth=1)
            ax.set_xlabel("nominal level")
            ax.set_ylabel(f"empirical {metric.upper() if metric == 'fdr' else metric}")
            ax.set_title(test)
            ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    return _save(fig, path)


def figure_smooth(unit, result, path) -> Path:
    """Observed estimates with error bars plus the posterior band."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.fill_between(result.grid, result.lower, result.upper, color="tab:red", alpha=0.2,
                    label=f"{result.level:.0%} credible band")
    ax.plot(result.grid, result.mean, color="tab:red", label="posterior mean")
    ax.errorbar(unit.times, unit.beta_hat, yerr=2 * unit.se, fmt="ko", markersize=4,
                capsize=2, linewidth=1, label="estimates ± 2 se")
    ax.axhline(0.0, color="gray", linewidth=0.7)
    ax.set_xlabel("t")
    ax.set_ylabel("effect")
    ax.set_title(unit.id)
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    return _save(fig, path)


def figure_mu_curve(result, path) -> Path:
    """Mean Bayes factor below each cutoff and the implied null fraction.

    Strongly non-null units produce astronomically large cutoffs; the
    plot window stays near the decision region (mean BF around one).
    """
    curve = result.mu_curve
    keep = np.isfinite(curve[:, 0]) & np.isfinite(curve[:, 1])
    keep &= (curve[:, 0] > 1e-12) & (curve[:, 0] < 1e12)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(curve[keep, 0], np.minimum(curve[keep, 1], 1e12), "b.-", markersize=3,
            label="mean BF below cutoff")
    ax.axhline(1.0, color="gray", linewidth=0.7)
    if np.isfinite(result.c_star) and 1e-12 < result.c_star < 1e12:
        ax.axvline(result.c_star, color="tab:red", linewidth=1, linestyle="--",
                   label=f"selected cutoff (null fraction {result.pi0_adjusted:.3f})")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("cutoff")
    ax.set_ylabel("mean Bayes factor")
    twin = ax.twinx()
    twin.plot(curve[keep, 0], curve[keep, 2], "g:", label="null fraction")
    twin.set_ylabel("null fraction below cutoff")
    ax.legend(frameon=False, fontsize=9, loc="upper left")
    fig.tight_layout()
    return _save(fig, path)
