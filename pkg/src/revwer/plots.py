"""Static SVG figure emission for fit results."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def fit_scatter_plot(path, a, wer, model=None, param_name="C50 [dB]",
                     bin_width=1.0):
    """Bubble scatter of WER vs one acoustic parameter with a fitted curve.

    Samples are binned (1 dB bins by default); bubble area tracks the
    per-bin sample count. Written as SVG.
    """
    a = np.asarray(a, dtype=np.float64)
    wer = np.asarray(wer, dtype=np.float64)
    keep = np.isfinite(a) & np.isfinite(wer)
    a, wer = a[keep], wer[keep]

    edges = np.arange(np.floor(a.min()), np.ceil(a.max()) + bin_width,
                      bin_width)
    centers, means, counts = [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (a >= lo) & (a < hi)
        if mask.any():
            centers.append((lo + hi) / 2.0)
            means.append(wer[mask].mean())
            counts.append(int(mask.sum()))

    fig, ax = plt.subplots(figsize=(5, 3.5))
    sizes = 10.0 + 200.0 * np.asarray(counts) / max(counts)
    ax.scatter(centers, means, s=sizes, alpha=0.6, label="binned samples")
    if model is not None:
        grid = np.linspace(a.min(), a.max(), 200)
        ax.plot(grid, model(grid), "r-", label="fit")
    ax.set_xlabel(param_name)
    ax.set_ylabel("WER")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
