"""Report figures.  Rendered off-screen with the Agg backend."""
from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}
# fixed metadata so repeated runs write identical files
PNG_METADATA = {"Software": None}


def _save(fig, path):
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)


def _loss_axis(ax, loss_trace):
    if loss_trace:
        ax.semilogy(np.arange(1, len(loss_trace) + 1), loss_trace, "k.-", lw=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("relaxed loss")


def plot_decomposition_1d(path, x, dec, gt_mask=None):
    """Signal with both components, the mask, and the loss trace."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(6.4, 6.0), constrained_layout=True)
        t = np.arange(len(x))
        ax = axes[0]
        ax.plot(t, x, color="0.6", lw=2, label="signal")
        ax.plot(t, (1 - dec.w_bin) * dec.comp1 + dec.w_bin * dec.comp2, "k", lw=0.8, label="reconstruction")
        ax.set_ylabel("value")
        ax.legend(loc="upper right", frameon=False)
        ax = axes[1]
        ax.step(t, dec.w_cont, where="mid", color="tab:blue", lw=0.8, label="continuous")
        ax.step(t, dec.w_bin, where="mid", color="k", lw=1.2, label="binary")
        if gt_mask is not None:
            ax.step(t, np.asarray(gt_mask) * 1.05, where="mid", color="tab:red", lw=0.8, ls="--", label="ground truth")
        ax.set_ylim(-0.1, 1.2)
        ax.set_ylabel("mask")
        ax.set_xlabel("sample")
        ax.legend(loc="upper right", frameon=False, ncol=3)
        _loss_axis(axes[2], dec.loss_trace)
        _save(fig, path)


def plot_image_mask(path, image, mask, per_block_traces=()):
    """Input image, foreground mask, and every block's loss trace."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(9.6, 3.4), constrained_layout=True)
        axes[0].imshow(image, cmap="gray", vmin=0, vmax=255, interpolation="nearest")
        axes[0].set_title("input")
        axes[1].imshow(mask, cmap="gray", vmin=0, vmax=1, interpolation="nearest")
        axes[1].set_title("foreground mask")
        for ax in axes[:2]:
            ax.set_xticks([])
            ax.set_yticks([])
        for trace in per_block_traces:
            if trace:
                axes[2].semilogy(np.arange(1, len(trace) + 1), trace, color="k", alpha=0.4, lw=0.8)
        axes[2].set_xlabel("iteration")
        axes[2].set_ylabel("relaxed loss")
        axes[2].set_title("per-block loss")
        _save(fig, path)


def plot_motion(path, flow, result, residual):
    """Flow magnitude, outlier mask, and the error of the fitted global motion."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(9.6, 3.4), constrained_layout=True)
        im = axes[0].imshow(np.hypot(flow.u, flow.v), cmap="viridis", interpolation="nearest")
        fig.colorbar(im, ax=axes[0], shrink=0.8, label="px")
        axes[0].set_title("flow magnitude")
        axes[1].imshow(result.mask, cmap="gray", vmin=0, vmax=1, interpolation="nearest")
        axes[1].set_title("outlier mask")
        im = axes[2].imshow(residual, cmap="magma", interpolation="nearest")
        fig.colorbar(im, ax=axes[2], shrink=0.8, label="px")
        axes[2].set_title("global-motion error")
        for ax in axes:
            ax.set_xticks([])
            ax.set_yticks([])
        _save(fig, path)
