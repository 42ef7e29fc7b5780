"""Report figures written next to the CSV outputs of the CLI."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "legend.framealpha": 0.6,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}

# clear / semi-transparent / opaque
MASK_CMAP = ListedColormap(["#08306b", "#6baed6", "#40e0d0"])

# fixed metadata keeps PNG bytes identical across runs
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def figure_size(scale=1.0, ratio=0.62):
    width = 6.0 * scale
    return width, width * ratio


def plot_noise_curves(tables: dict, path):
    """MAE against test noise level, one line per model."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figure_size(0.8))
        for name, table in tables.items():
            x = 100 * np.asarray(table.noise_levels)
            ax.plot(x, table.maes, marker="o", ms=3, label=f"{name} (avg {table.average:.2f})")
        ax.set_xlabel("test noise [% of mean feature magnitude]")
        ax.set_ylabel("MAE [COT]")
        ax.legend(loc="upper left")
        fig.tight_layout()
        _save(fig, path)


def plot_history(histories: list, path):
    """Training loss and validation MAE for every ensemble member."""
    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_val) = plt.subplots(1, 2, figsize=figure_size(1.0, 0.4))
        for k, rows in enumerate(histories):
            steps = [r["step"] for r in rows if r["step"] > 0]
            ax_loss.plot(steps, [r["train_loss"] for r in rows if r["step"] > 0], lw=1, label=f"member {k}")
            if rows and "val_mae" in rows[0]:
                ax_val.plot([r["step"] for r in rows], [r["val_mae"] for r in rows], lw=1)
        ax_loss.set_xlabel("update")
        ax_loss.set_ylabel("train MSE")
        ax_loss.set_yscale("log")
        ax_val.set_xlabel("update")
        ax_val.set_ylabel("validation MAE")
        if len(histories) <= 10:
            ax_loss.legend()
        fig.tight_layout()
        _save(fig, path)


def rgb_preview(image, band_names):
    """Contrast-stretched true-colour composite from B04/B03/B02."""
    idx = [band_names.index(b) for b in ("b04", "b03", "b02")]
    rgb = np.asarray(image, dtype=np.float64)[:, :, idx]
    hi = np.percentile(rgb, 99) if rgb.size else 1.0
    return np.clip(rgb / max(hi, 1e-6), 0.0, 1.0)


def plot_inference(image, band_names, cot, mask, path, verdict=None):
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=figure_size(1.0, 0.36))
        axes[0].imshow(rgb_preview(image, band_names))
        axes[0].set_title("RGB")
        im = axes[1].imshow(cot, cmap="viridis")
        axes[1].set_title("COT estimate")
        fig.colorbar(im, ax=axes[1], fraction=0.046, pad=0.04)
        axes[2].imshow(mask, cmap=MASK_CMAP, vmin=0, vmax=2, interpolation="nearest")
        axes[2].set_title(f"mask ({verdict})" if verdict else "mask")
        for ax in axes:
            ax.set_xticks([])
            ax.set_yticks([])
        fig.tight_layout()
        _save(fig, path)


def plot_threshold_search(grid, scores, best, path, mode="three_class"):
    """Heat map of macro F1 over (tau_semi, tau_opaque), or a curve in binary mode."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figure_size(0.7, 0.8 if mode != "binary" else 0.6))
        if mode == "binary":
            ax.plot(grid, scores, lw=1)
            ax.axvline(best.tau_binary, color="k", ls=":", lw=1)
            ax.set_xlabel("COT threshold")
            ax.set_ylabel("macro F1")
        else:
            im = ax.imshow(scores.T, origin="lower", aspect="auto", cmap="magma",
                           extent=(grid[0], grid[-1], grid[0], grid[-1]))
            ax.plot(best.tau_semi, best.tau_opaque, "c+", ms=8)
            ax.set_xlabel("tau_semi")
            ax.set_ylabel("tau_opaque")
            fig.colorbar(im, ax=ax, label="macro F1")
        fig.tight_layout()
        _save(fig, path)
