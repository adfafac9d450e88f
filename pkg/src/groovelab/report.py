"""Report rendering: delimited text plus matplotlib figures, written side by side.

Every report writes a CSV and a PNG with the same stem so the numbers are
greppable and the picture is glanceable.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .midi import DrumClass
from .vae import EpochLosses, history_to_csv


def write_loss_report(history: list[EpochLosses], out_dir: str | Path) -> tuple[Path, Path]:
    """loss_history.csv + loss_curves.png (train/val totals and components)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "loss_history.csv"
    csv_path.write_text(history_to_csv(history), encoding="utf-8")

    epochs = [e.epoch for e in history]
    fig, (ax_total, ax_comp) = plt.subplots(1, 2, figsize=(10, 4))
    ax_total.plot(epochs, [e.train.total for e in history], label="train")
    ax_total.plot(epochs, [e.val.total for e in history], label="validation")
    ax_total.set_xlabel("epoch")
    ax_total.set_ylabel("total loss")
    ax_total.legend()
    ax_total.set_title("Total loss")

    for name, getter in (
        ("onset BCE", lambda e: e.train.onset_bce),
        ("velocity MSE", lambda e: e.train.velocity_mse),
        ("offset MSE", lambda e: e.train.offset_mse),
        ("KL", lambda e: e.train.kl),
    ):
        ax_comp.plot(epochs, [getter(e) for e in history], label=name)
    ax_comp.set_xlabel("epoch")
    ax_comp.set_yscale("log")
    ax_comp.legend(fontsize=8)
    ax_comp.set_title("Train components")

    fig.tight_layout()
    png_path = out / "loss_curves.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return csv_path, png_path


def write_sweep_report(
    rows: list[dict], grid_shape: tuple[int, int], out_dir: str | Path
) -> tuple[Path, Path]:
    """sweep_summary.csv + sweep_density.png over a latent grid.

    Each row: {"file", "row", "col", "z1", "z2", "onsets"}.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "sweep_summary.csv"
    lines = ["file,row,col,z1,z2,onsets"]
    for r in rows:
        lines.append(f"{r['file']},{r['row']},{r['col']},{r['z1']:.6g},{r['z2']:.6g},{r['onsets']}")
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    density = np.zeros(grid_shape)
    for r in rows:
        density[r["row"], r["col"]] = r["onsets"]
    fig, ax = plt.subplots(figsize=(5, 4.2))
    im = ax.imshow(density, origin="lower", cmap="viridis")
    ax.set_xlabel("latent grid column (z1)")
    ax.set_ylabel("latent grid row (z2)")
    ax.set_title("Onset count across the latent grid")
    fig.colorbar(im, ax=ax, label="onsets per pattern")
    fig.tight_layout()
    png_path = out / "sweep_density.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return csv_path, png_path


def write_histogram_report(
    counts: dict[DrumClass, int], pattern_count: int, out_dir: str | Path
) -> tuple[Path, Path]:
    """onset_histogram.csv + onset_histogram.png for an inspected file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "onset_histogram.csv"
    lines = ["drum_class,onsets"]
    for drum in DrumClass:
        lines.append(f"{drum.label},{counts.get(drum, 0)}")
    lines.append(f"patterns,{pattern_count}")
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    fig, ax = plt.subplots(figsize=(6, 3.6))
    labels = [d.label for d in DrumClass]
    values = [counts.get(d, 0) for d in DrumClass]
    ax.bar(labels, values)
    ax.set_ylabel("onsets")
    ax.set_title(f"Drum onsets by class ({pattern_count} patterns)")
    ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    png_path = out / "onset_histogram.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return csv_path, png_path
