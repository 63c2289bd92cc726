"""Artifact emission: delimited reports plus rendered figures.

Every report path writes a CSV (header row, stable column order, floats at
17 significant digits) and a PNG figure next to it. All writes go through
a temp-file-plus-rename so a crash never leaves a half-written artifact at
its final path.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_FIG_DPI = 110


def fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def atomic_write_text(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path: str, data: bytes):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, header: list[str], rows: list[list]):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_value(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def _save_fig(fig, path: str):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=_FIG_DPI)
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def save_reward_curve_png(path: str, epochs, means, stds, title: str):
    epochs = np.asarray(epochs, dtype=float)
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, means, lw=1.0, color="tab:blue", label="mean episode reward")
    ax.fill_between(epochs, means - stds, means + stds, alpha=0.25, color="tab:blue", lw=0)
    if len(means) >= 20:
        window = min(100, len(means))
        smooth = np.convolve(means, np.ones(window) / window, mode="valid")
        ax.plot(epochs[window - 1 :], smooth, lw=1.8, color="tab:red", label=f"{window}-epoch mean")
    ax.set_xlabel("epoch")
    ax.set_ylabel("episode reward")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _save_fig(fig, path)


def save_eval_histogram_png(path: str, agent_means, title: str):
    agent_means = np.asarray(agent_means, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(agent_means, bins=min(30, max(5, len(agent_means) // 4)), color="tab:green", alpha=0.8)
    ax.axvline(agent_means.mean(), color="tab:red", lw=1.5, label=f"mean {agent_means.mean():.1f}")
    ax.set_xlabel("per-agent mean reward")
    ax.set_ylabel("agents")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save_fig(fig, path)


def save_dataset_view_png(path: str, states, labels_raw, labels_soft, title: str):
    states = np.asarray(states, dtype=float)
    soft = np.asarray(labels_soft, dtype=float)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3 + 0.3 * len(states)))
    im0 = axes[0].imshow(states, aspect="auto", cmap="coolwarm")
    axes[0].set_title("synthetic states")
    axes[0].set_xlabel("state component")
    axes[0].set_ylabel("instance")
    fig.colorbar(im0, ax=axes[0], fraction=0.046)
    im1 = axes[1].imshow(soft, aspect="auto", cmap="viridis", vmin=0.0, vmax=1.0)
    axes[1].set_title("softmaxed soft labels")
    axes[1].set_xlabel("action")
    fig.colorbar(im1, ax=axes[1], fraction=0.046)
    fig.suptitle(title)
    fig.tight_layout()
    _save_fig(fig, path)


def save_kmin_sweep_png(path: str, ks, means, stds, predicted_kmin: int, title: str):
    ks = np.asarray(ks, dtype=int)
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(ks, means, yerr=stds, fmt="o-", color="tab:blue", capsize=3)
    ax.axvline(predicted_kmin, color="tab:red", ls="--", lw=1.5, label=f"predicted minimum k = {predicted_kmin}")
    ax.set_xlabel("synthetic instances k")
    ax.set_ylabel("k-shot mean reward")
    ax.set_xticks(ks)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save_fig(fig, path)


def save_cost_report_png(path: str, labels, per_model_seconds, title: str):
    fig, ax = plt.subplots(figsize=(6, 4))
    y = np.arange(len(labels))
    ax.barh(y, per_model_seconds, color="tab:purple", alpha=0.8)
    ax.set_yticks(y, labels=labels, fontsize=8)
    ax.set_xlabel("seconds per trained model")
    ax.set_xscale("log")
    ax.set_title(title)
    fig.tight_layout()
    _save_fig(fig, path)
