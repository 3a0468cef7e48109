"""Render run figures to files next to the CSV output."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .learning import EpisodeLog
from .task import STAGES, Stage


def save_learning_curve(log: EpisodeLog, path: str | Path, title: str) -> Path:
    """Per-step and cumulative reward for one stage's training budget."""
    steps = [s.step for s in log.steps]
    rewards = [s.reward for s in log.steps]
    cum = [s.cum_reward for s in log.steps]

    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(steps, rewards, color="tab:blue", linewidth=1.0, alpha=0.7, label="reward")
    ax.set_xlabel("training step")
    ax.set_ylabel("reward", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(steps, cum, color="tab:orange", linewidth=1.5, label="cumulative")
    ax2.set_ylabel("cumulative reward", color="tab:orange")
    ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_stage_curves(
    logs: Mapping[Stage, EpisodeLog], out_dir: str | Path
) -> dict[Stage, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for stage in STAGES:
        if stage not in logs:
            continue
        paths[stage] = save_learning_curve(
            logs[stage], out / f"curve_{stage.token}.png", f"{stage.token} stage"
        )
    return paths


def save_sweep_figure(rows: Sequence, path: str | Path) -> Path:
    """Mean total reward per variant with per-seed scatter and std bars."""
    data: dict[str, list[float]] = {}
    means: dict[str, float] = {}
    stds: dict[str, float] = {}
    for row in rows:
        if row.status == "ok" and row.total_reward is not None:
            data.setdefault(row.variant, []).append(row.total_reward)
        elif row.status == "summary" and row.total_reward is not None:
            if row.seed == "mean":
                means[row.variant] = row.total_reward
            elif row.seed == "std":
                stds[row.variant] = row.total_reward

    variants = [v for v in data]
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for i, name in enumerate(variants):
        ys = data[name]
        ax.scatter([i] * len(ys), ys, color="tab:gray", s=12, alpha=0.6, zorder=2)
        if name in means:
            ax.errorbar(
                [i], [means[name]], yerr=[stds.get(name, 0.0)],
                fmt="o", color="tab:blue", capsize=4, zorder=3,
            )
    ax.set_xticks(range(len(variants)))
    ax.set_xticklabels(variants, rotation=20, ha="right")
    ax.set_ylabel("total reward")
    ax.set_title("sweep comparison")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
