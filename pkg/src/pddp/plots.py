"""Deterministic SVG line charts of logged run records (mean and 95% band over seeds)."""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METRICS = {
    "regret": "cumulative regret",
    "violation": "cumulative violation",
    "regret_plus_violation": "regret + violation",
    "mean_reward": "mean reward",
}
PANEL_METRICS = ("regret", "violation", "regret_plus_violation")
Z95 = 1.959963984540054


def read_records(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _group(records: list[dict], metric: str) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per setting: logged rounds and a (seeds x rounds) matrix of ``metric``."""
    by: dict[str, dict[str, list[tuple[int, float]]]] = defaultdict(lambda: defaultdict(list))
    order: list[str] = []
    for row in records:
        name = row["setting"]
        if name not in by:
            order.append(name)
        by[name][row["seed"]].append((int(row["t"]), float(row[metric])))
    out = {}
    for name in order:
        seeds = by[name]
        ts = [np.array([t for t, _ in seeds[s]]) for s in sorted(seeds, key=int)]
        t = ts[0]
        if any(x.shape != t.shape or np.any(x != t) for x in ts):
            raise ValueError(f"seeds of setting {name!r} are logged at different rounds")
        vals = np.array([[v for _, v in seeds[s]] for s in sorted(seeds, key=int)])
        out[name] = (t, vals)
    return out


def band(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean and normal-approximation 95% band across rows; zero width for one row."""
    mean = values.mean(axis=0)
    if values.shape[0] < 2:
        return mean, mean.copy(), mean.copy()
    half = Z95 * values.std(axis=0, ddof=1) / np.sqrt(values.shape[0])
    return mean, mean - half, mean + half


def _draw(ax, groups, title: str, x_min: float | None) -> None:
    for i, (name, (t, vals)) in enumerate(groups.items()):
        keep = t >= x_min if x_min is not None else slice(None)
        mean, lo, hi = band(vals)
        color = f"C{i % 10}"
        ax.plot(t[keep], mean[keep], color=color, lw=1.2, label=name)
        ax.fill_between(t[keep], lo[keep], hi[keep], color=color, alpha=0.2, lw=0)
    ax.set_title(title)
    ax.set_xlabel("episode")
    ax.grid(alpha=0.3)
    if len(groups) > 1 or next(iter(groups)) != "default":
        ax.legend(fontsize="small")


def _save(fig, path: Path) -> None:
    with plt.rc_context({"svg.hashsalt": "pddp", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def emit_plots(records: list[dict], out_dir: str | Path, experiment: str = "custom",
               x_min: float | None = None) -> list[Path]:
    """One SVG per metric, plus a three-panel overview of regret and violation."""
    if not records:
        raise ValueError("no records to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = list(PANEL_METRICS)
    if experiment == "exp6" or any("ucb" in r["setting"] for r in records):
        metrics.append("mean_reward")
    written = []
    grouped = {m: _group(records, m) for m in metrics}
    for m in metrics:
        fig, ax = plt.subplots(figsize=(6, 4))
        _draw(ax, grouped[m], METRICS[m], x_min)
        fig.tight_layout()
        path = out_dir / f"{m}.svg"
        _save(fig, path)
        written.append(path)
    fig, axes = plt.subplots(1, 3, figsize=(15, 4))
    for ax, m in zip(axes, PANEL_METRICS):
        _draw(ax, grouped[m], METRICS[m], x_min)
    fig.tight_layout()
    path = out_dir / "panels.svg"
    _save(fig, path)
    written.append(path)
    return written
