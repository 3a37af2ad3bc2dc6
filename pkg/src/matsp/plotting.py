"""Box-plot figures rendered from report rows (the same rows written to trials.csv)."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Iterable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

ALGORITHM_ORDER = ("ea", "cmdea", "dmdea")
LABELS = {"ea": "EA", "cmdea": "cMDEA", "dmdea": "dMDEA"}
METRIC_TITLES = {
    "total_distance": "Total distance travelled (m)",
    "straight_line_deviation": "Deviation from straight line distance (m)",
}

RC = {
    "axes.spines.right": False,
    "axes.spines.top": False,
    "figure.dpi": 100,
    "font.size": 10,
}


def _label(row: dict) -> str:
    alg = row["algorithm"]
    if alg == "dmdea":
        return f"dMDEA {row['comm_radius']}"
    return LABELS.get(alg, alg)


def _sort_key(label: str):
    for i, alg in enumerate(ALGORITHM_ORDER):
        if label.startswith(LABELS[alg]):
            radius = label[len(LABELS[alg]):].strip()
            try:
                r = float(radius) if radius else -1.0
            except ValueError:
                r = float("inf")
            return (i, r)
    return (len(ALGORITHM_ORDER), 0.0)


def figure_name(metric: str, n_agents: int, n_tasks: int, suffix: str = "") -> str:
    return f"{metric}_nA{n_agents}_nT{n_tasks}{suffix}.png"


def boxplot_by_size(rows: Iterable[dict], metric: str, out_dir: str | Path) -> list[Path]:
    """One figure per (agents, tasks) size with a box per algorithm setting."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups: dict[tuple[int, int], dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        size = (int(row["n_agents"]), int(row["n_tasks"]))
        groups[size][_label(row)].append(float(row[metric]))
    written = []
    for (m, n), series in sorted(groups.items()):
        labels = sorted(series, key=_sort_key)
        with plt.rc_context(RC):
            fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(labels) + 1.5), 3.5))
            ax.boxplot([series[k] for k in labels], tick_labels=labels)
            ax.set_ylabel(METRIC_TITLES.get(metric, metric))
            ax.set_title(f"{m} agents, {n} tasks")
            if len(labels) > 4:
                ax.tick_params(axis="x", labelrotation=45)
            fig.tight_layout()
            path = out_dir / figure_name(metric, m, n)
            fig.savefig(path)
            plt.close(fig)
        written.append(path)
    return written


def render_report(rows: list[dict], out_dir: str | Path) -> list[Path]:
    paths = []
    for metric in METRIC_TITLES:
        paths += boxplot_by_size(rows, metric, out_dir)
    return paths
