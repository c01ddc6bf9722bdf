"""Navigation evaluation metrics: TL, NE, OR, SR, SPL."""

from __future__ import annotations

import json

from .graphworld import Episode

COLUMNS = ("ne", "or_", "sr", "spl", "tl")
HEADERS = ("NE", "OR", "SR", "SPL", "TL")


def evaluate(trajectory, episode: Episode, success_radius: float = 1.0,
             distance: str = "geodesic") -> dict:
    """Score one trajectory; distance picks geodesic or straight-line NE."""
    if not trajectory or trajectory[0] != episode.start:
        raise ValueError("trajectory must start at the episode's start node")
    graph, goal = episode.graph, episode.goal
    if distance == "geodesic":
        dist = graph.distance
    elif distance == "euclidean":
        dist = graph.euclidean
    else:
        raise ValueError(f"unknown distance metric {distance!r}")

    tl = graph.path_length(trajectory)
    ne = dist(trajectory[-1], goal)
    sr = 1 if ne <= success_radius else 0
    orc = 1 if any(dist(n, goal) <= success_radius for n in trajectory) else 0
    shortest = graph.distance(episode.start, goal)
    denom = max(tl, shortest)
    # Degenerate start==goal episode: 0/0 resolves to the success bit.
    spl = sr * shortest / denom if denom > 0 else float(sr)
    return {"episode_id": episode.episode_id, "split": episode.split,
            "tl": tl, "ne": ne, "or_": orc, "sr": sr, "spl": spl}


def aggregate(reports: list) -> dict:
    """Exact means of the per-episode metric values."""
    if not reports:
        raise ValueError("no reports to aggregate")
    n = len(reports)
    return {k: sum(r[k] for r in reports) / n for k in COLUMNS}


def summary_table(rows: dict) -> str:
    """Fixed-order table; rows maps a label (e.g. split) to its aggregate."""
    label_w = max([len(label) for label in rows] + [len("split")])
    out = [f"{'split':<{label_w}}  " + "  ".join(f"{h:>7}" for h in HEADERS)]
    for label, agg in rows.items():
        cells = "  ".join(f"{agg[c]:>7.4f}" for c in COLUMNS)
        out.append(f"{label:<{label_w}}  {cells}")
    return "\n".join(out) + "\n"


def report_lines(reports: list) -> str:
    """Per-episode metrics as line-delimited records."""
    return "".join(json.dumps(r, separators=(", ", ": ")) + "\n"
                   for r in reports)
