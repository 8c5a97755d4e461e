"""Dataset summaries and subsets."""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from ..dsg import SceneGraph
from .records import (FUTURE_HORIZON, SplitError, TrajectoryRecord, path_efficiency, path_length,
                      split_past_future)


def levenshtein(a: Sequence, b: Sequence) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def interaction_classes(record: TrajectoryRecord, graph: SceneGraph | None = None) -> list[str]:
    if graph is None:
        return [i.object for i in record.interactions]
    return [graph.nodes[i.object].semantic_class if i.object in graph.nodes else i.object
            for i in record.interactions]


def closest_levenshtein(sequences: Sequence[Sequence[str]]) -> list[float]:
    """For each sequence, the smallest normalized edit distance to any other."""
    out = []
    for i, a in enumerate(sequences):
        best = math.inf
        for j, b in enumerate(sequences):
            if i == j:
                continue
            denom = max(len(a), len(b))
            best = min(best, levenshtein(a, b) / denom if denom else 0.0)
        out.append(best)
    return out


def _mean_std(values) -> tuple[float, float]:
    vals = np.asarray([v for v in values if not math.isnan(v)], dtype=float)
    if len(vals) == 0:
        return math.nan, math.nan
    return float(vals.mean()), float(vals.std())


def dataset_stats(records: Sequence[TrajectoryRecord],
                  graphs: Mapping[str, SceneGraph] | None = None,
                  horizon: float = FUTURE_HORIZON) -> dict[str, tuple[float, float] | float | int]:
    """Summary in the spirit of a dataset-characteristics table.

    Tuple entries are (mean, std). ``levenshtein`` is NaN for a single record.
    """
    if not records:
        raise ValueError("at least one record is required")
    graphs = graphs or {}
    splits = []
    for r in records:
        try:
            splits.append(split_past_future(r, horizon))
        except SplitError:
            continue
    seqs = [interaction_classes(r, graphs.get(r.scene)) for r in records]

    def interacting(ints, lo, hi):
        return sum(max(0.0, min(i.t_end, hi) - max(i.t_start, lo)) for i in ints)

    stats = {
        "n_records": len(records),
        "n_start_interacting": sum(not s.walking_at_start for s in splits),
        "n_start_walking": sum(s.walking_at_start for s in splits),
        "distance_past": _mean_std(
            path_length(np.vstack([s.past_positions, s.current_position[None]])) for s in splits),
        "distance_future": _mean_std(s.future_distance() for s in splits),
        "n_past_interactions": _mean_std(len(s.past_interactions) for s in splits),
        "n_future_interactions": _mean_std(len(s.future_interactions) for s in splits),
        "duration_past": _mean_std(s.t_split - s.record.times[0] for s in splits),
        "interacting_past": _mean_std(
            interacting(s.record.interactions, s.record.times[0], s.t_split) for s in splits),
        "interacting_future": _mean_std(
            interacting(s.record.interactions, s.t_split, s.record.t_end) for s in splits),
        "path_efficiency": _mean_std(path_efficiency(r.positions) for r in records),
        "levenshtein": float(np.mean(closest_levenshtein(seqs))) if len(records) > 1 else math.nan,
    }
    return stats


SUBSETS = ("walking_at_start", "future_distance_upper_quartile")


def subset_filter(records: Sequence[TrajectoryRecord], which: str,
                  reference: Sequence[TrajectoryRecord] | None = None,
                  horizon: float = FUTURE_HORIZON) -> list[TrajectoryRecord]:
    """Records where the person walks at the split, or whose future travelled
    distance exceeds the 75th percentile of ``reference`` (default: the
    records themselves)."""
    if which not in SUBSETS:
        raise ValueError(f"unknown subset {which!r}")
    if which == "walking_at_start":
        return [r for r in records if split_past_future(r, horizon).walking_at_start]
    reference = records if reference is None else reference
    if not reference:
        return []
    threshold = float(np.percentile([split_past_future(r, horizon).future_distance() for r in reference], 75))
    return [r for r in records if split_past_future(r, horizon).future_distance() > threshold]
