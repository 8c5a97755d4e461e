"""Likelihood and displacement metrics."""
from __future__ import annotations

import math
from collections import defaultdict
from typing import Sequence

import numpy as np

from ..dsg import SceneGraph
from ..spatial import DiscreteTrajectory, SpatioTemporalDistribution
from ..tree import InteractionTree

DENSITY_FLOOR = 1e-12
KDE_MIN_BANDWIDTH = 0.2  # m
WINDOWS = ((0.0, 10.0), (10.0, 30.0), (30.0, 60.0))
CUMULATIVE_WINDOWS = ((0.0, 10.0), (0.0, 30.0), (0.0, 60.0))


def window_label(window) -> str:
    return f"{window[0]:g}-{window[1]:g}"


def _in_window(times: np.ndarray, window) -> np.ndarray:
    lo, hi = window
    return (times > lo + 1e-9) & (times <= hi + 1e-9)


def windowed_mean(values: np.ndarray, times: np.ndarray, windows=WINDOWS) -> list[float]:
    """Mean of ``values`` over timesteps with ``lo < t <= hi``; NaN when a
    window holds no timestep or extends past the last one."""
    values, times = np.asarray(values, dtype=float), np.asarray(times, dtype=float)
    out = []
    for w in windows:
        mask = _in_window(times, w)
        if not mask.any() or times.max() < w[1] - 1e-9:
            out.append(math.nan)
        else:
            out.append(float(values[mask].mean()))
    return out


def nll_from_density(dens) -> np.ndarray:
    return -np.log(np.maximum(np.asarray(dens, dtype=float), DENSITY_FLOOR))


def nll_mixture(dist: SpatioTemporalDistribution, rel_times, gt_xy) -> np.ndarray:
    """Per-timestep NLL of ground-truth positions under the chain's mixture."""
    return nll_from_density(dist.density_over_time(gt_xy, rel_times))


def silverman_bandwidth(samples: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Isotropic 2-D Silverman bandwidth, floored at :data:`KDE_MIN_BANDWIDTH`."""
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    w = np.ones(len(samples)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    n_eff = 1.0 / np.sum(w ** 2)
    mean = w @ samples
    var = w @ ((samples - mean) ** 2)
    spread = math.sqrt(float(var.mean()))
    return max(KDE_MIN_BANDWIDTH, spread * n_eff ** (-1.0 / 6.0))


def kde_density(samples: np.ndarray, xy, weights: np.ndarray | None = None,
                bandwidth: float | None = None) -> float:
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(samples) == 0:
        return 0.0
    w = np.ones(len(samples)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    h = silverman_bandwidth(samples, w) if bandwidth is None else bandwidth
    d2 = ((samples - np.asarray(xy, dtype=float)) ** 2).sum(-1)
    return float(w @ np.exp(-d2 / (2 * h * h)) / (2 * math.pi * h * h))


def nll_samples(trajectories: Sequence[DiscreteTrajectory], rel_times, gt_xy,
                weighted: bool = False, bandwidth: float | None = None) -> np.ndarray:
    """Per-timestep NLL under a KDE fitted to the trajectories' positions at
    each timestep."""
    rel_times = np.asarray(rel_times, dtype=float)
    gt_xy = np.asarray(gt_xy, dtype=float).reshape(-1, 2)
    if not trajectories:
        return np.full(len(rel_times), -math.log(DENSITY_FLOOR))
    w = np.array([t.weight for t in trajectories]) if weighted else None
    stacked = np.stack([t.at(rel_times) for t in trajectories], axis=1)  # (T, m, 2)
    dens = [kde_density(stacked[k], gt_xy[k], w, bandwidth) for k in range(len(rel_times))]
    return nll_from_density(dens)


def displacement_errors(traj: DiscreteTrajectory, gt_times, gt_xy, squared: bool = False) -> np.ndarray:
    """Displacement to ground truth at the trajectory's own sample times;
    ground truth is linearly interpolated."""
    gt_times = np.asarray(gt_times, dtype=float)
    gt_xy = np.asarray(gt_xy, dtype=float).reshape(-1, 2)
    ref = np.column_stack([np.interp(traj.times, gt_times, gt_xy[:, 0]),
                           np.interp(traj.times, gt_times, gt_xy[:, 1])])
    d = np.hypot(*(traj.positions - ref).T)
    return d ** 2 if squared else d


def bon_ade(predicted: Sequence[DiscreteTrajectory], gt_times, gt_xy, n: int,
            windows=WINDOWS, squared: bool = False) -> list[float]:
    """Best-of-``n`` average displacement per window (NaN when the window
    is not covered by both prediction and ground truth)."""
    if not predicted:
        raise ValueError("at least one predicted trajectory is required")
    if n < 1:
        raise ValueError("n must be >= 1")
    gt_times = np.asarray(gt_times, dtype=float)
    gt_end = float(gt_times.max())
    best = []
    errors = [(traj, displacement_errors(traj, gt_times, gt_xy, squared)) for traj in predicted[:n]]
    for w in windows:
        vals = []
        for traj, err in errors:
            mask = _in_window(traj.times, w)
            if mask.any() and traj.times.max() >= w[1] - 1e-9 and gt_end >= w[1] - 1e-9:
                vals.append(float(err[mask].mean()))
        best.append(min(vals) if vals else math.nan)
    return best


def interaction_top_k_accuracy(tree: InteractionTree, graph: SceneGraph, gt_objects: Sequence[str],
                               k: int = 10) -> dict[tuple[str, str], bool | None]:
    """Whether the true first/second interaction is among the ``k`` most
    probable predicted targets, by instance and by semantic class.

    Depth-2 probabilities are marginals (joint probability of the path);
    probabilities of nodes sharing a target are summed before ranking.
    """
    joint = {}
    for u in tree.order():
        node = tree.nodes[u]
        if node.kind != "interaction":
            continue
        parent = node.parent
        while parent is not None and tree.nodes[parent].kind != "interaction":
            parent = tree.nodes[parent].parent
        joint[u] = node.branch_probability * (joint[parent] if parent is not None else 1.0)
    out: dict[tuple[str, str], bool | None] = {}
    for depth, name in ((1, "first"), (2, "second")):
        truth = gt_objects[depth - 1] if len(gt_objects) >= depth else None
        for level in ("instance", "semantic"):
            if truth is None:
                out[(name, level)] = None
                continue
            scores: dict[str, float] = defaultdict(float)
            for u, p in joint.items():
                node = tree.nodes[u]
                if node.depth == depth:
                    key = node.target if level == "instance" else graph.nodes[node.target].semantic_class
                    scores[key] += p
            ranked = sorted(scores, key=lambda key: (-scores[key], key))[:k]
            want = truth if level == "instance" else graph.nodes[truth].semantic_class
            out[(name, level)] = want in ranked
    return out
