"""Spatial read-out of the chain: Gaussian-mixture densities and discrete
trajectories."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from .ctmc import Ctmc, distribution_at, distributions
from .tree import INTERACTION, InteractionTree, enumerate_sequences

DEFAULT_SIGMA = 0.5  # m
DEFAULT_DT = 1.0  # s
DEFAULT_HORIZON = 60.0  # s


@dataclass(frozen=True, eq=False)
class SpatioTemporalDistribution:
    ctmc: Ctmc
    positions: np.ndarray  # (n_states, 2), in ctmc state order
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if pos.shape[0] != self.ctmc.n:
            raise ValueError("one position per chain state is required")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def from_tree(cls, tree: InteractionTree, ctmc: Ctmc, sigma: float = DEFAULT_SIGMA):
        return cls(ctmc, tree.positions(ctmc.states), sigma)

    def weights(self, t: float) -> np.ndarray:
        return distribution_at(self.ctmc, t).p

    def density(self, xy, t: float) -> np.ndarray | float:
        return mixture_density(self.positions, self.weights(t), self.sigma, xy)

    def density_over_time(self, xy, times: Sequence[float]) -> np.ndarray:
        """Density at ``xy[k]`` and ``times[k]`` for each k (e.g. a ground-truth track)."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        w = distributions(self.ctmc, times)
        return np.array([mixture_density(self.positions, w[k], self.sigma, xy[k]) for k in range(len(xy))])


def mixture_density(centers: np.ndarray, weights: np.ndarray, sigma: float, xy) -> np.ndarray | float:
    """Isotropic Gaussian mixture evaluated at one point or an (m, 2) array."""
    xy = np.asarray(xy, dtype=float)
    pts = xy.reshape(-1, 2)
    keep = weights > 0
    c, w = centers[keep], weights[keep]
    d2 = ((pts[:, None, :] - c[None, :, :]) ** 2).sum(-1)
    vals = (np.exp(-d2 / (2 * sigma ** 2)) @ w) / (2 * math.pi * sigma ** 2)
    return float(vals[0]) if xy.ndim == 1 else vals


def density(dist: SpatioTemporalDistribution, xy, t: float):
    if t < 0:
        raise ValueError("t must be >= 0")
    return dist.density(xy, t)


def density_grid(dist: SpatioTemporalDistribution, xs: Sequence[float], ys: Sequence[float],
                 times: Sequence[float]) -> np.ndarray:
    """Density on a grid, shape ``(len(times), len(ys), len(xs))``."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    w = distributions(dist.ctmc, times)
    return np.stack([mixture_density(dist.positions, w[k], dist.sigma, pts).reshape(len(ys), len(xs))
                     for k in range(len(w))])


def write_density_csv(out: TextIO, dist: SpatioTemporalDistribution, xs, ys, times,
                      comment: str | None = None) -> None:
    grid = density_grid(dist, xs, ys, times)
    if comment:
        out.write(f"# {comment}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["x", "y", "t", "density"])
    for k, t in enumerate(times):
        for j, y in enumerate(ys):
            for i, x in enumerate(xs):
                writer.writerow([f"{x:.6g}", f"{y:.6g}", f"{t:.6g}", f"{grid[k, j, i]:.10g}"])


# -- discrete trajectories -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteTrajectory:
    times: np.ndarray      # (K,), constant step starting at 0
    positions: np.ndarray  # (K, 2)
    weight: float = 1.0
    sequence: tuple[int, ...] = ()  # interaction node ids, when derived from a tree

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.column_stack([np.interp(t, self.times, self.positions[:, 0]),
                                np.interp(t, self.times, self.positions[:, 1])])


def sample_times(dt: float, horizon: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError("dt must be > 0")
    return np.arange(int(math.floor(horizon / dt + 1e-9)) + 1) * dt


def from_keyframes(keyframes: Sequence[tuple[float, Sequence[float]]], dt: float, horizon: float,
                   weight: float = 1.0, sequence: tuple[int, ...] = ()) -> DiscreteTrajectory:
    """Piecewise-linear motion through (time, position) keyframes, sampled
    every ``dt``; the last position is held until ``horizon``."""
    kt = np.maximum.accumulate(np.asarray([float(t) for t, _ in keyframes]))
    kp = np.asarray([p for _, p in keyframes], dtype=float).reshape(-1, 2)
    times = sample_times(dt, horizon)
    # last keyframe at or before each sample; a zero-duration step is a jump
    i = np.clip(np.searchsorted(kt, times, side="right") - 1, 0, len(kt) - 1)
    j = np.minimum(i + 1, len(kt) - 1)
    span = kt[j] - kt[i]
    frac = np.divide(times - kt[i], span, out=np.zeros_like(times), where=span > 0)
    frac = np.clip(frac, 0.0, 1.0)[:, None]
    pos = kp[i] + frac * (kp[j] - kp[i])
    return DiscreteTrajectory(times, pos, weight, sequence)


def _walk_keyframes(tree: InteractionTree, path: Sequence[int], v_walk: float,
                    no_interaction_times: bool = False) -> list[tuple[float, np.ndarray]]:
    t = 0.0
    first = np.asarray(tree.nodes[path[0]].position, dtype=float)
    frames = [(t, first)]
    for u, w in zip(path, path[1:]):
        a, b = tree.nodes[u], tree.nodes[w]
        pa, pb = np.asarray(a.position, dtype=float), np.asarray(b.position, dtype=float)
        if a.kind == INTERACTION:
            if not no_interaction_times:
                t += a.duration
                frames.append((t, pa))
            # interaction children reached directly (shared anchor) still take walking time
        t += float(np.hypot(*(pb - pa))) / v_walk
        frames.append((t, pb))
    return frames


def top_n_trajectories(tree: InteractionTree, n: int, v_walk: float, dt: float = DEFAULT_DT,
                       horizon: float = DEFAULT_HORIZON, mode: str = "expected", seed: int | None = 0,
                       no_interaction_times: bool = False) -> list[DiscreteTrajectory]:
    """Representative trajectories through a grounded tree.

    ``expected``: the ``n`` most probable interaction sequences, walked at
    ``v_walk`` with each interaction lasting exactly its predicted duration.
    ``sampled``: ``n`` draws of the stochastic process itself (branch choice
    by probability, exponential traversal and interaction times).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode == "expected":
        out = []
        for seq, prob in enumerate_sequences(tree)[:n]:
            leaf = seq[-1] if seq else tree.leaves()[0]
            path = tree.path_from_root(leaf)
            frames = _walk_keyframes(tree, path, v_walk, no_interaction_times)
            out.append(from_keyframes(frames, dt, horizon, prob, seq))
        return out
    if mode == "sampled":
        rng = np.random.default_rng(seed)
        return [_sample_one(tree, v_walk, dt, horizon, rng, no_interaction_times) for _ in range(n)]
    raise ValueError(f"unknown mode {mode!r}")


def _sample_one(tree, v_walk, dt, horizon, rng, no_interaction_times) -> DiscreteTrajectory:
    u = tree.root
    t = 0.0
    frames = [(t, np.asarray(tree.nodes[u].position, dtype=float))]
    seq, prob = [], 1.0
    while tree.nodes[u].children and t <= horizon:
        node = tree.nodes[u]
        kids = node.children
        q = np.array([tree.nodes[c].branch_probability for c in kids]) if len(kids) > 1 else np.ones(1)
        w = kids[int(rng.choice(len(kids), p=q / q.sum()))] if len(kids) > 1 else kids[0]
        pa = np.asarray(node.position, dtype=float)
        pb = np.asarray(tree.nodes[w].position, dtype=float)
        if node.kind == INTERACTION:
            dwell = 0.0 if no_interaction_times else rng.exponential(node.duration)
            t += dwell
            frames.append((t, pa))
            t += float(np.hypot(*(pb - pa))) / v_walk
        else:
            t += rng.exponential(node.segment_length / v_walk)
        frames.append((t, pb))
        u = w
        if tree.nodes[u].kind == INTERACTION:
            seq.append(u)
            prob *= tree.nodes[u].branch_probability
    # finish the path deterministically so the sequence weight is complete
    while tree.nodes[u].children:
        u = max(tree.nodes[u].children, key=lambda c: tree.nodes[c].branch_probability)
        if tree.nodes[u].kind == INTERACTION:
            seq.append(u)
            prob *= tree.nodes[u].branch_probability
    return from_keyframes(frames, dt, horizon, prob, tuple(seq))


def deterministic_walk_distribution(tree: InteractionTree, n: int, v_walk: float, dt: float = DEFAULT_DT,
                                    horizon: float = DEFAULT_HORIZON,
                                    no_interaction_times: bool = False) -> list[DiscreteTrajectory]:
    """Ablation arm without the chain: the ``n`` most likely sequences walked
    deterministically. Their likelihood is scored by KDE in evaluation."""
    return top_n_trajectories(tree, n, v_walk, dt, horizon, "expected",
                              no_interaction_times=no_interaction_times)


def write_trajectories_csv(out: TextIO, trajectories: Sequence[DiscreteTrajectory],
                           comment: str | None = None) -> None:
    if comment:
        out.write(f"# {comment}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["rank", "weight", "t", "x", "y"])
    for r, traj in enumerate(trajectories):
        for t, (x, y) in zip(traj.times, traj.positions):
            writer.writerow([r, f"{traj.weight:.10g}", f"{t:.6g}", f"{x:.6g}", f"{y:.6g}"])
