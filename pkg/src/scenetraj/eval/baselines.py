"""Reference predictors: constant velocity, random walk and random goal."""
from __future__ import annotations

import numpy as np

from ..ctmc import DEFAULT_V_WALK
from ..dsg import SceneGraph
from ..spatial import DiscreteTrajectory, from_keyframes, sample_times

FIT_WINDOW = 2.0  # s of past trajectory used for the velocity fit


def fit_velocity(past_times, past_xy, window: float = FIT_WINDOW) -> np.ndarray:
    """Least-squares velocity over the last ``window`` seconds."""
    t = np.asarray(past_times, dtype=float)
    xy = np.asarray(past_xy, dtype=float).reshape(-1, 2)
    if len(t) < 2:
        raise ValueError("at least two past samples are required")
    mask = t >= t[-1] - window - 1e-9
    if mask.sum() < 2:
        mask[-2:] = True
    tt, pp = t[mask], xy[mask]
    A = np.column_stack([tt - tt[-1], np.ones(len(tt))])
    coef, *_ = np.linalg.lstsq(A, pp, rcond=None)
    return coef[0]


def constant_velocity(past_times, past_xy, horizon: float, dt: float) -> DiscreteTrajectory:
    v = fit_velocity(past_times, past_xy)
    times = sample_times(dt, horizon)
    last = np.asarray(past_xy, dtype=float).reshape(-1, 2)[-1]
    return DiscreteTrajectory(times, last + times[:, None] * v[None, :])


def random_walk_places(graph: SceneGraph, start_place: str, n_steps: int, rng) -> list[str]:
    """Place sequence of a uniform random walk on the places layer."""
    seq = [start_place]
    for _ in range(n_steps):
        nbrs = graph.place_adjacency[seq[-1]]
        if not nbrs:
            break
        seq.append(nbrs[int(rng.integers(len(nbrs)))][0])
    return seq


def _walk(graph: SceneGraph, start, places: list[str], v_walk: float):
    frames = [(0.0, np.asarray(start, dtype=float))]
    t = 0.0
    for p in places:
        pos = graph.position(p)
        t += float(np.hypot(*(pos - frames[-1][1]))) / v_walk
        frames.append((t, pos))
    return frames


def random_walk(graph: SceneGraph, start, horizon: float, dt: float, n: int, seed: int,
                v_walk: float = DEFAULT_V_WALK) -> list[DiscreteTrajectory]:
    rng = np.random.default_rng(seed)
    anchor = graph.nearest_place(start)
    out = []
    for _ in range(n):
        places = [anchor]
        frames = _walk(graph, start, places, v_walk)
        while frames[-1][0] <= horizon:
            nbrs = graph.place_adjacency[places[-1]]
            if not nbrs:
                break
            nxt = nbrs[int(rng.integers(len(nbrs)))][0]
            places.append(nxt)
            t = frames[-1][0] + float(np.hypot(*(graph.position(nxt) - frames[-1][1]))) / v_walk
            frames.append((t, graph.position(nxt)))
        out.append(from_keyframes(frames, dt, horizon, 1.0 / n))
    return out


def random_goal(graph: SceneGraph, start, horizon: float, dt: float, n: int, seed: int,
                v_walk: float = DEFAULT_V_WALK) -> list[DiscreteTrajectory]:
    rng = np.random.default_rng(seed)
    anchor = graph.nearest_place(start)
    places = graph.places
    out = []
    for _ in range(n):
        goal = places[int(rng.integers(len(places)))]
        path = graph.shortest_path(anchor, goal).nodes
        out.append(from_keyframes(_walk(graph, start, list(path), v_walk), dt, horizon, 1.0 / n))
    return out
