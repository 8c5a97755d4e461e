"""Continuous-time Markov chain over a grounded interaction tree.

Column convention throughout: ``Q[i, j]`` is the rate from state ``j`` to
state ``i``, columns sum to zero and ``dp/dt = Q @ p``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .tree import INTERACTION, PATH, ROOT, InteractionTree

DEFAULT_V_WALK = 1.4  # m/s
TOLERANCE = 1e-10
_MAX_STEP_RATE = 25.0  # max Poisson mean per uniformization step


@dataclass(frozen=True, eq=False)
class Ctmc:
    states: tuple[int, ...]  # tree node ids, parents before children
    Q: sp.csc_array
    v_walk: float
    x0: int = 0
    no_interaction_times: bool = False

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def index(self) -> dict[int, int]:
        return {s: i for i, s in enumerate(self.states)}

    def dense(self) -> np.ndarray:
        return self.Q.toarray()

    def exit_rates(self) -> np.ndarray:
        return -self.Q.diagonal()

    def absorbing(self) -> np.ndarray:
        return self.exit_rates() == 0

    @cached_property
    def uniformized(self) -> tuple[float, sp.csr_array]:
        """Uniformization rate and the stochastic matrix ``I + Q / rate``."""
        lam = float(self.exit_rates().max()) if self.n else 0.0
        if lam == 0:
            return 0.0, sp.eye_array(self.n, format="csr")
        return lam, (sp.eye_array(self.n, format="csr") + self.Q.tocsr() / lam).tocsr()

    def initial(self) -> np.ndarray:
        p = np.zeros(self.n)
        p[self.x0] = 1.0
        return p


@dataclass(frozen=True)
class StateDistribution:
    t: float
    p: np.ndarray


def _edge_rates(tree: InteractionTree, v_walk: float) -> dict[int, list[tuple[int, float]]]:
    rates: dict[int, list[tuple[int, float]]] = {}
    for u in tree.order():
        node = tree.nodes[u]
        if not node.children:
            continue
        if node.kind in (ROOT, PATH):
            seg = node.segment_length
            if seg is None or not seg > 0:
                raise ValueError(f"walking state {u} has segment length {seg!r}")
            if node.kind == PATH and len(node.children) != 1:
                raise ValueError(f"path node {u} must have exactly one child")
            base = v_walk / seg
            if node.kind == PATH:
                rates[u] = [(node.children[0], base)]
            else:
                rates[u] = [(c, tree.nodes[c].branch_probability * base) for c in node.children]
        elif node.kind == INTERACTION:
            tau = node.duration
            if tau is None or not tau > 0 or not math.isfinite(tau):
                raise ValueError(f"interaction node {u} has duration {tau!r}")
            rates[u] = [(c, tree.nodes[c].branch_probability / tau) for c in node.children]
        else:
            raise ValueError(f"unknown node kind {node.kind!r}")
    return rates


def _bypass(tree: InteractionTree, node_id: int) -> list[tuple[int, float]]:
    """Where mass entering ``node_id`` goes when interactions take no time."""
    node = tree.nodes[node_id]
    if node.kind != INTERACTION or not node.children:
        return [(node_id, 1.0)]
    out = []
    for c in node.children:
        q = tree.nodes[c].branch_probability
        out.extend((g, q * w) for g, w in _bypass(tree, c))
    return out


def build_generator(tree: InteractionTree, v_walk: float = DEFAULT_V_WALK,
                    no_interaction_times: bool = False) -> Ctmc:
    """Generator of the walk-and-interact process on a grounded tree.

    Walking states leave at ``v_walk / segment_length``; an interaction with
    duration ``tau`` leaves toward child *j* at ``q_j / tau`` where ``q_j`` are
    the normalized branch probabilities. Leaves are absorbing. With
    ``no_interaction_times`` every non-leaf interaction is passed through
    instantly (its inflow is redirected to its successors).
    """
    if not tree.grounded:
        raise ValueError("tree must be grounded (see ground_paths) before building a generator")
    if not v_walk > 0:
        raise ValueError("v_walk must be > 0")
    order = tree.order()
    index = {s: i for i, s in enumerate(order)}
    rates = _edge_rates(tree, v_walk)
    rows, cols, vals = [], [], []
    for u, out in rates.items():
        j = index[u]
        for c, r in out:
            targets = _bypass(tree, c) if no_interaction_times else [(c, 1.0)]
            for g, w in targets:
                rows.append(index[g])
                cols.append(j)
                vals.append(r * w)
    n = len(order)
    offdiag = sp.coo_array((np.asarray(vals, dtype=float), (np.asarray(rows, dtype=int),
                                                            np.asarray(cols, dtype=int))),
                           shape=(n, n)).tocsc()
    offdiag.sum_duplicates()
    col_sums = np.asarray(offdiag.sum(axis=0)).ravel()
    Q = (offdiag - sp.diags_array(col_sums)).tocsc()
    Q.eliminate_zeros()
    Q.sort_indices()
    return Ctmc(tuple(order), Q, float(v_walk), 0, no_interaction_times)


def _uniformized_step(P, a: float, p: np.ndarray, tol: float) -> np.ndarray:
    w = math.exp(-a)
    term = p
    acc = w * term
    cum = w
    k = 0
    k_max = int(a + 12 * math.sqrt(a) + 60)
    while 1.0 - cum > tol and k < k_max:
        k += 1
        term = P @ term
        w *= a / k
        acc = acc + w * term
        cum += w
    return acc


def evolve(ctmc: Ctmc, p: np.ndarray, t: float, tol: float = TOLERANCE) -> np.ndarray:
    """exp(Q t) @ p by uniformization."""
    if t < 0:
        raise ValueError("t must be >= 0")
    p = np.asarray(p, dtype=float)
    lam, P = ctmc.uniformized
    if t == 0 or lam == 0:
        return p.copy()
    n_steps = max(1, math.ceil(lam * t / _MAX_STEP_RATE))
    h = t / n_steps
    for _ in range(n_steps):
        p = _uniformized_step(P, lam * h, p, tol / n_steps)
    np.maximum(p, 0.0, out=p)
    return p


def distribution_at(ctmc: Ctmc, t: float, tol: float = TOLERANCE) -> StateDistribution:
    if t < 0:
        raise ValueError("t must be >= 0")
    return StateDistribution(float(t), evolve(ctmc, ctmc.initial(), t, tol))


def distributions(ctmc: Ctmc, times: Sequence[float], tol: float = TOLERANCE) -> np.ndarray:
    """State distributions at several times, shape ``(len(times), n)``.

    Times are visited in sorted order, each evolved from the previous one.
    Truncation error accumulates along the chain of calls, so each call gets
    an equal share of ``tol``.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be >= 0")
    out = np.empty((len(times), ctmc.n))
    p, t_prev = ctmc.initial(), 0.0
    share = tol / max(1, len(times))
    for i in np.argsort(times, kind="stable"):
        p = evolve(ctmc, p, times[i] - t_prev, share)
        t_prev = times[i]
        out[i] = p
    return out


def steady_state(ctmc: Ctmc) -> StateDistribution:
    """Absorption distribution of the chain started at the root.

    States are in topological order, so one forward sweep pushes each
    transient state's mass to its successors in proportion to the rates.
    """
    Q = ctmc.Q
    exits = ctmc.exit_rates()
    mass = ctmc.initial()
    for j in range(ctmc.n):
        if exits[j] == 0 or mass[j] == 0:
            continue
        lo, hi = Q.indptr[j], Q.indptr[j + 1]
        for i, r in zip(Q.indices[lo:hi], Q.data[lo:hi]):
            if i != j:
                mass[i] += mass[j] * r / exits[j]
        mass[j] = 0.0
    return StateDistribution(math.inf, mass)


def tv_distance(p, q) -> float:
    p = p.p if isinstance(p, StateDistribution) else np.asarray(p, dtype=float)
    q = q.p if isinstance(q, StateDistribution) else np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"distributions have different shapes {p.shape} and {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def horizon_of_meaning(ctmc: Ctmc, threshold: float = 0.5, t_max: float = 600.0,
                       dt: float = 1.0, resolution: float = 0.01) -> float | None:
    """First time the distribution is within ``threshold`` TV of the steady
    state; grid search on ``dt`` followed by bisection. None if the
    threshold is not reached by ``t_max``."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    steady = steady_state(ctmc).p
    p, t = ctmc.initial(), 0.0
    if tv_distance(p, steady) < threshold:
        return 0.0
    while t < t_max:
        step = min(dt, t_max - t)
        p_next = evolve(ctmc, p, step)
        if tv_distance(p_next, steady) < threshold:
            lo, hi = 0.0, step
            while hi - lo > resolution:
                mid = 0.5 * (lo + hi)
                if tv_distance(evolve(ctmc, p, mid), steady) < threshold:
                    hi = mid
                else:
                    lo = mid
            return t + hi
        p, t = p_next, t + step
    return None


def generator_dump(ctmc: Ctmc) -> dict:
    coo = ctmc.Q.tocoo()
    entries = sorted((int(c), int(r), float(v)) for r, c, v in zip(coo.row, coo.col, coo.data) if v != 0)
    return {"states": list(ctmc.states), "v_walk": ctmc.v_walk,
            "entries": [{"from": ctmc.states[c], "to": ctmc.states[r], "rate": v} for c, r, v in entries]}
