"""Random inputs and independent oracles shared by the tests."""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse import csr_array
from scipy.sparse.csgraph import dijkstra as csgraph_dijkstra

from scenetraj.dsg import SceneGraph, SceneNode
from scenetraj.tree import INTERACTION, PATH, ROOT, InteractionTree, TreeNode


# -- random grounded trees ---------------------------------------------------------------

def random_grounded_tree(rng, max_states: int = 20, max_depth: int = 2) -> InteractionTree:
    """A grounded tree with random branching, segment lengths and durations.

    Built node by node (not through a scene), so segment lengths and
    durations span a wide range independently of any geometry.
    """
    nodes: dict[int, dict] = {}

    def add(kind, parent, prob=1.0, seg=None, tau=None, depth=0):
        nid = len(nodes)
        pos = tuple(rng.uniform(-10, 10, 2))
        nodes[nid] = dict(id=nid, kind=kind, position=pos, parent=parent, children=[],
                          branch_probability=prob, duration=tau, segment_length=seg,
                          target=f"obj_{nid}" if kind == INTERACTION else None, anchor=None, depth=depth)
        if parent is not None:
            nodes[parent]["children"].append(nid)
        return nid

    root = add(ROOT, None, seg=float(rng.uniform(0.1, 1.0)))

    def grow(parent, depth):
        budget = max_states - len(nodes)
        if budget < 2:
            return
        k = int(rng.integers(1, 4))
        q = rng.dirichlet(np.ones(k))
        for j in range(k):
            budget = max_states - len(nodes)
            if budget < 1:
                break
            n_path = int(rng.integers(0, min(3, budget - 1) + 1)) if budget > 1 else 0
            prev, prob = parent, float(q[j])
            for _ in range(n_path):
                prev = add(PATH, prev, prob, seg=float(rng.uniform(0.1, 1.0)), depth=depth)
                prob = 1.0
            node = add(INTERACTION, prev, float(q[j]), tau=float(rng.uniform(0.5, 30.0)), depth=depth + 1)
            if depth + 1 < max_depth and rng.random() < 0.7:
                grow(node, depth + 1)

    grow(root, 0)
    # renormalize where the state budget cut a node's branches short
    for d in nodes.values():
        if d["kind"] != PATH and d["children"]:
            total = math.fsum(nodes[c]["branch_probability"] for c in d["children"])
            for c in d["children"]:
                _scale_branch(nodes, c, 1.0 / total)
    tree_nodes = {i: TreeNode(**dict(d, children=tuple(d["children"]))) for i, d in nodes.items()}
    return InteractionTree(tree_nodes, root, max_depth, grounded=True)


def _scale_branch(nodes, c, factor):
    """Scale the probability carried by branch ``c`` (its first node and,
    for a path chain, the interaction it leads to)."""
    nodes[c]["branch_probability"] *= factor
    u = c
    while nodes[u]["kind"] == PATH and nodes[u]["children"]:
        u = nodes[u]["children"][0]
        if nodes[u]["kind"] == INTERACTION:
            nodes[u]["branch_probability"] *= factor
            break


# -- chain oracles -------------------------------------------------------------------------

def ode_distribution(Q_dense: np.ndarray, p0: np.ndarray, times) -> np.ndarray:
    """p(t) from integrating dp/dt = Q p with an implicit solver; (len(times), n)."""
    times = np.asarray(times, dtype=float)
    order = np.argsort(times)
    sol = solve_ivp(lambda t, p: Q_dense @ p, (0.0, float(times.max())), p0, method="Radau",
                    t_eval=times[order], rtol=1e-8, atol=1e-10, jac=Q_dense)
    out = np.empty((len(times), len(p0)))
    out[order] = sol.y.T
    return out


def monte_carlo_distribution(Q_dense: np.ndarray, x0: int, times, n_samples: int, rng) -> np.ndarray:
    """Empirical state distribution at ``times`` from simulated jump paths."""
    n = Q_dense.shape[0]
    exits = -np.diag(Q_dense)
    jump = np.zeros((n, n))
    for j in range(n):
        if exits[j] > 0:
            col = np.clip(Q_dense[:, j].copy(), 0, None)
            col[j] = 0.0
            jump[j] = np.cumsum(col / col.sum())
    times = np.asarray(times, dtype=float)
    state = np.full(n_samples, x0)
    clock = np.zeros(n_samples)
    at = np.full((len(times), n_samples), -1)
    alive = np.ones(n_samples, dtype=bool)
    while alive.any():
        idx = np.nonzero(alive)[0]
        s = state[idx]
        rate = exits[s]
        absorbed = rate == 0
        hold = np.full(len(idx), np.inf)
        hold[~absorbed] = rng.exponential(1.0 / rate[~absorbed])
        leave = clock[idx] + hold
        for k, t in enumerate(times):
            here = (clock[idx] <= t) & (t < leave)
            at[k, idx[here]] = s[here]
        moving = idx[~absorbed]
        u = rng.random(len(moving))
        nxt = np.empty(len(moving), dtype=int)
        for j in np.unique(state[moving]):
            m = state[moving] == j
            nxt[m] = np.minimum(np.searchsorted(jump[j], u[m], side="right"), n - 1)
        clock[moving] = leave[~absorbed]
        state[moving] = nxt
        alive[idx[absorbed]] = False
    out = np.zeros((len(times), n))
    for k in range(len(times)):
        out[k] = np.bincount(at[k], minlength=n) / n_samples
    return out


# -- graph oracles ------------------------------------------------------------------------------

def random_place_graph(rng, n: int = 50, extra_edges: int = 40, name: str = "random") -> SceneGraph:
    """A connected random place graph (random spanning tree plus extra edges)
    inside one room, with a handful of objects of a few classes."""
    pts = rng.uniform(0, 30, size=(n, 2))
    ids = [f"p{i:03d}" for i in range(n)]
    nodes = [SceneNode("room", "room", "hall", "hall", (15.0, 15.0))]
    nodes += [SceneNode(pid, "place", "", pid, tuple(p)) for pid, p in zip(ids, pts)]
    edges = set()
    perm = rng.permutation(n)
    for k in range(1, n):
        a, b = perm[k], perm[int(rng.integers(k))]
        edges.add((min(a, b), max(a, b)))
    while len(edges) < n - 1 + extra_edges:
        a, b = rng.choice(n, 2, replace=False)
        edges.add((min(a, b), max(a, b)))
    pairs = [(ids[a], ids[b]) for a, b in sorted(edges)] + [(pid, "room") for pid in ids]
    classes = ("chair", "table", "lamp")
    for k in range(12):
        oid = f"o{k:02d}"
        nodes.append(SceneNode(oid, "object", classes[k % 3], f"{classes[k % 3]}_{k}",
                               tuple(rng.uniform(0, 30, 2))))
        pairs.append((oid, "room"))
    return SceneGraph.from_parts(name, nodes, pairs)


def floyd_warshall(graph: SceneGraph):
    """All-pairs distances and next-hop table over the places layer."""
    ids = sorted(graph.places)
    index = {p: i for i, p in enumerate(ids)}
    n = len(ids)
    dist = np.full((n, n), np.inf)
    nxt = -np.ones((n, n), dtype=int)
    for i in range(n):
        dist[i, i] = 0.0
        nxt[i, i] = i
    for p, nbrs in graph.place_adjacency.items():
        for q, w in nbrs:
            i, j = index[p], index[q]
            d = float(np.hypot(*(graph.position(p) - graph.position(q))))
            if d < dist[i, j]:
                dist[i, j] = d
                nxt[i, j] = j
    for k in range(n):
        via = dist[:, k, None] + dist[None, k, :]
        better = via < dist
        dist = np.where(better, via, dist)
        nxt = np.where(better, nxt[:, k, None], nxt)
    return ids, dist, nxt


def fw_path(ids, nxt, a: str, b: str) -> list[str]:
    index = {p: i for i, p in enumerate(ids)}
    i, j = index[a], index[b]
    path = [i]
    while i != j:
        i = nxt[i, j]
        path.append(i)
    return [ids[k] for k in path]


def brute_force_knn(graph: SceneGraph, cls: str, source: str, k: int):
    """Geodesic ranking of every instance via scipy's Dijkstra on the place layer."""
    ids = sorted(graph.places)
    index = {p: i for i, p in enumerate(ids)}
    rows, cols, vals = [], [], []
    for p, nbrs in graph.place_adjacency.items():
        for q, _ in nbrs:
            rows.append(index[p])
            cols.append(index[q])
            vals.append(float(np.hypot(*(graph.position(p) - graph.position(q)))))
    mat = csr_array((vals, (rows, cols)), shape=(len(ids), len(ids)))
    dist = csgraph_dijkstra(mat, indices=index[source])
    found = []
    for oid, node in graph.nodes.items():
        if node.layer == "object" and node.semantic_class == cls:
            # an object's place is the place nearest to it, by linear scan
            anchor = min(ids, key=lambda p: (float(np.hypot(*(graph.position(p) - graph.position(oid)))), p))
            found.append((oid, float(dist[index[anchor]])))
    found.sort(key=lambda item: (item[1], item[0]))
    return found[:k]


# -- scenes and fixtures ------------------------------------------------------------------------

SATURATING_CLASSES = ("chair", "table", "lamp", "sink", "shelf", "plant", "sofa", "tv")


def saturating_setup(n_classes: int = 6, per_class: int = 3, extra: int = 2):
    """A corridor with ``per_class`` instances of each class and a fixture that
    answers every query with ``n_classes + extra`` class-level candidates."""
    from scenetraj.predictor import FixturePredictor
    from scenetraj.synthetic import corridor_scene

    classes = SATURATING_CLASSES[:n_classes + extra]
    objects = [(c, 1.0 + 2 * i + 0.5 * k) for k in range(per_class) for i, c in enumerate(classes)]
    graph = corridor_scene(40, objects=objects, name="saturating")
    answers = [{"object": c, "action": "use", "probability": round(0.9 - 0.1 * i, 2), "duration_s": 5.0 + i,
                "reasoning": ""} for i, c in enumerate(classes)]
    entries = [{"past": [], "assumed_future": [], "candidates": answers}]
    entries += [{"past": [], "assumed_future": [f"{c}:use"], "candidates": answers} for c in classes]
    return graph, FixturePredictor.from_entries(entries)


# -- hand-built records ---------------------------------------------------------------------------

# positions, interaction classes, path efficiency worked out by hand
HAND_RECORDS = [
    ([(0, 0), (1, 0), (2, 0), (3, 0)], ["sink", "fridge", "stove"], 1.0),
    ([(0, 0), (3, 0), (3, 4)], ["sink", "fridge"], 5 / 7),  # 3-4-5 triangle
    ([(0, 0), (2, 0), (0, 0)], ["sink", "table"], 0.0),  # there and back
    ([(0, 0), (0, 2), (2, 2), (2, 0), (1, 0)], ["bed", "lamp", "shelf"], 1 / 7),
    ([(0, 0), (6, 8)], ["tv"], 1.0),
]
# closest normalized edit distance of each sequence to any other:
# 0-1 drops stove (1/3); 1-0 the same; 2-1 swaps fridge for table (1/2); 3 and 4 share nothing
HAND_LEVENSHTEIN = [1 / 3, 1 / 3, 1 / 2, 1.0, 1.0]


def hand_records():
    from scenetraj.eval.records import RecordedInteraction, TrajectoryRecord

    out = []
    for pos, objs, _ in HAND_RECORDS:
        ints = tuple(RecordedInteraction(o, "use", 0.1 + 0.2 * k, 0.2 + 0.2 * k) for k, o in enumerate(objs))
        out.append(TrajectoryRecord("s", 1.0, np.array(pos, dtype=float), ints))
    return out


# -- end-to-end scenarios ----------------------------------------------------------------------------

def oracle_corridor():
    """Corridor record whose future walks three objects with known dwell times."""
    from scenetraj.synthetic import corridor_scene, scripted_record

    g = corridor_scene(80, objects=[("sink", 10), ("fridge", 40), ("stove", 70)])
    plan = [("obj_000", "wash", 8.0), ("obj_001", "open", 6.0), ("obj_002", "cook", 40.0)]
    return g, scripted_record(g, (0.0, 0.0), plan, name="corridor")


def ablation_scenario(dwell: float = 10.0):
    """Two branches from x=20: a cupboard 5 m ahead (p 0.6, 10 s) then a desk
    far down the corridor, or a sofa behind (p 0.4) then a lamp. The person
    goes to the cupboard, stays ``dwell`` seconds and walks to the desk."""
    from scenetraj.predictor import FixturePredictor
    from scenetraj.synthetic import corridor_scene, scripted_record

    def cand(o, a, p, d):
        return {"object": o, "action": a, "probability": p, "duration_s": d, "reasoning": ""}

    g = corridor_scene(100, objects=[("cupboard", 25), ("desk", 95), ("sofa", 15), ("lamp", 10)])
    fx = FixturePredictor.from_entries([
        {"past": [], "assumed_future": [],
         "candidates": [cand("cupboard", "open", 0.6, 10), cand("sofa", "sit", 0.4, 10)]},
        {"past": [], "assumed_future": ["cupboard:open"], "candidates": [cand("desk", "work", 1.0, 60)]},
        {"past": [], "assumed_future": ["sofa:sit"], "candidates": [cand("lamp", "switch", 1.0, 60)]},
    ])
    rec = scripted_record(g, (20.0, 0.0), [("obj_000", "open", dwell), ("obj_001", "work", 60.0)])
    return g, fx, rec
