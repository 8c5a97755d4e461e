"""Interaction-sequence trees.

:func:`build_tree` queries a predictor auto-regressively and stores the
predicted interactions as a tree rooted at the agent's current position.
:func:`ground_paths` then inserts walking waypoints ("path" nodes) along
shortest paths over the places layer so that the tree can be turned into a
continuous-time Markov chain.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dsg import SceneGraph
from .predictor import (InteractionCandidate, PastInteraction, PredictorConfig, PredictorError,
                        ground_semantic, truncate)

log = logging.getLogger(__name__)

ROOT, INTERACTION, PATH = "root", "interaction", "path"
_EPS = 1e-9


@dataclass(frozen=True)
class TreeParams:
    width: int = 6        # W_I, candidates kept per predictor call
    depth: int = 2        # D_I, interactions per sequence
    n_closest: int = 3    # N_s, instances per semantic class
    granularity: str = "semantic"
    geodesic: bool = True

    def __post_init__(self):
        if self.width < 1 or self.depth < 1 or self.n_closest < 1:
            raise ValueError("width, depth and n_closest must all be >= 1")

    @property
    def max_sequences(self) -> int:
        per_call = self.width * (self.n_closest if self.granularity == "semantic" else 1)
        return per_call ** self.depth


@dataclass(frozen=True)
class TreeNode:
    id: int
    kind: str
    position: tuple[float, float]
    parent: int | None
    children: tuple[int, ...] = ()
    branch_probability: float = 1.0
    duration: float | None = None        # interaction nodes
    segment_length: float | None = None  # walking states: length of the segment they traverse
    target: str | None = None            # interaction nodes: object id
    anchor: str | None = None            # root and interaction nodes: place id
    depth: int = 0                       # number of interactions on the way from the root


@dataclass(frozen=True, eq=False)
class InteractionTree:
    nodes: dict[int, TreeNode]
    root: int
    depth: int
    provenance: dict[int, InteractionCandidate] = field(default_factory=dict)
    raw_probability: dict[int, float] = field(default_factory=dict)
    grounded: bool = False
    warnings: tuple[str, ...] = ()

    def __getitem__(self, node_id: int) -> TreeNode:
        return self.nodes[node_id]

    def __len__(self) -> int:
        return len(self.nodes)

    def order(self) -> list[int]:
        """Breadth-first node order: every parent precedes its children."""
        out, queue = [], deque([self.root])
        while queue:
            u = queue.popleft()
            out.append(u)
            queue.extend(self.nodes[u].children)
        return out

    def interaction_nodes(self, depth: int | None = None) -> list[int]:
        return [i for i in self.order() if self.nodes[i].kind == INTERACTION
                and (depth is None or self.nodes[i].depth == depth)]

    def leaves(self) -> list[int]:
        return [i for i in self.order() if not self.nodes[i].children]

    def path_from_root(self, node_id: int) -> list[int]:
        path = [node_id]
        while self.nodes[path[-1]].parent is not None:
            path.append(self.nodes[path[-1]].parent)
        return path[::-1]

    def positions(self, order: Sequence[int] | None = None) -> np.ndarray:
        order = self.order() if order is None else order
        return np.array([self.nodes[i].position for i in order], dtype=float).reshape(-1, 2)

    def to_dict(self) -> dict:
        nodes = []
        for i in self.order():
            n = self.nodes[i]
            entry = {"id": n.id, "kind": n.kind, "position": list(n.position), "parent": n.parent,
                     "children": list(n.children), "branch_probability": n.branch_probability,
                     "depth": n.depth}
            for key in ("duration", "segment_length", "target", "anchor"):
                if getattr(n, key) is not None:
                    entry[key] = getattr(n, key)
            if i in self.provenance:
                entry["candidate"] = self.provenance[i].to_json()
                entry["candidate"]["granularity"] = self.provenance[i].granularity
                entry["raw_probability"] = self.raw_probability.get(i)
            nodes.append(entry)
        return {"root": self.root, "depth": self.depth, "grounded": self.grounded,
                "warnings": list(self.warnings), "nodes": nodes}

    @classmethod
    def from_dict(cls, doc: dict) -> "InteractionTree":
        nodes, provenance, raw = {}, {}, {}
        for e in doc["nodes"]:
            nodes[e["id"]] = TreeNode(
                id=e["id"], kind=e["kind"], position=tuple(e["position"]), parent=e["parent"],
                children=tuple(e["children"]), branch_probability=e["branch_probability"],
                duration=e.get("duration"), segment_length=e.get("segment_length"),
                target=e.get("target"), anchor=e.get("anchor"), depth=e.get("depth", 0))
            if "candidate" in e:
                c = e["candidate"]
                provenance[e["id"]] = InteractionCandidate(
                    c["object"], c["action"], c["probability"], c["duration_s"],
                    c.get("reasoning", ""), c.get("granularity", "instance"))
                raw[e["id"]] = e.get("raw_probability")
        return cls(nodes, doc["root"], doc["depth"], provenance, raw, doc.get("grounded", False),
                   tuple(doc.get("warnings", ())))


# -- construction ---------------------------------------------------------------

@dataclass
class _Draft:
    kind: str
    position: tuple[float, float]
    parent: int | None
    depth: int
    anchor: str | None = None
    target: str | None = None
    duration: float | None = None
    weight: float = 1.0
    candidate: InteractionCandidate | None = None
    history: tuple = ()
    children: list = field(default_factory=list)
    failed: bool = False
    expanded: bool = False


def _expand(graph: SceneGraph, draft: _Draft, cands: list[InteractionCandidate],
            params: TreeParams, warnings: list[str]) -> list[tuple[InteractionCandidate, InteractionCandidate]]:
    """Instance-level children of one predictor answer, paired with the
    candidate they came from."""
    cands = truncate(cands, params.width)
    out = []
    for cand in cands:
        if cand.granularity == "semantic":
            for inst in ground_semantic([cand], graph, draft.anchor, params.n_closest,
                                        geodesic=params.geodesic, warnings=warnings):
                out.append((inst, cand))
        else:
            obj = graph.resolve_object(cand.target)
            if obj is None:
                msg = f"unknown object {cand.target!r}; candidate dropped"
                log.warning(msg)
                warnings.append(msg)
                continue
            out.append((replace(cand, target=obj), cand))
    out.sort(key=lambda pair: (-pair[0].probability, graph.nodes[pair[0].target].label, pair[0].action))
    return out


def build_tree(graph: SceneGraph, predictor, start, past: Sequence[PastInteraction] = (),
               params: TreeParams = TreeParams(), scene_text: str | None = None,
               config: PredictorConfig | None = None, max_workers: int = 4) -> InteractionTree:
    """Expand the interaction tree to ``params.depth`` levels.

    A predictor failure while expanding the root propagates. Deeper failures
    prune the branch; its siblings are renormalized.
    """
    if scene_text is None:
        scene_text = graph.describe(params.granularity)
    if config is None:
        config = PredictorConfig(granularity=params.granularity, width=params.width)
    start = (float(start[0]), float(start[1]))
    past = tuple(past)
    drafts = [_Draft(ROOT, start, None, 0, anchor=graph.nearest_place(start))]
    warnings: list[str] = []
    frontier = [0]

    def call(idx):
        try:
            return predictor.predict_next(scene_text, past, list(drafts[idx].history), config)
        except PredictorError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        for level in range(params.depth):
            results = list(pool.map(call, frontier))
            next_frontier = []
            for idx, result in zip(frontier, results):
                d = drafts[idx]
                if isinstance(result, PredictorError):
                    if level == 0:
                        raise result
                    msg = f"branch {[c.target for c in d.history]} pruned: {result}"
                    log.warning(msg)
                    warnings.append(msg)
                    d.failed = True
                    continue
                d.expanded = bool(result)
                children = _expand(graph, d, list(result), params, warnings)
                if result and not children:
                    if level == 0:
                        raise PredictorError("no predicted interaction could be grounded in the scene")
                    d.failed = True
                    continue
                for inst, origin in children:
                    node = graph.nodes[inst.target]
                    drafts.append(_Draft(INTERACTION, node.position, idx, level + 1,
                                         anchor=graph.object_anchor[inst.target], target=inst.target,
                                         duration=inst.duration, weight=inst.probability,
                                         candidate=origin, history=d.history + (origin,)))
                    d.children.append(len(drafts) - 1)
                    next_frontier.append(len(drafts) - 1)
            frontier = next_frontier

    # prune failed branches bottom-up
    for idx in range(len(drafts) - 1, 0, -1):
        d = drafts[idx]
        if d.expanded and not d.failed and not any(not drafts[c].failed for c in d.children):
            d.failed = True
    if all(drafts[c].failed for c in drafts[0].children) and drafts[0].children:
        raise PredictorError("every branch of the interaction tree failed")

    # renumber breadth-first
    ids, queue, order = {}, deque([0]), []
    while queue:
        u = queue.popleft()
        ids[u] = len(order)
        order.append(u)
        queue.extend(c for c in drafts[u].children if not drafts[c].failed)
    nodes, provenance, raw = {}, {}, {}
    for u in order:
        d = drafts[u]
        kids = [c for c in d.children if not drafts[c].failed]
        nodes[ids[u]] = TreeNode(
            id=ids[u], kind=d.kind, position=d.position,
            parent=None if d.parent is None else ids[d.parent],
            children=tuple(ids[c] for c in kids),
            branch_probability=1.0 if d.parent is None else d.weight / _sibling_total(drafts, d),
            duration=d.duration, target=d.target, anchor=d.anchor, depth=d.depth)
        if d.candidate is not None:
            provenance[ids[u]] = d.candidate
            raw[ids[u]] = d.weight
    return InteractionTree(nodes, 0, params.depth, provenance, raw, False, tuple(warnings))


def _sibling_total(drafts: list[_Draft], d: _Draft) -> float:
    parent = drafts[d.parent]
    return math.fsum(drafts[c].weight for c in parent.children if not drafts[c].failed)


# -- spatial grounding ---------------------------------------------------------------

def _dedupe(points: list[np.ndarray]) -> list[np.ndarray]:
    out = [points[0]]
    for p in points[1:]:
        if np.hypot(*(p - out[-1])) > _EPS:
            out.append(p)
    return out


def _subdivide(points: list[np.ndarray], max_len: float) -> list[np.ndarray]:
    """Split each leg into the fewest equal pieces no longer than ``max_len``."""
    out = [points[0]]
    for a, b in zip(points, points[1:]):
        k = max(1, math.ceil(np.hypot(*(b - a)) / max_len - 1e-9))
        for i in range(1, k + 1):
            out.append(a + (b - a) * (i / k))
    return out


def branch_polyline(graph: SceneGraph, src_pos, src_anchor: str, dst_pos, dst_anchor: str) -> list[np.ndarray]:
    """Waypoints from a source position through the shortest place path to a
    destination; a single point when both share an anchor place."""
    src_pos = np.asarray(src_pos, dtype=float)
    dst_pos = np.asarray(dst_pos, dtype=float)
    if src_anchor == dst_anchor:
        return [src_pos]
    sp = graph.shortest_path(src_anchor, dst_anchor)
    return _dedupe([src_pos] + [graph.position(p) for p in sp.nodes] + [dst_pos])


def polyline_length(points: Sequence[np.ndarray]) -> float:
    return math.fsum(float(np.hypot(*(b - a))) for a, b in zip(points, points[1:]))


def ground_paths(tree: InteractionTree, graph: SceneGraph, max_segment_len: float = 1.0) -> InteractionTree:
    """Insert walking states along the shortest place paths between interactions.

    Every walking state (the root and each path node) sits at the start of
    the straight segment it traverses and records that segment's length in
    ``segment_length``. Segments leaving an interaction start at the
    interaction itself; the first path node of each branch carries the
    branch probability. The root's first step has the same length on every
    branch, so the root leaves toward branch *j* with probability *q_j*.
    """
    if max_segment_len <= 0:
        raise ValueError("max_segment_len must be > 0")
    if tree.grounded:
        raise ValueError("tree is already grounded")
    new: dict[int, dict] = {}
    next_id = max(tree.nodes) + 1

    def copy(n: TreeNode) -> dict:
        return {"id": n.id, "kind": n.kind, "position": n.position, "parent": n.parent,
                "children": [], "branch_probability": n.branch_probability, "duration": n.duration,
                "segment_length": None, "target": n.target, "anchor": n.anchor, "depth": n.depth}

    def add_path(pos, parent, prob, seg, depth) -> int:
        nonlocal next_id
        nid = next_id
        next_id += 1
        new[nid] = {"id": nid, "kind": PATH, "position": (float(pos[0]), float(pos[1])),
                    "parent": parent, "children": [], "branch_probability": prob, "duration": None,
                    "segment_length": seg, "target": None, "anchor": None, "depth": depth}
        new[parent]["children"].append(nid)
        return nid

    def attach(prev: int, child: TreeNode) -> None:
        new[child.id] = copy(child)
        new[child.id]["parent"] = prev
        new[prev]["children"].append(child.id)

    def chain(parent: int, points: list[np.ndarray], child: TreeNode, first_prob: float) -> None:
        """Path nodes at points[:-1]; points[-1] is the child's position."""
        prev, prob = parent, first_prob
        for a, b in zip(points, points[1:]):
            prev = add_path(a, prev, prob, float(np.hypot(*(b - a))), new[parent]["depth"])
            prob = 1.0
        attach(prev, child)

    root = tree.nodes[tree.root]
    new[root.id] = copy(root)
    kids = [tree.nodes[c] for c in root.children]
    lines = {c.id: branch_polyline(graph, root.position, root.anchor, c.position, c.anchor) for c in kids}
    first_legs = [float(np.hypot(*(pts[1] - pts[0]))) for pts in lines.values() if len(pts) > 1]
    step = min([max_segment_len] + first_legs)
    if kids:
        new[root.id]["segment_length"] = step
    for c in kids:
        pts = lines[c.id]
        if len(pts) == 1:
            attach(root.id, c)
            continue
        a, b = pts[0], pts[1]
        leg = float(np.hypot(*(b - a)))
        rest = pts[1:] if leg - step <= _EPS else [a + (b - a) * (step / leg)] + pts[1:]
        rest = _subdivide(rest, max_segment_len)
        # the root covers the first step; path nodes start where it ends
        chain_start = root.id
        prob = c.branch_probability
        for p, q in zip(rest, rest[1:]):
            chain_start = add_path(p, chain_start, prob, float(np.hypot(*(q - p))), 0)
            prob = 1.0
        attach(chain_start, c)

    for u in tree.order():
        node = tree.nodes[u]
        if node.kind != INTERACTION:
            continue
        for cid in node.children:
            child = tree.nodes[cid]
            pts = branch_polyline(graph, node.position, node.anchor, child.position, child.anchor)
            if len(pts) == 1:
                attach(u, child)
            else:
                chain(u, _subdivide(pts, max_segment_len), child, child.branch_probability)

    nodes = {}
    for nid, d in new.items():
        d = dict(d)
        d["children"] = tuple(d["children"])
        nodes[nid] = TreeNode(**d)
    return InteractionTree(nodes, tree.root, tree.depth, dict(tree.provenance),
                           dict(tree.raw_probability), True, tree.warnings)


def enumerate_sequences(tree: InteractionTree) -> list[tuple[tuple[int, ...], float]]:
    """Every root-to-leaf interaction sequence with its joint probability,
    most probable first."""
    out = []
    stack = [(tree.root, (), 1.0)]
    while stack:
        u, seq, prob = stack.pop()
        node = tree.nodes[u]
        if node.kind == INTERACTION:
            seq, prob = seq + (u,), prob * node.branch_probability
        if not node.children:
            out.append((seq, prob))
        for c in node.children:
            stack.append((c, seq, prob))
    out.sort(key=lambda item: (-item[1], item[0]))
    return out
