"""Hierarchical scene graphs: objects, places and rooms.

The places layer and its intra-layer edges describe traversable free space;
every spatial query in the package (paths, anchoring, closest instances)
runs over it.
"""
from __future__ import annotations

import heapq
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

LAYERS = ("object", "place", "room")
SCENE_TEXT_VERSION = "v1"


class SceneGraphError(ValueError):
    """Base class for scene-graph problems."""


class SchemaError(SceneGraphError):
    pass


class ValidationError(SceneGraphError):
    def __init__(self, message: str, components: list[list[str]] | None = None):
        super().__init__(message)
        self.components = components or []


@dataclass(frozen=True)
class SceneNode:
    id: str
    layer: str
    semantic_class: str
    label: str
    position: tuple[float, float]


@dataclass(frozen=True)
class PathResult:
    nodes: tuple[str, ...]
    length: float


@dataclass(frozen=True, eq=False)
class SceneGraph:
    """Immutable scene graph. Build it with :func:`load_scene_graph` or
    :meth:`from_parts`; the constructor does no validation."""

    name: str
    nodes: Mapping[str, SceneNode]
    edges: tuple[tuple[str, str], ...]
    units: str = "m"
    # derived lookups, filled by from_parts
    place_adjacency: Mapping[str, tuple[tuple[str, float], ...]] = field(default_factory=dict, repr=False)
    object_room: Mapping[str, str] = field(default_factory=dict, repr=False)
    object_anchor: Mapping[str, str] = field(default_factory=dict, repr=False)
    room_pairs: tuple[tuple[str, str], ...] = ()

    @classmethod
    def from_parts(cls, name: str, nodes: Iterable[SceneNode], edges: Iterable[tuple[str, str]]) -> "SceneGraph":
        node_map = {}
        for node in nodes:
            if node.id in node_map:
                raise SchemaError(f"duplicate node id {node.id!r}")
            node_map[node.id] = node
        edge_list = []
        seen = set()
        for a, b in edges:
            for end in (a, b):
                if end not in node_map:
                    raise SchemaError(f"edge ({a!r}, {b!r}) references unknown node {end!r}")
            if a == b:
                raise SchemaError(f"self-loop edge on node {a!r}")
            key = (a, b) if a < b else (b, a)
            if key not in seen:
                seen.add(key)
                edge_list.append(key)
        node_map = _fill_room_positions(node_map, edge_list)
        _validate_nodes(node_map)

        adjacency: dict[str, list[tuple[str, float]]] = {
            n.id: [] for n in node_map.values() if n.layer == "place"
        }
        object_rooms: dict[str, list[str]] = defaultdict(list)
        room_pairs = set()
        for a, b in edge_list:
            la, lb = node_map[a].layer, node_map[b].layer
            if la == lb == "place":
                d = _dist(node_map[a].position, node_map[b].position)
                if not d > 0:
                    raise ValidationError(f"place edge ({a!r}, {b!r}) has zero length")
                adjacency[a].append((b, d))
                adjacency[b].append((a, d))
            elif la == lb == "room":
                room_pairs.add((a, b))
            elif {la, lb} == {"object", "room"}:
                obj, room = (a, b) if la == "object" else (b, a)
                object_rooms[obj].append(room)

        objects = sorted(n.id for n in node_map.values() if n.layer == "object")
        for obj in objects:
            rooms = object_rooms.get(obj, [])
            if len(rooms) != 1:
                raise ValidationError(
                    f"object {obj!r} must have exactly one room edge, found {len(rooms)}"
                )
        if not adjacency:
            raise ValidationError("scene has no place nodes")
        components = _components(adjacency)
        if len(components) > 1:
            raise ValidationError(
                f"places layer is disconnected into {len(components)} components", components
            )

        graph = cls(
            name=name,
            nodes=dict(sorted(node_map.items())),
            edges=tuple(edge_list),
            place_adjacency={k: tuple(sorted(v)) for k, v in sorted(adjacency.items())},
            object_room={obj: object_rooms[obj][0] for obj in objects},
            room_pairs=tuple(sorted(room_pairs)),
        )
        anchors = {obj: graph.nearest_place(node_map[obj].position) for obj in objects}
        object.__setattr__(graph, "object_anchor", anchors)
        return graph

    # -- basic lookups -----------------------------------------------------

    def layer(self, layer: str) -> list[SceneNode]:
        return [n for n in self.nodes.values() if n.layer == layer]

    @property
    def places(self) -> list[str]:
        return list(self.place_adjacency)

    def position(self, node_id: str) -> np.ndarray:
        return np.asarray(self.nodes[node_id].position, dtype=float)

    def _require_place(self, node_id: str) -> None:
        node = self.nodes.get(node_id)
        if node is None or node.layer != "place":
            raise ValueError(f"{node_id!r} is not a place node")

    # -- spatial queries ---------------------------------------------------

    def nearest_place(self, position) -> str:
        """Closest place node by Euclidean distance; ties go to the smaller id."""
        x, y = float(position[0]), float(position[1])
        best, best_d = None, math.inf
        for pid in self.place_adjacency:  # sorted ids, so strict < keeps the smallest
            px, py = self.nodes[pid].position
            d = math.hypot(px - x, py - y)
            if d < best_d:
                best, best_d = pid, d
        return best

    def geodesic_distances(self, source: str) -> dict[str, float]:
        """Dijkstra distances from ``source`` to every place."""
        dist, _ = self._dijkstra(source)
        return dist

    def _dijkstra(self, source: str, target: str | None = None):
        self._require_place(source)
        dist = {source: 0.0}
        prev: dict[str, str] = {}
        heap = [(0.0, source)]
        done = set()
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            if u == target:
                break
            for v, w in self.place_adjacency[u]:
                nd = d + w
                if nd < dist.get(v, math.inf):
                    dist[v] = nd
                    prev[v] = u
                    heapq.heappush(heap, (nd, v))
        return dist, prev

    def shortest_path(self, start: str, goal: str) -> PathResult:
        self._require_place(start)
        self._require_place(goal)
        if start == goal:
            return PathResult((start,), 0.0)
        dist, prev = self._dijkstra(start, goal)
        if goal not in dist:
            raise RuntimeError(f"place {goal!r} unreachable from {start!r}")
        path = [goal]
        while path[-1] != start:
            path.append(prev[path[-1]])
        path.reverse()
        return PathResult(tuple(path), path_length(self, path))

    def object_distance(self, source: str, obj: str, geodesic: bool = True,
                        _cache: dict | None = None) -> float:
        if not geodesic:
            return _dist(self.nodes[source].position, self.nodes[obj].position)
        dist = _cache if _cache is not None else self.geodesic_distances(source)
        return dist[self.object_anchor[obj]]

    def instances_of(self, semantic_class: str) -> list[str]:
        return [n.id for n in self.nodes.values()
                if n.layer == "object" and n.semantic_class == semantic_class]

    def k_nearest_instances(self, semantic_class: str, source: str, k: int,
                            geodesic: bool = True) -> list[tuple[str, float]]:
        """Up to ``k`` objects of a class, closest first (distance, then id)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        self._require_place(source)
        candidates = self.instances_of(semantic_class)
        if not candidates:
            return []
        cache = self.geodesic_distances(source) if geodesic else None
        ranked = sorted(
            ((self.object_distance(source, obj, geodesic, cache), obj) for obj in candidates)
        )
        return [(obj, d) for d, obj in ranked[:k]]

    # -- text ----------------------------------------------------------------

    def resolve_object(self, name: str) -> str | None:
        """Object id for an id or instance label; None if neither matches."""
        node = self.nodes.get(name)
        if node is not None and node.layer == "object":
            return name
        for n in self.nodes.values():
            if n.layer == "object" and n.label == name:
                return n.id
        return None

    def room_label(self, room: str) -> str:
        return self.nodes[room].label

    def describe(self, granularity: str = "semantic") -> str:
        return describe_scene(self, granularity)


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def path_length(graph: SceneGraph, path: Iterable[str]) -> float:
    pts = [graph.nodes[p].position for p in path]
    return math.fsum(_dist(a, b) for a, b in zip(pts, pts[1:]))


def _components(adjacency: Mapping[str, Iterable[tuple[str, float]]]) -> list[list[str]]:
    seen = set()
    comps = []
    for start in sorted(adjacency):
        if start in seen:
            continue
        stack, comp = [start], []
        seen.add(start)
        while stack:
            u = stack.pop()
            comp.append(u)
            for v, _ in adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def _fill_room_positions(nodes: dict[str, SceneNode], edges) -> dict[str, SceneNode]:
    """Rooms without a position get the centroid of their attached places
    (or objects if no places are attached)."""
    missing = [n.id for n in nodes.values() if n.layer == "room" and n.position is None]
    if not missing:
        return nodes
    members: dict[str, dict[str, list]] = {r: {"place": [], "object": []} for r in missing}
    for a, b in edges:
        for room, other in ((a, b), (b, a)):
            if room in members and nodes[other].layer in ("place", "object"):
                members[room][nodes[other].layer].append(nodes[other].position)
    out = dict(nodes)
    for room in missing:
        pts = members[room]["place"] or members[room]["object"]
        if not pts:
            raise ValidationError(f"room {room!r} has no position and no attached places or objects")
        c = np.mean(np.asarray(pts, dtype=float), axis=0)
        n = nodes[room]
        out[room] = SceneNode(n.id, n.layer, n.semantic_class, n.label, (float(c[0]), float(c[1])))
    return out


def _validate_nodes(nodes: Mapping[str, SceneNode]) -> None:
    labels: dict[str, str] = {}
    for node in nodes.values():
        if node.layer not in LAYERS:
            raise SchemaError(f"node {node.id!r} has unknown layer {node.layer!r}")
        if node.layer in ("object", "room") and not node.semantic_class:
            raise SchemaError(f"{node.layer} node {node.id!r} has an empty class")
        if not node.label:
            raise SchemaError(f"node {node.id!r} has an empty label")
        if node.label in labels:
            raise ValidationError(
                f"label {node.label!r} used by both {labels[node.label]!r} and {node.id!r}"
            )
        labels[node.label] = node.id
        if not all(math.isfinite(c) for c in node.position):
            raise ValidationError(f"node {node.id!r} has a non-finite position")


def _parse_node(raw) -> SceneNode:
    if not isinstance(raw, dict):
        raise SchemaError(f"node entry must be an object, got {raw!r}")
    try:
        node_id = raw["id"]
        layer = raw["layer"]
    except KeyError as exc:
        raise SchemaError(f"node {raw!r} is missing field {exc.args[0]!r}") from None
    if not isinstance(node_id, str) or not node_id:
        raise SchemaError(f"node id must be a non-empty string: {raw!r}")
    label = raw.get("label", node_id)
    cls_name = raw.get("class", "")
    if not isinstance(label, str) or not isinstance(cls_name, str):
        raise SchemaError(f"node {node_id!r}: label and class must be strings")
    pos = raw.get("pos")
    if pos is None:
        if layer != "room":
            raise SchemaError(f"node {node_id!r} is missing field 'pos'")
        position = None
    else:
        if (not isinstance(pos, (list, tuple)) or len(pos) not in (2, 3)
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in pos)):
            raise SchemaError(f"node {node_id!r}: 'pos' must be [x, y] or [x, y, z]")
        position = (float(pos[0]), float(pos[1]))  # z dropped: floor-plane positions
    return SceneNode(node_id, layer, cls_name, label, position)


def scene_graph_from_dict(document: Mapping) -> SceneGraph:
    if not isinstance(document, Mapping):
        raise SchemaError("scene document must be a JSON object")
    for key in ("nodes", "edges"):
        if key not in document:
            raise SchemaError(f"scene document is missing {key!r}")
    if not isinstance(document["nodes"], list) or not isinstance(document["edges"], list):
        raise SchemaError("'nodes' and 'edges' must be lists")
    nodes = [_parse_node(raw) for raw in document["nodes"]]
    edges = []
    for raw in document["edges"]:
        if (not isinstance(raw, (list, tuple)) or len(raw) != 2
                or not all(isinstance(e, str) for e in raw)):
            raise SchemaError(f"edge must be a pair of node ids, got {raw!r}")
        edges.append((raw[0], raw[1]))
    return SceneGraph.from_parts(str(document.get("name", "scene")), nodes, edges)


def load_scene_graph(source) -> SceneGraph:
    """Load a scene graph from a path, a JSON string or an already-parsed dict."""
    if isinstance(source, Mapping):
        return scene_graph_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"scene file is not valid JSON: {exc}") from exc
    return scene_graph_from_dict(document)


def scene_graph_to_dict(graph: SceneGraph) -> dict:
    nodes = []
    for n in graph.nodes.values():
        entry = {"id": n.id, "layer": n.layer, "label": n.label, "pos": list(n.position)}
        if n.semantic_class:
            entry["class"] = n.semantic_class
        nodes.append(entry)
    return {"name": graph.name, "nodes": nodes, "edges": [list(e) for e in graph.edges]}


def _plural(word: str, n: int) -> str:
    return word if n == 1 else word + "s"


def room_connections(graph: SceneGraph) -> list[tuple[str, str]]:
    """Undirected room adjacency: explicit room-room edges plus rooms whose
    places share a place edge."""
    place_room = {}
    for a, b in graph.edges:
        la, lb = graph.nodes[a].layer, graph.nodes[b].layer
        if {la, lb} == {"place", "room"}:
            place, room = (a, b) if la == "place" else (b, a)
            place_room.setdefault(place, room)
    pairs = set(graph.room_pairs)
    for u, nbrs in graph.place_adjacency.items():
        for v, _ in nbrs:
            ru, rv = place_room.get(u), place_room.get(v)
            if ru and rv and ru != rv:
                pairs.add((ru, rv) if ru < rv else (rv, ru))
    return sorted(pairs)


def describe_scene(graph: SceneGraph, granularity: str = "semantic") -> str:
    if granularity not in ("semantic", "instance"):
        raise ValueError(f"unknown granularity {granularity!r}")
    rooms = sorted(n.id for n in graph.layer("room"))
    names = [graph.room_label(r) for r in rooms]
    parts = [f"In the environment, there are the rooms: {', '.join(names)}."]
    pairs = room_connections(graph)
    if pairs:
        joined = ", ".join(f"{graph.room_label(a)} - {graph.room_label(b)}" for a, b in pairs)
        parts.append(f"room connections: {joined}.")
    else:
        parts.append("room connections: none.")
    parts.append("These objects are in the environment:")

    by_room: dict[str, list[str]] = defaultdict(list)
    for obj, room in graph.object_room.items():
        by_room[room].append(obj)
    for room in rooms:
        objs = sorted(by_room.get(room, []))
        name = graph.room_label(room)
        if granularity == "instance":
            for obj in objs:
                node = graph.nodes[obj]
                parts.append(f"In the {name}, there is {node.label} ({node.semantic_class}).")
        else:
            counts: dict[str, int] = defaultdict(int)
            for obj in objs:
                counts[graph.nodes[obj].semantic_class] += 1
            for cls_name in sorted(counts):
                n = counts[cls_name]
                verb = "is" if n == 1 else "are"
                parts.append(f"In the {name}, there {verb} {n} {_plural(cls_name, n)}.")
    return " ".join(parts)
