"""Procedural scene graphs for demos and tests."""
from __future__ import annotations

import numpy as np

from .dsg import SceneGraph, SceneNode

ROOM_TYPES = ("kitchen", "office", "bathroom", "living room", "bedroom", "hallway",
              "storage", "meeting room", "lounge")
OBJECT_CLASSES = ("chair", "table", "sink", "desk", "shelf", "sofa", "fridge",
                  "printer", "plant", "lamp", "cabinet", "tv")


def corridor_scene(length: int = 10, spacing: float = 1.0,
                   objects: list[tuple[str, float]] | None = None,
                   name: str = "corridor") -> SceneGraph:
    """A single straight room: places every ``spacing`` meters along the x axis.

    ``objects`` is a list of (class, x) pairs, placed at y=0.
    """
    n_places = int(round(length / spacing)) + 1
    nodes = [SceneNode("room_0", "room", "corridor", "corridor", (length / 2, 0.0))]
    edges = []
    for i in range(n_places):
        pid = f"place_{i:03d}"
        nodes.append(SceneNode(pid, "place", "", pid, (i * spacing, 0.0)))
        edges.append((pid, "room_0"))
        if i:
            edges.append((f"place_{i - 1:03d}", pid))
    counts: dict[str, int] = {}
    for j, (cls_name, x) in enumerate(objects or []):
        counts[cls_name] = counts.get(cls_name, 0) + 1
        oid = f"obj_{j:03d}"
        nodes.append(SceneNode(oid, "object", cls_name, f"{cls_name}_{counts[cls_name]}", (float(x), 0.0)))
        edges.append((oid, "room_0"))
    return SceneGraph.from_parts(name, nodes, edges)


def grid_scene(rooms_x: int = 3, rooms_y: int = 3, n_rooms: int | None = None,
               room_size: float = 5.0, spacing: float = 1.0, n_objects: int = 40,
               seed: int = 0, name: str = "grid",
               objects: list[tuple[str, int, tuple[float, float]]] | None = None,
               room_labels: list[str] | None = None) -> SceneGraph:
    """Rooms on a grid, each filled with a lattice of places; neighbouring rooms
    are joined through a single doorway edge. Objects are scattered uniformly,
    with repeated classes so that semantic grounding has several instances.

    ``objects`` replaces the random ones with (class, room index, position)
    triples; ``room_labels`` names the rooms in order.
    """
    rng = np.random.default_rng(seed)
    total = rooms_x * rooms_y if n_rooms is None else n_rooms
    if not 1 <= total <= rooms_x * rooms_y:
        raise ValueError("n_rooms must fit in the grid")
    cells = [(i % rooms_x, i // rooms_x) for i in range(total)]
    per_side = int(round(room_size / spacing))
    nodes: list[SceneNode] = []
    edges: list[tuple[str, str]] = []
    place_ids: dict[tuple[int, int, int, int], str] = {}
    for r, (cx, cy) in enumerate(cells):
        rid = f"room_{r:02d}"
        rtype = ROOM_TYPES[r % len(ROOM_TYPES)]
        label = rtype if r < len(ROOM_TYPES) else f"{rtype} {r // len(ROOM_TYPES) + 1}"
        if room_labels:
            rtype = label = room_labels[r]
        ox, oy = cx * room_size, cy * room_size
        nodes.append(SceneNode(rid, "room", rtype, label, (ox + room_size / 2, oy + room_size / 2)))
        for i in range(per_side):
            for j in range(per_side):
                pid = f"place_{r:02d}_{i:02d}_{j:02d}"
                pos = (ox + (i + 0.5) * spacing, oy + (j + 0.5) * spacing)
                nodes.append(SceneNode(pid, "place", "", pid, pos))
                place_ids[(cx, cy, i, j)] = pid
                edges.append((pid, rid))
                if i:
                    edges.append((place_ids[(cx, cy, i - 1, j)], pid))
                if j:
                    edges.append((place_ids[(cx, cy, i, j - 1)], pid))
    mid = per_side // 2
    occupied = set(cells)
    for cx, cy in cells:
        if (cx + 1, cy) in occupied:
            edges.append((place_ids[(cx, cy, per_side - 1, mid)], place_ids[(cx + 1, cy, 0, mid)]))
        if (cx, cy + 1) in occupied:
            edges.append((place_ids[(cx, cy, mid, per_side - 1)], place_ids[(cx, cy + 1, mid, 0)]))
            edges.append((f"room_{cells.index((cx, cy)):02d}", f"room_{cells.index((cx, cy + 1)):02d}"))
        if (cx + 1, cy) in occupied:
            edges.append((f"room_{cells.index((cx, cy)):02d}", f"room_{cells.index((cx + 1, cy)):02d}"))

    if objects is None:
        objects = []
        for k in range(n_objects):
            r = k % total if k < total else int(rng.integers(total))
            cx, cy = cells[r]
            cls_name = OBJECT_CLASSES[int(rng.integers(len(OBJECT_CLASSES)))]
            objects.append((cls_name, r, (cx * room_size + rng.uniform(0.2, room_size - 0.2),
                                          cy * room_size + rng.uniform(0.2, room_size - 0.2))))
    counts: dict[str, int] = {}
    for k, (cls_name, r, pos) in enumerate(objects):
        counts[cls_name] = counts.get(cls_name, 0) + 1
        oid = f"obj_{k:03d}"
        nodes.append(SceneNode(oid, "object", cls_name, f"{cls_name}_{counts[cls_name]}", pos))
        edges.append((oid, f"room_{r:02d}"))
    return SceneGraph.from_parts(name, nodes, edges)


def scripted_record(graph: SceneGraph, start, plan, v_walk: float = 1.4, rate_hz: float = 10.0,
                    tail: float = 0.0, name: str = ""):
    """A record of someone walking the shortest place paths between the
    objects of ``plan`` at constant speed, dwelling at each for its duration.

    ``plan`` holds (object id, action, duration) triples. ``tail`` seconds of
    standing still are appended after the last interaction.
    """
    from .eval.records import RecordedInteraction, TrajectoryRecord
    from .tree import branch_polyline

    frames = [(0.0, np.asarray(start, dtype=float))]
    anchor = graph.nearest_place(start)
    interactions = []
    for obj, action, duration in plan:
        dst = graph.position(obj)
        pts = branch_polyline(graph, frames[-1][1], anchor, dst, graph.object_anchor[obj]) + [dst]
        t = frames[-1][0]
        for a, b in zip(pts, pts[1:]):
            step = float(np.hypot(*(b - a)))
            if step > 0:
                t += step / v_walk
                frames.append((t, b))
        interactions.append(RecordedInteraction(obj, action, t, t + duration))
        frames.append((t + duration, dst))
        anchor = graph.object_anchor[obj]
    if tail > 0:
        frames.append((frames[-1][0] + tail, frames[-1][1]))
    times = np.arange(0.0, frames[-1][0] + 1e-9, 1.0 / rate_hz)
    kt = np.array([f[0] for f in frames])
    kp = np.array([f[1] for f in frames])
    pos = np.column_stack([np.interp(times, kt, kp[:, 0]), np.interp(times, kt, kp[:, 1])])
    return TrajectoryRecord(graph.name, rate_hz, pos, tuple(interactions), 0.0, name)
