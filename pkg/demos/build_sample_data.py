"""Regenerate the sample apartment shipped in ``scenetraj/data``.

The apartment has four 5 m rooms on a 2 x 2 grid. Five people walk through
it along shortest place paths, and a hand-written transition table plays the
part of the language model: for every interaction class it lists what
usually comes next. The table is replayed through a fixture file so the
whole pipeline runs offline and deterministically.

    python3 demos/build_sample_data.py [outdir]
"""
import json
import sys
from pathlib import Path

from scenetraj.dsg import scene_graph_to_dict
from scenetraj.predictor import PastInteraction
from scenetraj.eval.records import split_past_future
from scenetraj.synthetic import grid_scene, scripted_record

ROOMS = ["kitchen", "living room", "bedroom", "bathroom"]
OBJECTS = [
    ("sink", 0, (1.0, 0.6)), ("fridge", 0, (4.2, 0.6)), ("stove", 0, (2.5, 0.5)),
    ("table", 0, (2.5, 3.0)), ("chair", 0, (1.8, 3.0)), ("chair", 0, (3.2, 3.0)),
    ("chair", 0, (2.5, 3.7)), ("chair", 0, (2.5, 2.3)),
    ("sofa", 1, (7.5, 4.3)), ("tv", 1, (7.5, 0.6)), ("table", 1, (7.5, 2.6)),
    ("plant", 1, (9.4, 0.6)), ("shelf", 1, (9.4, 4.4)),
    ("bed", 2, (2.5, 8.6)), ("wardrobe", 2, (0.6, 6.0)), ("desk", 2, (4.3, 9.4)),
    ("chair", 2, (3.8, 9.4)),
    ("sink", 3, (6.0, 9.4)), ("toilet", 3, (9.0, 9.4)), ("shower", 3, (9.4, 6.0)),
]

# class -> likely next (class, action, probability, duration in s)
NEXT = {
    "sink": [("fridge", "take out food", 0.4, 10), ("stove", "cook", 0.3, 60), ("table", "eat", 0.2, 45),
             ("wardrobe", "get dressed", 0.1, 30)],
    "fridge": [("stove", "cook", 0.5, 60), ("table", "eat", 0.3, 45), ("sink", "wash vegetables", 0.2, 20)],
    "stove": [("table", "eat", 0.6, 45), ("sink", "wash dishes", 0.3, 30), ("fridge", "put away food", 0.1, 10)],
    "table": [("sofa", "sit down", 0.4, 60), ("sink", "wash dishes", 0.4, 30), ("tv", "turn on", 0.2, 5)],
    "chair": [("table", "eat", 0.5, 45), ("desk", "work", 0.3, 60), ("sofa", "sit down", 0.2, 60)],
    "sofa": [("tv", "change channel", 0.5, 5), ("fridge", "get a drink", 0.3, 8), ("shelf", "take a book", 0.2, 10)],
    "tv": [("sofa", "sit down", 0.7, 60), ("plant", "water", 0.3, 15)],
    "plant": [("sink", "fill watering can", 0.5, 10), ("sofa", "sit down", 0.5, 60)],
    "shelf": [("sofa", "read", 0.6, 60), ("desk", "read", 0.4, 60)],
    "bed": [("wardrobe", "get dressed", 0.5, 30), ("toilet", "use", 0.3, 60), ("shower", "shower", 0.2, 60)],
    "wardrobe": [("sink", "brush teeth", 0.4, 60), ("fridge", "get breakfast", 0.3, 10), ("desk", "work", 0.3, 60)],
    "desk": [("chair", "sit down", 0.4, 5), ("shelf", "take a book", 0.3, 10), ("fridge", "get a drink", 0.3, 8)],
    "toilet": [("sink", "wash hands", 0.9, 15), ("shower", "shower", 0.1, 60)],
    "shower": [("wardrobe", "get dressed", 0.6, 30), ("sink", "brush teeth", 0.4, 60)],
}

PLANS = [
    ("breakfast", (9.0, 1.0), [(0, "wash hands", 12), (1, "take out food", 8), (3, "eat", 40), (8, "sit down", 60)]),
    ("morning", (2.0, 8.0), [(13, "wake up", 10), (14, "get dressed", 30), (17, "brush teeth", 40),
                             (1, "get breakfast", 10), (3, "eat", 40)]),
    ("evening", (7.0, 3.0), [(8, "sit down", 20), (9, "change channel", 5), (0, "wash dishes", 25),
                             (1, "get a drink", 8), (8, "sit down", 30)]),
    ("study", (3.0, 6.5), [(15, "work", 30), (12, "take a book", 10), (15, "read", 50), (1, "get a drink", 8)]),
    ("chores", (1.0, 2.0), [(11, "water", 15), (0, "fill watering can", 10), (11, "water", 20),
                            (8, "sit down", 45)]),
]


def candidates(cls):
    return [{"object": c, "action": a, "probability": p, "duration_s": d,
             "reasoning": f"often follows {cls}"} for c, a, p, d in NEXT[cls]]


def fixture_entries(graph, past):
    """Root answer for ``past`` plus one answer per assumed first step."""
    last = graph.nodes[past[-1].object].semantic_class if past else "table"
    keys = [f"{p.object}:{p.action}" for p in past]
    entries = [{"past": keys, "assumed_future": [], "candidates": candidates(last)}]
    for c, a, _, _ in NEXT[last]:
        entries.append({"past": keys, "assumed_future": [f"{c}:{a}"], "candidates": candidates(c)})
    return entries


def main(outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    graph = grid_scene(2, 2, room_size=5.0, name="apartment", objects=OBJECTS, room_labels=ROOMS)
    (outdir / "apartment.json").write_text(json.dumps(scene_graph_to_dict(graph), indent=1) + "\n")

    records, entries = [], []
    for name, start, plan in PLANS:
        steps = [(f"obj_{k:03d}", action, dur) for k, action, dur in plan]
        rec = scripted_record(graph, start, steps, rate_hz=5.0, tail=5.0, name=name)
        records.append(rec.to_json())
        split = split_past_future(rec)
        entries += fixture_entries(graph, split.past_for_predictor())
    # a query with nothing observed yet, for the command-line walkthrough
    entries += fixture_entries(graph, [])
    entries += fixture_entries(graph, [PastInteraction("obj_000", "wash hands", 12)])
    unique = {json.dumps([e["past"], e["assumed_future"]]): e for e in entries}
    (outdir / "apartment_records.json").write_text(json.dumps(records) + "\n")
    (outdir / "apartment_fixture.json").write_text(
        json.dumps({"entries": list(unique.values())}, indent=1) + "\n")
    (outdir / "apartment.ini").write_text(
        "[run]\n"
        "scenes = apartment.json\n"
        "predictor = fixture\n"
        "fixture = apartment_fixture.json\n"
        "granularity = semantic\n"
        "width = 6\ndepth = 2\nn_closest = 3\n"
        "v_walk = 1.4\nsigma = 0.5\ndt = 1.0\nhorizon = 60\n"
        "bon = 1, 5, 20\n"
        "seed = 0\n")
    print(f"wrote {len(records)} records and {len(unique)} fixture entries to {outdir}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src/scenetraj/data")
