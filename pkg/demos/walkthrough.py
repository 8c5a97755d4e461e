"""One prediction on the sample apartment, step by step.

Someone has just washed their hands at the kitchen sink. What will they do
next, and where will they be over the next minute?

    python3 demos/walkthrough.py
"""
from pathlib import Path

import numpy as np

import scenetraj
from scenetraj.ctmc import build_generator, distribution_at, horizon_of_meaning, steady_state
from scenetraj.dsg import load_scene_graph
from scenetraj.predictor import FixturePredictor, PastInteraction, PredictorConfig
from scenetraj.spatial import SpatioTemporalDistribution, top_n_trajectories
from scenetraj.tree import TreeParams, build_tree, enumerate_sequences, ground_paths

DATA = Path(scenetraj.__file__).parent / "data"


def main():
    graph = load_scene_graph(DATA / "apartment.json")
    predictor = FixturePredictor.load(DATA / "apartment_fixture.json")

    print("== the scene, as the predictor sees it ==")
    print(graph.describe("semantic"))

    # 1. interaction tree: next two interactions, up to 6 candidates each
    sink = graph.resolve_object("sink_1")
    past = [PastInteraction(sink, "wash hands", 12.0)]
    start = graph.position(sink)
    tree = build_tree(graph, predictor, start, past, TreeParams(width=6, depth=2),
                      config=PredictorConfig(granularity="semantic"))
    print(f"\n== interaction tree: {len(tree.interaction_nodes())} interaction nodes ==")
    for seq, p in enumerate_sequences(tree)[:5]:
        steps = " -> ".join(f"{graph.nodes[tree.nodes[u].target].label} ({tree.provenance[u].action})"
                            for u in seq[1:])
        print(f"  {p:6.3f}  {steps}")

    # 2. walking paths on the place graph become chains of short segments
    grounded = ground_paths(tree, graph, max_segment_len=1.0)
    ctmc = build_generator(grounded, v_walk=1.4)
    print(f"\n== chain: {ctmc.n} states ==")

    # 3. where is the probability mass as time goes on?
    dist = SpatioTemporalDistribution.from_tree(grounded, ctmc, sigma=0.5)
    # rooms are square cells here, so each state belongs to the nearest room centre
    rooms = graph.layer("room")
    centres = np.array([graph.position(r.id) for r in rooms])
    owner = [rooms[int(np.argmin(np.hypot(*(centres - grounded.nodes[s].position).T)))].label
             for s in ctmc.states]
    for t in (0, 5, 15, 30, 60):
        p = distribution_at(ctmc, t).p
        mass = {}
        for k, room in enumerate(owner):
            mass[room] = mass.get(room, 0.0) + p[k]
        parts = ", ".join(f"{r} {m:.2f}" for r, m in sorted(mass.items(), key=lambda kv: -kv[1]) if m > 0.01)
        print(f"  t={t:>2d} s  {parts}")

    hz = horizon_of_meaning(ctmc, 0.5)
    print(f"\nthe distribution is within TV 0.5 of its end state after {hz:.1f} s")
    ss = steady_state(ctmc).p
    print(f"most likely final state holds {ss.max():.2f} of the mass")

    # 4. a handful of concrete trajectories
    print("\n== top trajectories (position every 10 s) ==")
    for traj in top_n_trajectories(grounded, 3, 1.4, dt=1.0, horizon=60.0):
        pts = "  ".join(f"({x:4.1f},{y:4.1f})" for x, y in traj.positions[::10])
        print(f"  w={traj.weight:.3f}  {pts}")

    here = np.asarray(start)
    print(f"\ndensity at the sink now {dist.density(here, 0.0):.3f}, after 30 s {dist.density(here, 30.0):.4f}")


if __name__ == "__main__":
    main()
