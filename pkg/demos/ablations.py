"""What the interaction times buy.

A corridor with two plausible plans from x = 20 m: open the cupboard 5 m
ahead (p 0.6, about 10 s) and then walk a long way to a desk, or sit on the
sofa behind (p 0.4) and then switch on a lamp. The person actually opens
the cupboard and then heads for the desk.

Three predictors share the same tree:

* the chain with interaction times (the full model),
* the chain that skips interaction times, so people walk straight through,
* the deterministic walk: the same sequences played at fixed speed and fixed
  durations, scored with a KDE over trajectories.

We score them on the true future while varying how long the person really
spends at the cupboard, and we vary the mixture width as well.

    python3 demos/ablations.py
"""
from scenetraj.config import RunConfig
from scenetraj.ctmc import build_generator
from scenetraj.eval.harness import predict
from scenetraj.eval.metrics import WINDOWS, nll_mixture, nll_samples, window_label, windowed_mean
from scenetraj.predictor import FixturePredictor
from scenetraj.spatial import SpatioTemporalDistribution, deterministic_walk_distribution, sample_times
from scenetraj.synthetic import corridor_scene, scripted_record


def ablation_scenario(dwell: float):
    def cand(obj, action, p, seconds):
        return {"object": obj, "action": action, "probability": p, "duration_s": seconds, "reasoning": ""}

    graph = corridor_scene(100, objects=[("cupboard", 25), ("desk", 95), ("sofa", 15), ("lamp", 10)])
    fixture = FixturePredictor.from_entries([
        {"past": [], "assumed_future": [],
         "candidates": [cand("cupboard", "open", 0.6, 10), cand("sofa", "sit", 0.4, 10)]},
        {"past": [], "assumed_future": ["cupboard:open"], "candidates": [cand("desk", "work", 1.0, 60)]},
        {"past": [], "assumed_future": ["sofa:sit"], "candidates": [cand("lamp", "switch", 1.0, 60)]},
    ])
    # what actually happens: cupboard for `dwell` seconds, then the desk
    record = scripted_record(graph, (20.0, 0.0), [("obj_000", "open", dwell), ("obj_001", "work", 60.0)])
    return graph, fixture, record


def scores(dwell: float, sigma: float = 0.5) -> dict[str, list[float]]:
    graph, fixture, record = ablation_scenario(dwell)
    cfg = RunConfig(sigma=sigma)
    times = sample_times(cfg.dt, cfg.horizon)[1:]
    gt = record.position_at(times)
    pred = predict(graph, fixture, (20.0, 0.0), [], cfg, no_interaction_times=False)
    fast = build_generator(pred.grounded, cfg.v_walk, no_interaction_times=True)
    skip = SpatioTemporalDistribution.from_tree(pred.grounded, fast, sigma)
    walk = deterministic_walk_distribution(pred.grounded, cfg.n_trajectories, cfg.v_walk, cfg.dt, cfg.horizon)
    return {
        "chain": windowed_mean(nll_mixture(pred.distribution, times, gt), times),
        "chain, no times": windowed_mean(nll_mixture(skip, times, gt), times),
        "deterministic walk": windowed_mean(nll_samples(walk, times, gt, weighted=True), times),
    }


def table(title: str, rows: dict[str, list[float]]) -> None:
    print(f"\n{title}")
    print("  " + " " * 20 + "".join(f"{window_label(w):>9s}" for w in WINDOWS))
    for name, vals in rows.items():
        print(f"  {name:20s}" + "".join(f"{v:9.2f}" for v in vals))


def main():
    print("NLL of the true future per window (lower is better)")
    for dwell in (7.0, 10.0, 13.0):
        table(f"cupboard dwell {dwell:g} s (predicted 10 s)", scores(dwell))

    print("\nwithout interaction times the chain has the person leave the cupboard at once,")
    print("so it loses track from the 10 s mark on; the deterministic walk commits to one")
    print("schedule and pays whenever the real dwell differs from it.")

    rows = {f"sigma {s:g} m": scores(10.0, s)["chain"] for s in (0.25, 0.5, 1.0)}
    table("mixture width, dwell 10 s", rows)


if __name__ == "__main__":
    main()
