import math

import numpy as np
import pytest
from scipy.linalg import expm

from scenetraj.ctmc import (build_generator, distribution_at, distributions, evolve, generator_dump,
                            horizon_of_meaning, steady_state, tv_distance)
from scenetraj.predictor import FixturePredictor
from scenetraj.synthetic import corridor_scene
from scenetraj.tree import INTERACTION, TreeParams, build_tree, enumerate_sequences, ground_paths

from helpers import ode_distribution, random_grounded_tree, saturating_setup


def straight_chain(length=7.0, tau=10.0):
    """Root, one straight segment, one interaction leaf."""
    g = corridor_scene(length, spacing=length, objects=[("sink", length)])
    fx = FixturePredictor.from_entries([{"past": [], "assumed_future": [], "candidates": [
        {"object": "sink", "action": "wash", "probability": 1.0, "duration_s": tau, "reasoning": ""}]}])
    tree = build_tree(g, fx, (0.0, 0.0), params=TreeParams(depth=1))
    return ground_paths(tree, g, max_segment_len=length)


def check_generator(ctmc, tree):
    Q = ctmc.dense()
    assert np.all(np.abs(Q.sum(axis=0)) <= 1e-12)
    off = Q - np.diag(np.diag(Q))
    assert np.all(off >= 0)
    assert np.all(np.triu(off) == 0)  # states in topological order
    for k, s in enumerate(ctmc.states):
        node = tree.nodes[s]
        if not node.children:
            assert np.all(Q[:, k] == 0)
        elif node.kind == INTERACTION:
            assert abs(-Q[k, k] - 1.0 / node.duration) <= 1e-12


def test_generator_invariants_random_trees():
    rng = np.random.default_rng(1)
    for _ in range(30):
        tree = random_grounded_tree(rng)
        check_generator(build_generator(tree, float(rng.uniform(0.5, 2.0))), tree)


def test_generator_invariants_built_tree():
    g, fx = saturating_setup()
    tree = ground_paths(build_tree(g, fx, (0.0, 0.0)), g)
    check_generator(build_generator(tree), tree)


def test_requires_grounded_tree():
    g, fx = saturating_setup()
    with pytest.raises(ValueError):
        build_generator(build_tree(g, fx, (0.0, 0.0)))


def test_walking_rate_is_speed_over_length():
    tree = straight_chain(7.0)
    ctmc = build_generator(tree, 1.4)
    assert ctmc.dense()[1, 0] == pytest.approx(0.2, abs=1e-15)


def test_analytic_survival():
    ctmc = build_generator(straight_chain(7.0), 1.4)
    for t in (1.0, 5.0, 10.0):
        assert distribution_at(ctmc, t).p[0] == pytest.approx(math.exp(-0.2 * t), abs=1e-12)
    assert horizon_of_meaning(ctmc, 0.5) == pytest.approx(math.log(2) / 0.2, abs=0.01)


def test_uniformization_matches_expm():
    rng = np.random.default_rng(2)
    for _ in range(10):
        tree = random_grounded_tree(rng)
        ctmc = build_generator(tree, 1.4)
        for t in (0.3, 7.0, 90.0):
            want = expm(ctmc.dense() * t) @ ctmc.initial()
            assert np.abs(distribution_at(ctmc, t).p - want).max() <= 1e-9


def test_uniformization_matches_ode():
    rng = np.random.default_rng(3)
    tree = random_grounded_tree(rng)
    ctmc = build_generator(tree, 1.0)
    times = np.array([0.5, 2.0, 20.0, 55.0])
    assert np.abs(distributions(ctmc, times) - ode_distribution(ctmc.dense(), ctmc.initial(), times)).max() < 1e-6


def test_distributions_any_order():
    rng = np.random.default_rng(4)
    ctmc = build_generator(random_grounded_tree(rng))
    times = [30.0, 0.0, 5.0, 5.0, 12.5]
    got = distributions(ctmc, times)
    for k, t in enumerate(times):
        assert np.abs(got[k] - distribution_at(ctmc, t).p).max() <= 1e-10


def test_time_zero_and_negative():
    ctmc = build_generator(straight_chain())
    assert distribution_at(ctmc, 0.0).p.tolist() == [1.0, 0.0]
    with pytest.raises(ValueError):
        distribution_at(ctmc, -1.0)
    with pytest.raises(ValueError):
        evolve(ctmc, ctmc.initial(), -0.1)


def test_steady_state_is_sequence_probability():
    rng = np.random.default_rng(5)
    for _ in range(20):
        tree = random_grounded_tree(rng)
        ctmc = build_generator(tree)
        ss = steady_state(ctmc).p
        want = {seq[-1]: p for seq, p in enumerate_sequences(tree)}
        for k, s in enumerate(ctmc.states):
            assert ss[k] == pytest.approx(want.get(s, 0.0), abs=1e-12)
        assert np.abs(ctmc.Q @ ss).max() <= 1e-12


def test_long_run_approaches_steady_state():
    rng = np.random.default_rng(6)
    ctmc = build_generator(random_grounded_tree(rng))
    assert tv_distance(distribution_at(ctmc, 5000.0), steady_state(ctmc)) < 1e-6


def test_tv_distance():
    assert tv_distance([1, 0], [0, 1]) == 1.0
    assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
    with pytest.raises(ValueError):
        tv_distance([1.0], [0.5, 0.5])


def test_horizon_not_reached():
    ctmc = build_generator(straight_chain(7.0), 1.4)
    assert horizon_of_meaning(ctmc, 0.5, t_max=2.0) is None
    with pytest.raises(ValueError):
        horizon_of_meaning(ctmc, 0.0)


def test_no_interaction_times_bypasses_inner_interactions():
    g, fx = saturating_setup()
    tree = ground_paths(build_tree(g, fx, (0.0, 0.0)), g)
    plain = build_generator(tree)
    fast = build_generator(tree, no_interaction_times=True)
    p = distribution_at(fast, 5.0).p
    for k, s in enumerate(fast.states):
        node = tree.nodes[s]
        if node.kind == INTERACTION and node.children:
            # nothing flows in, so the state is never occupied
            inflow = fast.dense()[k].copy()
            inflow[k] = 0.0
            assert np.all(inflow == 0) and p[k] == 0
    assert np.abs(fast.dense().sum(axis=0)).max() <= 1e-12
    # the absorption distribution does not depend on interaction times
    assert np.abs(steady_state(fast).p - steady_state(plain).p).max() <= 1e-12


def test_generator_dump_lists_every_transition():
    ctmc = build_generator(straight_chain())
    dump = generator_dump(ctmc)
    transitions = [e for e in dump["entries"] if e["from"] != e["to"]]
    assert transitions == [{"from": ctmc.states[0], "to": ctmc.states[1], "rate": pytest.approx(0.2)}]
