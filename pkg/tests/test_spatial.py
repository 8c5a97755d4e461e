import csv
import io
import math

import numpy as np
import pytest

from scenetraj.ctmc import build_generator, distribution_at
from scenetraj.predictor import FixturePredictor
from scenetraj.spatial import (SpatioTemporalDistribution, density, density_grid, deterministic_walk_distribution,
                               from_keyframes, mixture_density, sample_times, top_n_trajectories,
                               write_density_csv, write_trajectories_csv)
from scenetraj.synthetic import corridor_scene
from scenetraj.tree import TreeParams, build_tree, enumerate_sequences, ground_paths

from helpers import random_grounded_tree

PEAK = 1.0 / (2 * math.pi * 0.25)


def fixture(*entries):
    return FixturePredictor.from_entries([
        {"past": [], "assumed_future": fut, "candidates": [
            {"object": t, "action": a, "probability": p, "duration_s": d, "reasoning": ""} for t, a, p, d in cands]}
        for fut, cands in entries])


def chain_tree(depth=2):
    """7 m walk to a sink, 10 s there, then on to a fridge 5 m further."""
    g = corridor_scene(15, objects=[("sink", 7), ("fridge", 12)])
    fx = fixture(([], [("sink", "wash", 1.0, 10)]), (["sink:wash"], [("fridge", "open", 1.0, 5)]))
    return g, ground_paths(build_tree(g, fx, (0.0, 0.0), params=TreeParams(depth=depth)), g)


def two_leaf_tree():
    g = corridor_scene(10, objects=[("sink", 3), ("fridge", 8)])
    fx = fixture(([], [("sink", "wash", 0.7, 10), ("fridge", "open", 0.3, 5)]))
    return g, ground_paths(build_tree(g, fx, (5.0, 0.0), params=TreeParams(depth=1)), g)


def test_peak_density_at_root():
    _, tree = chain_tree()
    dist = SpatioTemporalDistribution.from_tree(tree, build_generator(tree), 0.5)
    assert density(dist, (0.0, 0.0), 0.0) == pytest.approx(PEAK, rel=1e-12)
    assert dist.density((0.0, 0.0), 0.0) == pytest.approx(0.63662, abs=1e-5)


def test_far_field_is_tiny():
    _, tree = chain_tree()
    dist = SpatioTemporalDistribution.from_tree(tree, build_generator(tree), 0.5)
    assert dist.density((0.0, 50.0), 0.0) < 1e-300


def test_weights_equal_chain_distribution():
    _, tree = chain_tree()
    ctmc = build_generator(tree)
    dist = SpatioTemporalDistribution.from_tree(tree, ctmc, 0.5)
    for t in (0.0, 3.3, 17.0, 60.0):
        assert np.array_equal(dist.weights(t), distribution_at(ctmc, t).p)


def test_density_integrates_to_one():
    rng = np.random.default_rng(0)
    for _ in range(5):
        tree = random_grounded_tree(rng)
        dist = SpatioTemporalDistribution.from_tree(tree, build_generator(tree), float(rng.uniform(0.3, 1.0)))
        lo = dist.positions.min(0) - 6 * dist.sigma
        hi = dist.positions.max(0) + 6 * dist.sigma
        xs = np.linspace(lo[0], hi[0], 400)
        ys = np.linspace(lo[1], hi[1], 400)
        grid = density_grid(dist, xs, ys, [float(rng.uniform(0, 40))])[0]
        assert np.trapezoid(np.trapezoid(grid, xs, axis=1), ys) == pytest.approx(1.0, abs=1e-3)


def test_density_is_continuous():
    rng = np.random.default_rng(1)
    tree = random_grounded_tree(rng)
    dist = SpatioTemporalDistribution.from_tree(tree, build_generator(tree), 0.5)
    # the gradient of a unit-mass Gaussian mixture is bounded by the peak over sigma
    bound = PEAK / 0.5
    for xy in rng.uniform(-10, 10, size=(20, 2)):
        d = 1e-6
        diff = abs(dist.density(xy + [d, 0], 4.0) - dist.density(xy, 4.0))
        assert diff <= bound * d * 1.01


def test_mixture_validation():
    _, tree = chain_tree()
    ctmc = build_generator(tree)
    with pytest.raises(ValueError):
        SpatioTemporalDistribution(ctmc, np.zeros((ctmc.n + 1, 2)))
    with pytest.raises(ValueError):
        SpatioTemporalDistribution.from_tree(tree, ctmc, 0.0)
    with pytest.raises(ValueError):
        density(SpatioTemporalDistribution.from_tree(tree, ctmc), (0, 0), -1.0)
    assert mixture_density(np.zeros((1, 2)), np.ones(1), 1.0, np.zeros((3, 2))).shape == (3,)


# -- trajectories ---------------------------------------------------------------------------------

def test_single_chain_expected_trajectory():
    g, tree = chain_tree(depth=1)
    (traj,) = top_n_trajectories(tree, 5, 1.4)
    assert traj.positions[0].tolist() == [0.0, 0.0]
    assert traj.positions[-1].tolist() == g.position("obj_000").tolist()
    assert traj.weight == 1.0


def test_piecewise_kinematics_by_hand():
    g, tree = chain_tree(depth=2)
    (traj,) = top_n_trajectories(tree, 1, 1.4, dt=1.0, horizon=30.0)
    sink = g.position("obj_000")
    assert np.allclose(traj.at([5.0])[0], sink)
    for t in range(5, 16):
        assert np.allclose(traj.positions[t], sink), t
    assert traj.positions[16, 0] == pytest.approx(7 + 1.4)
    assert np.allclose(traj.positions[-1], g.position("obj_001"))


def test_arc_length_matches_grounded_path():
    g, tree = chain_tree(depth=2)
    (traj,) = top_n_trajectories(tree, 1, 1.4, dt=1.0, horizon=40.0)
    arc = np.hypot(*np.diff(traj.positions, axis=0).T).sum()
    assert arc == pytest.approx(12.0, abs=1.4)


def test_fewer_leaves_than_requested():
    _, tree = two_leaf_tree()
    trajs = top_n_trajectories(tree, 10, 1.4)
    assert len(trajs) == 2
    assert [t.weight for t in trajs] == pytest.approx([0.7, 0.3])
    assert not np.allclose(trajs[0].positions, trajs[1].positions)


def test_deterministic_walk_shares_expected_mode():
    _, tree = chain_tree()
    a = top_n_trajectories(tree, 3, 1.4)
    b = deterministic_walk_distribution(tree, 3, 1.4)
    assert all(np.array_equal(x.positions, y.positions) for x, y in zip(a, b))


def test_sampled_mode_is_seeded():
    _, tree = two_leaf_tree()
    a = top_n_trajectories(tree, 50, 1.4, mode="sampled", seed=3)
    b = top_n_trajectories(tree, 50, 1.4, mode="sampled", seed=3)
    assert all(np.array_equal(x.positions, y.positions) for x, y in zip(a, b))
    share = np.mean([t.sequence == enumerate_sequences(tree)[0][0] for t in a])
    assert 0.4 < share < 0.95
    with pytest.raises(ValueError):
        top_n_trajectories(tree, 1, 1.4, mode="psychic")


def test_no_interaction_times_skips_dwell():
    g, tree = chain_tree(depth=2)
    (traj,) = top_n_trajectories(tree, 1, 1.4, horizon=30.0, no_interaction_times=True)
    assert traj.positions[6, 0] == pytest.approx(7 + 1.4)


def test_sample_times_and_keyframes():
    assert sample_times(1.0, 3.0).tolist() == [0.0, 1.0, 2.0, 3.0]
    traj = from_keyframes([(0.0, (0, 0)), (2.0, (2, 0)), (2.0, (2, 1))], 0.5, 3.0)
    assert traj.positions[-1].tolist() == [2.0, 1.0]
    assert traj.positions[2].tolist() == [1.0, 0.0]


# -- export --------------------------------------------------------------------------------------

def test_density_csv_layout():
    _, tree = two_leaf_tree()
    dist = SpatioTemporalDistribution.from_tree(tree, build_generator(tree))
    buf = io.StringIO()
    write_density_csv(buf, dist, [0.0, 1.0, 2.0], [0.0, 1.0], [0.0, 5.0], comment="manifest=abc")
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# manifest=abc"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["x", "y", "t", "density"]
    assert len(rows) == 1 + 3 * 2 * 2
    assert rows[1][:3] == ["0", "0", "0"] and rows[2][:3] == ["1", "0", "0"] and rows[4][:3] == ["0", "1", "0"]


def test_trajectory_csv():
    _, tree = two_leaf_tree()
    buf = io.StringIO()
    write_trajectories_csv(buf, top_n_trajectories(tree, 2, 1.4, horizon=3.0))
    rows = list(csv.reader(buf.getvalue().splitlines()))
    assert rows[0] == ["rank", "weight", "t", "x", "y"]
    assert len(rows) == 1 + 2 * 4
