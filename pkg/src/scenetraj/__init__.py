"""Long-horizon human position prediction over 3D scene graphs.

Interaction sequences predicted over a scene graph are grounded into a
continuous-time Markov chain whose state distribution induces a Gaussian
mixture over space and time.
"""
__version__ = "0.1.0"

from .dsg import SceneGraph, describe_scene, load_scene_graph  # noqa: E402
from .predictor import FixturePredictor, InteractionCandidate, PastInteraction  # noqa: E402
from .tree import TreeParams, build_tree, ground_paths  # noqa: E402
from .ctmc import build_generator, distribution_at, horizon_of_meaning, steady_state  # noqa: E402
from .spatial import SpatioTemporalDistribution, top_n_trajectories  # noqa: E402

__all__ = [
    "SceneGraph", "describe_scene", "load_scene_graph",
    "FixturePredictor", "InteractionCandidate", "PastInteraction",
    "TreeParams", "build_tree", "ground_paths",
    "build_generator", "distribution_at", "horizon_of_meaning", "steady_state",
    "SpatioTemporalDistribution", "top_n_trajectories",
]
