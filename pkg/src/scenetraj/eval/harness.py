"""End-to-end prediction and evaluation over trajectory records."""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from ..config import RunConfig
from ..ctmc import Ctmc, build_generator, horizon_of_meaning
from ..dsg import SceneGraph
from ..predictor import GroundTruthPredictor, PastInteraction, PredictorError
from ..spatial import (DiscreteTrajectory, SpatioTemporalDistribution, deterministic_walk_distribution,
                       sample_times, top_n_trajectories)
from ..tree import InteractionTree, build_tree, ground_paths
from . import baselines
from .metrics import (CUMULATIVE_WINDOWS, DENSITY_FLOOR, WINDOWS, bon_ade, interaction_top_k_accuracy,
                      nll_mixture, nll_samples, window_label, windowed_mean)
from .records import RecordError, Split, TrajectoryRecord, split_past_future
from .stats import subset_filter

log = logging.getLogger(__name__)

METHOD_CTMC = "ctmc"
METHOD_DETERMINISTIC = "deterministic"
METHOD_NO_TIMES = "no_interaction_times"


@dataclass(frozen=True, eq=False)
class Prediction:
    tree: InteractionTree
    grounded: InteractionTree
    ctmc: Ctmc
    distribution: SpatioTemporalDistribution

    def trajectories(self, cfg: RunConfig, n: int | None = None) -> list[DiscreteTrajectory]:
        return top_n_trajectories(self.grounded, n or cfg.n_trajectories, cfg.v_walk, cfg.dt, cfg.horizon,
                                  cfg.trajectory_mode, cfg.seed, self.ctmc.no_interaction_times)


def predict(graph: SceneGraph, predictor, start, past: Sequence[PastInteraction], cfg: RunConfig,
            no_interaction_times: bool | None = None) -> Prediction:
    """Tree expansion, path grounding, generator and mixture for one query."""
    if no_interaction_times is None:
        no_interaction_times = cfg.no_interaction_times
    params = cfg.tree_params()
    tree = build_tree(graph, predictor, start, past, params, config=cfg.predictor_config(),
                      max_workers=cfg.max_in_flight)
    grounded = ground_paths(tree, graph, cfg.max_segment_len)
    ctmc = build_generator(grounded, cfg.v_walk, no_interaction_times)
    return Prediction(tree, grounded, ctmc, SpatioTemporalDistribution.from_tree(grounded, ctmc, cfg.sigma))


@dataclass
class MethodResult:
    nll: np.ndarray | None = None
    ade: dict[int, list[float]] = field(default_factory=dict)


@dataclass
class RecordResult:
    name: str
    scene: str
    times: np.ndarray
    methods: dict[str, MethodResult]
    accuracy: dict[tuple[str, str], bool | None]
    horizon: float | None
    walking_at_start: bool
    future_distance: float


def gt_future(split: Split) -> list[tuple[str, str, float]]:
    return [(i.object, i.action, i.duration) for i in split.future_interactions]


def evaluate_record(record: TrajectoryRecord, graph: SceneGraph, predictor, cfg: RunConfig) -> RecordResult:
    """Score one record with the chain, the enabled ablation arms and the baselines."""
    split = split_past_future(record, cfg.horizon)
    start = split.current_position
    times = sample_times(cfg.dt, min(cfg.horizon, split.future_span))[1:]
    if len(times) == 0:
        raise RecordError(f"record {record.name!r} has no future samples")
    gt_xy = split.gt_positions(times)
    ade_times = np.concatenate([[0.0], times])
    ade_xy = split.gt_positions(ade_times)

    if cfg.gt_semantic or cfg.gt_instance:
        predictor = GroundTruthPredictor(graph, gt_future(split))
    pred = predict(graph, predictor, start, split.past_for_predictor(), cfg, no_interaction_times=False)
    n_max = max(cfg.bon)

    def ade_table(trajs):
        return {n: bon_ade(trajs, ade_times, ade_xy, n, WINDOWS, cfg.squared_ade) for n in cfg.bon}

    def chain_trajs(no_times):
        return top_n_trajectories(pred.grounded, n_max, cfg.v_walk, cfg.dt, cfg.horizon,
                                  cfg.trajectory_mode, cfg.seed, no_interaction_times=no_times)

    methods = {METHOD_CTMC: MethodResult(nll_mixture(pred.distribution, times, gt_xy),
                                         ade_table(chain_trajs(False)))}
    if cfg.deterministic_walk:
        trajs = deterministic_walk_distribution(pred.grounded, max(n_max, cfg.n_trajectories), cfg.v_walk,
                                                cfg.dt, cfg.horizon)
        methods[METHOD_DETERMINISTIC] = MethodResult(nll_samples(trajs, times, gt_xy, weighted=True),
                                                     ade_table(trajs))
    if cfg.no_interaction_times:
        ctmc = build_generator(pred.grounded, cfg.v_walk, no_interaction_times=True)
        dist = SpatioTemporalDistribution.from_tree(pred.grounded, ctmc, cfg.sigma)
        methods[METHOD_NO_TIMES] = MethodResult(nll_mixture(dist, times, gt_xy), ade_table(chain_trajs(True)))

    for name in cfg.baselines:
        if name == "constant_velocity":
            trajs = [baselines.constant_velocity(split.past_times, split.past_positions, cfg.horizon, cfg.dt)]
        elif name == "random_walk":
            trajs = baselines.random_walk(graph, start, cfg.horizon, cfg.dt, cfg.baseline_samples,
                                          cfg.seed, cfg.v_walk)
        elif name == "random_goal":
            trajs = baselines.random_goal(graph, start, cfg.horizon, cfg.dt, cfg.baseline_samples,
                                          cfg.seed, cfg.v_walk)
        else:
            raise ValueError(f"unknown baseline {name!r}")
        methods[name] = MethodResult(nll_samples(trajs, times, gt_xy), ade_table(trajs))

    accuracy = interaction_top_k_accuracy(pred.tree, graph, [o for o, _, _ in gt_future(split)])
    horizon = horizon_of_meaning(pred.ctmc, cfg.tv_threshold, cfg.tv_t_max, cfg.dt)
    return RecordResult(record.name, record.scene, times, methods, accuracy, horizon,
                        split.walking_at_start, split.future_distance())


# -- aggregation ---------------------------------------------------------------------

@dataclass
class MetricsReport:
    nll_curve: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]
    nll_windows: dict[str, dict[str, float]]
    ade: dict[str, dict[int, dict[str, float]]]
    accuracy: dict[tuple[str, str], float]
    horizon: tuple[float, int]
    n_records: int
    failures: list[tuple[str, str]]
    subset: str = "all"
    density_floor: float = DENSITY_FLOOR
    records: list[RecordResult] = field(default_factory=list, repr=False)


def _nanmean(values) -> float:
    vals = np.asarray([v for v in values if v is not None and not math.isnan(v)], dtype=float)
    return float(vals.mean()) if len(vals) else math.nan


def aggregate(results: Sequence[RecordResult], failures=(), subset: str = "all") -> MetricsReport:
    methods = sorted({m for r in results for m in r.methods})
    curve, windows, ade = {}, {}, {}
    for m in methods:
        rows = [r for r in results if m in r.methods and r.methods[m].nll is not None]
        if rows:
            length = max(len(r.times) for r in rows)
            t = next(r.times for r in rows if len(r.times) == length)
            mat = np.full((len(rows), length), np.nan)
            for i, r in enumerate(rows):
                mat[i, :len(r.times)] = r.methods[m].nll
            count = (~np.isnan(mat)).sum(0)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                mean = np.nanmean(mat, axis=0)
                std = np.nanstd(mat, axis=0)
            curve[m] = (t, mean, std, count)
            windows[m] = {}
            for label, wins in (("", WINDOWS), ("<", CUMULATIVE_WINDOWS)):
                per = [windowed_mean(r.methods[m].nll, r.times, wins) for r in rows]
                for k, w in enumerate(wins):
                    key = f"<{w[1]:g}" if label else window_label(w)
                    windows[m][key] = _nanmean(p[k] for p in per)
        ade[m] = {}
        ns = sorted({n for r in results if m in r.methods for n in r.methods[m].ade})
        for n in ns:
            ade[m][n] = {window_label(w): _nanmean(r.methods[m].ade[n][k] for r in results
                                                   if m in r.methods and n in r.methods[m].ade)
                         for k, w in enumerate(WINDOWS)}
    accuracy = {}
    for key in (("first", "instance"), ("second", "instance"), ("first", "semantic"), ("second", "semantic")):
        hits = [r.accuracy.get(key) for r in results if r.accuracy.get(key) is not None]
        accuracy[key] = float(np.mean(hits)) if hits else math.nan
    hz = [r.horizon for r in results if r.horizon is not None]
    return MetricsReport(curve, windows, ade, accuracy, (float(np.mean(hz)) if hz else math.nan, len(hz)),
                         len(results), list(failures), subset, DENSITY_FLOOR, list(results))


def evaluate_dataset(records: Sequence[TrajectoryRecord], graphs: Mapping[str, SceneGraph],
                     predictor_for: Callable[[SceneGraph], object], cfg: RunConfig,
                     subset: str | None = None) -> MetricsReport:
    """Evaluate every record; per-record failures are logged and counted."""
    if subset:
        records = subset_filter(records, subset, horizon=cfg.horizon)
    failures: list[tuple[str, str]] = []

    def run(record):
        graph = graphs.get(record.scene)
        if graph is None:
            return RecordError(f"no scene graph named {record.scene!r}")
        try:
            return evaluate_record(record, graph, predictor_for(graph), cfg)
        except (RecordError, PredictorError, ValueError) as exc:
            return exc

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        outcomes = list(pool.map(run, records))
    results = []
    for record, out in zip(records, outcomes):
        if isinstance(out, Exception):
            log.warning("record %s excluded: %s", record.name, out)
            failures.append((record.name, f"{type(out).__name__}: {out}"))
        else:
            results.append(out)
    return aggregate(results, failures, subset or "all")


# -- output ------------------------------------------------------------------------------

def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6g}"


def write_report(report: MetricsReport, outdir, cfg: RunConfig) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tag = f"manifest={cfg.manifest_hash()}"
    written = []

    def table(name, header, rows):
        path = outdir / name
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {tag}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        written.append(path)

    table("nll_curve.csv", ["method", "t", "nll_mean", "nll_std", "n"],
          [[m, _fmt(t), _fmt(mu), _fmt(sd), int(c)]
           for m, (ts, mus, sds, cs) in sorted(report.nll_curve.items())
           for t, mu, sd, c in zip(ts, mus, sds, cs)])
    labels = [window_label(w) for w in WINDOWS] + [f"<{w[1]:g}" for w in CUMULATIVE_WINDOWS]
    table("nll_windows.csv", ["method"] + labels,
          [[m] + [_fmt(v.get(lbl)) for lbl in labels] for m, v in sorted(report.nll_windows.items())])
    wl = [window_label(w) for w in WINDOWS]
    table("ade.csv", ["method", "N"] + wl,
          [[m, n] + [_fmt(v[lbl]) for lbl in wl]
           for m, per in sorted(report.ade.items()) for n, v in sorted(per.items())])
    table("accuracy.csv", ["interaction", "level", "top10_accuracy"],
          [[a, b, _fmt(v)] for (a, b), v in report.accuracy.items()])
    table("horizon.csv", ["tv_threshold", "mean_horizon_s", "n"],
          [[_fmt(cfg.tv_threshold), _fmt(report.horizon[0]), report.horizon[1]]])
    manifest = dict(cfg.manifest(), manifest_hash=cfg.manifest_hash(), subset=report.subset,
                    n_records=report.n_records, failures=report.failures)
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=list) + "\n", encoding="utf-8")
    written.append(path)
    return written
