"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 input-data error,
3 predictor transport error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig
from .ctmc import build_generator
from .dsg import SceneGraph, SceneGraphError, load_scene_graph
from .predictor import (ChatCompletionPredictor, FixturePredictor, PredictorError, PredictorTransportError)
from .spatial import SpatioTemporalDistribution, sample_times, write_density_csv, write_trajectories_csv
from .tree import InteractionTree

log = logging.getLogger("scenetraj")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRANSPORT = 0, 1, 2, 3


class DataError(Exception):
    pass


# -- configuration -------------------------------------------------------------------

_OVERRIDES = {
    # flag: (config key, type)
    "predictor": ("predictor", str), "fixture": ("fixture", str), "endpoint": ("endpoint", str),
    "model": ("model", str), "granularity": ("granularity", str), "width": ("width", int),
    "depth": ("depth", int), "n_closest": ("n_closest", int), "v_walk": ("v_walk", float),
    "sigma": ("sigma", float), "dt": ("dt", float), "horizon": ("horizon", float),
    "seed": ("seed", int), "jobs": ("jobs", int), "mode": ("trajectory_mode", str),
    "n": ("n_trajectories", int), "grid_step": ("grid_step", float),
}
_FLAGS = ("no_interaction_times", "deterministic_walk", "gt_semantic", "gt_instance", "squared_ade")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="INI file with a [run] section")
    p.add_argument("--scene", action="append", help="scene-graph JSON (repeatable)")
    for name, (_, typ) in _OVERRIDES.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    for name in _FLAGS:
        p.add_argument("--" + name.replace("_", "-"), dest=name, action="store_true", default=None)
    p.add_argument("--euclidean", action="store_true", help="rank instances by straight-line distance")
    p.add_argument("--bon", help="comma-separated N values for best-of-N ADE")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any configuration key")
    p.add_argument("-v", "--verbose", action="store_true")


def resolve_config(args) -> RunConfig:
    """Defaults, then the configuration file, then command-line values."""
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    values: dict = {}
    for name, (key, _) in _OVERRIDES.items():
        if getattr(args, name, None) is not None:
            values[key] = getattr(args, name)
    for name in _FLAGS:
        if getattr(args, name, None):
            values[name] = True
    if getattr(args, "euclidean", False):
        values["geodesic"] = False
    if getattr(args, "bon", None):
        values["bon"] = args.bon
    if getattr(args, "scene", None):
        values["scenes"] = tuple(args.scene)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = value
    if values.get("gt_semantic") or values.get("gt_instance"):
        # an oracle chosen on the command line replaces one set in the file
        cfg = cfg.replace(gt_semantic=False, gt_instance=False)
    return RunConfig.from_mapping(values, cfg)


def load_graphs(cfg: RunConfig) -> dict[str, SceneGraph]:
    if not cfg.scenes:
        raise ConfigError("no scene given (use --scene or scenes= in the configuration)")
    graphs = {}
    for path in cfg.scenes:
        try:
            graph = load_scene_graph(Path(path))
        except OSError as exc:
            raise DataError(f"cannot read scene {path}: {exc}") from None
        graphs[graph.name] = graph
        graphs.setdefault(Path(path).stem, graph)
    return graphs


def first_graph(cfg: RunConfig, name: str | None = None) -> SceneGraph:
    graphs = load_graphs(cfg)
    if name:
        if name not in graphs:
            raise DataError(f"no scene named {name!r}")
        return graphs[name]
    return load_scene_graph(Path(cfg.scenes[0]))


def make_predictor(cfg: RunConfig):
    if cfg.gt_semantic or cfg.gt_instance:
        return None  # replaced per record
    if cfg.predictor == "wire":
        return ChatCompletionPredictor(cfg.predictor_config())
    if not cfg.fixture:
        raise ConfigError("the fixture predictor needs fixture=<path>")
    try:
        return FixturePredictor.load(cfg.fixture)
    except OSError as exc:
        raise DataError(f"cannot read fixture {cfg.fixture}: {exc}") from None


# -- subcommands ---------------------------------------------------------------------------

def cmd_describe(args, cfg: RunConfig) -> int:
    graph = first_graph(cfg, args.name)
    sys.stdout.write(graph.describe(cfg.effective_granularity) + "\n")
    return EXIT_OK


def grid_axes(dist: SpatioTemporalDistribution, step: float, margin: float | None = None):
    margin = 3 * dist.sigma if margin is None else margin
    lo = dist.positions.min(0) - margin
    hi = dist.positions.max(0) + margin
    xs = np.arange(math.floor(lo[0] / step) * step, hi[0] + step / 2, step)
    ys = np.arange(math.floor(lo[1] / step) * step, hi[1] + step / 2, step)
    return xs, ys


def _write_outputs(outdir: Path, cfg: RunConfig, grounded: InteractionTree, dist, extra: dict,
                   trajectories=None) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    tag = f"manifest={cfg.manifest_hash()}"
    doc = grounded.to_dict()
    doc["manifest"] = cfg.manifest_hash()
    (outdir / "tree.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    xs, ys = grid_axes(dist, cfg.grid_step)
    with (outdir / "density_grid.csv").open("w", encoding="utf-8", newline="") as fh:
        write_density_csv(fh, dist, xs, ys, sample_times(cfg.dt, cfg.horizon), comment=tag)
    if trajectories is not None:
        with (outdir / "trajectories.csv").open("w", encoding="utf-8", newline="") as fh:
            write_trajectories_csv(fh, trajectories, comment=tag)
    manifest = dict(cfg.manifest(), manifest_hash=cfg.manifest_hash(), **extra)
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=list) + "\n",
                                          encoding="utf-8")


def cmd_predict(args, cfg: RunConfig) -> int:
    from .eval.harness import gt_future, predict
    from .eval.records import load_records, split_past_future
    from .predictor import GroundTruthPredictor, PastInteraction

    extra: dict = {}
    if args.record:
        records = load_records(args.record)
        if not records:
            raise DataError(f"no records in {args.record}")
        record = records[args.index]
        graph = first_graph(cfg, record.scene)
        split = split_past_future(record, cfg.horizon)
        start, past = split.current_position, split.past_for_predictor()
        predictor = (GroundTruthPredictor(graph, gt_future(split)) if cfg.gt_semantic or cfg.gt_instance
                     else make_predictor(cfg))
        extra.update(record=str(args.record), record_index=args.index, t_split=split.t_split)
    else:
        if args.start is None:
            raise ConfigError("predict needs --start X Y or --record")
        graph = first_graph(cfg, args.name)
        if cfg.gt_semantic or cfg.gt_instance:
            raise ConfigError("ground-truth predictors need --record")
        start = np.asarray(args.start, dtype=float)
        past = []
        for item in args.past or []:
            parts = item.split(":")
            if len(parts) != 3:
                raise ConfigError(f"--past expects OBJECT:ACTION:SECONDS, got {item!r}")
            obj = graph.resolve_object(parts[0])
            if obj is None:
                raise DataError(f"unknown object {parts[0]!r}")
            past.append(PastInteraction(obj, parts[1], float(parts[2])))
        predictor = make_predictor(cfg)
        extra.update(start=[float(start[0]), float(start[1])], past=list(args.past or []))
    pred = predict(graph, predictor, start, past, cfg)
    extra.update(scene=graph.name, n_states=pred.ctmc.n,
                 n_sequences=len(pred.tree.leaves()), warnings=list(pred.tree.warnings))
    _write_outputs(Path(args.out), cfg, pred.grounded, pred.distribution, extra, pred.trajectories(cfg))
    print(f"{len(pred.tree.interaction_nodes())} interaction nodes, {pred.ctmc.n} chain states; "
          f"outputs in {args.out}")
    return EXIT_OK


def cmd_export_grid(args, cfg: RunConfig) -> int:
    try:
        doc = json.loads(Path(args.tree).read_text(encoding="utf-8"))
        tree = InteractionTree.from_dict(doc)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read tree export {args.tree}: {exc}") from None
    ctmc = build_generator(tree, cfg.v_walk, cfg.no_interaction_times)
    dist = SpatioTemporalDistribution.from_tree(tree, ctmc, cfg.sigma)
    xs, ys = grid_axes(dist, cfg.grid_step)
    times = sample_times(cfg.dt, cfg.horizon) if args.times is None else \
        np.array([float(t) for t in args.times.split(",")])
    if np.any(times < 0):
        raise ConfigError("times must be >= 0")
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        write_density_csv(out, dist, xs, ys, times, comment=f"manifest={cfg.manifest_hash()}")
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    from .eval.harness import evaluate_dataset, write_report
    from .eval.records import load_records

    if args.baselines is not None:
        cfg = cfg.replace(baselines=tuple(b for b in args.baselines.split(",") if b))
    records = load_records(args.records)
    graphs = load_graphs(cfg)
    predictor = make_predictor(cfg)
    report = evaluate_dataset(records, graphs, lambda graph: predictor, cfg, args.subset)
    write_report(report, args.out, cfg)
    print(f"evaluated {report.n_records} records ({len(report.failures)} excluded); report in {args.out}")
    for m, wins in sorted(report.nll_windows.items()):
        print(f"  {m:22s} NLL " + "  ".join(f"{k}: {v:.3f}" for k, v in wins.items()))
    return EXIT_OK


def cmd_stats(args, cfg: RunConfig) -> int:
    from .eval.records import load_records
    from .eval.stats import dataset_stats, subset_filter

    records = load_records(args.records)
    graphs = load_graphs(cfg) if cfg.scenes else {}
    if args.subset:
        records = subset_filter(records, args.subset, horizon=cfg.horizon)
    if not records:
        raise DataError("no records to summarize")
    stats = dataset_stats(records, graphs, cfg.horizon)
    rows = []
    for key, value in stats.items():
        if isinstance(value, tuple):
            rows.append((key, f"{value[0]:.4g}", f"{value[1]:.4g}"))
        else:
            rows.append((key, f"{value:.4g}" if isinstance(value, float) else str(value), ""))
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# manifest={cfg.manifest_hash()}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["statistic", "mean", "std"])
            w.writerows(rows)
    for key, mean, std in rows:
        print(f"{key:24s} {mean}" + (f" ± {std}" if std else ""))
    return EXIT_OK


# -- entry point ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenetraj", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", help="print the textual scene description")
    _common(p)
    p.add_argument("--name", help="scene name when several are configured")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("predict", help="predict the tree, density grid and trajectories")
    _common(p)
    p.add_argument("--name", help="scene name when several are configured")
    p.add_argument("--start", nargs=2, type=float, metavar=("X", "Y"))
    p.add_argument("--past", action="append", metavar="OBJECT:ACTION:SECONDS")
    p.add_argument("--record", help="take start and past from a trajectory record instead")
    p.add_argument("--index", type=int, default=0, help="record index within the file")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="evaluate on a dataset of trajectory records")
    _common(p)
    p.add_argument("records", help="record file or directory")
    p.add_argument("--subset", choices=("walking_at_start", "future_distance_upper_quartile"))
    p.add_argument("--baselines", help="comma-separated subset of constant_velocity,random_walk,random_goal")
    p.add_argument("-o", "--out", required=True, help="report directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="dataset statistics")
    _common(p)
    p.add_argument("records", help="record file or directory")
    p.add_argument("--subset", choices=("walking_at_start", "future_distance_upper_quartile"))
    p.add_argument("-o", "--out", help="also write a CSV")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export-grid", help="density grid CSV from a grounded tree export")
    _common(p)
    p.add_argument("tree", help="tree.json written by predict")
    p.add_argument("--times", help="comma-separated times in seconds (default: every dt up to the horizon)")
    p.add_argument("-o", "--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_export_grid)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PredictorTransportError as exc:
        print(f"predictor transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (DataError, SceneGraphError, PredictorError, ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
