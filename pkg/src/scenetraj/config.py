"""Run configuration: defaults, INI file, command-line overrides, manifest."""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path

from . import __version__
from .dsg import SCENE_TEXT_VERSION
from .eval.metrics import DENSITY_FLOOR, KDE_MIN_BANDWIDTH
from .predictor import MIN_DISTANCE, PROMPT_VERSION, PredictorConfig
from .tree import TreeParams

SECTION = "run"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenes: tuple[str, ...] = ()
    predictor: str = "fixture"  # fixture | wire
    fixture: str = ""
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4-turbo"
    timeout: float = 60.0
    retries: int = 3
    max_in_flight: int = 4
    width: int = 6
    depth: int = 2
    n_closest: int = 3
    granularity: str = "semantic"
    geodesic: bool = True
    v_walk: float = 1.4
    sigma: float = 0.5
    dt: float = 1.0
    horizon: float = 60.0
    max_segment_len: float = 1.0
    n_trajectories: int = 20
    bon: tuple[int, ...] = (5, 20)
    baseline_samples: int = 20
    baselines: tuple[str, ...] = ("constant_velocity", "random_walk", "random_goal")
    trajectory_mode: str = "expected"
    squared_ade: bool = False
    tv_threshold: float = 0.5
    tv_t_max: float = 600.0
    grid_step: float = 0.5
    seed: int = 0
    jobs: int = 1
    no_interaction_times: bool = False
    deterministic_walk: bool = False
    gt_semantic: bool = False
    gt_instance: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("timeout", "v_walk", "sigma", "dt", "horizon", "max_segment_len", "grid_step",
                     "tv_t_max"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("width", "depth", "n_closest", "n_trajectories", "baseline_samples",
                     "max_in_flight", "jobs"):
            if not getattr(self, name) >= 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.retries < 0 or self.seed < 0:
            raise ConfigError("retries and seed must be >= 0")
        if not 0 < self.tv_threshold <= 1:
            raise ConfigError("tv_threshold must lie in (0, 1]")
        if self.predictor not in ("fixture", "wire"):
            raise ConfigError(f"unknown predictor kind {self.predictor!r}")
        if self.granularity not in ("semantic", "instance"):
            raise ConfigError(f"unknown granularity {self.granularity!r}")
        if self.trajectory_mode not in ("expected", "sampled"):
            raise ConfigError(f"unknown trajectory mode {self.trajectory_mode!r}")
        if self.gt_semantic and self.gt_instance:
            raise ConfigError("gt_semantic and gt_instance are mutually exclusive")
        if any(n < 1 for n in self.bon):
            raise ConfigError("bon entries must be >= 1")

    @property
    def effective_granularity(self) -> str:
        if self.gt_instance:
            return "instance"
        if self.gt_semantic:
            return "semantic"
        return self.granularity

    def tree_params(self) -> TreeParams:
        return TreeParams(self.width, self.depth, self.n_closest, self.effective_granularity, self.geodesic)

    def predictor_config(self) -> PredictorConfig:
        return PredictorConfig(self.effective_granularity, self.width, self.endpoint, self.model,
                               self.timeout, self.retries, self.max_in_flight)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    # -- files and overrides ------------------------------------------------------

    @classmethod
    def from_mapping(cls, values: dict, base: "RunConfig | None" = None) -> "RunConfig":
        base = base or cls()
        known = {f.name: f for f in fields(cls)}
        changes = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            changes[key] = _coerce(getattr(base, key), raw, key)
        try:
            return dataclasses.replace(base, **changes)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path, base: "RunConfig | None" = None) -> "RunConfig":
        parser = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from None
        values = dict(parser[SECTION]) if parser.has_section(SECTION) else {}
        cfg = cls.from_mapping(values, base)
        # scene and fixture paths are relative to the configuration file
        root = Path(path).parent
        scenes = tuple(str(root / s) if not Path(s).is_absolute() else s for s in cfg.scenes)
        fixture = cfg.fixture
        if fixture and not Path(fixture).is_absolute():
            fixture = str(root / fixture)
        return dataclasses.replace(cfg, scenes=scenes, fixture=fixture)

    def manifest(self) -> dict:
        doc = dataclasses.asdict(self)
        doc.update({
            "package_version": __version__,
            "scene_text_version": SCENE_TEXT_VERSION,
            "prompt_version": PROMPT_VERSION,
            "density_floor": DENSITY_FLOOR,
            "kde_min_bandwidth": KDE_MIN_BANDWIDTH,
            "min_instance_distance": MIN_DISTANCE,
        })
        return doc

    def manifest_hash(self) -> str:
        blob = json.dumps(self.manifest(), sort_keys=True, separators=(",", ":"), default=list)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _coerce(default, raw, key):
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(default, tuple) else raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [s.strip() for s in text.replace("\n", ",").split(",") if s.strip()]
            if default and isinstance(default[0], int):
                return tuple(int(s) for s in items)
            return tuple(items)
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for {key}") from None
    return text

