"""Trajectory records and the past/future split."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from ..predictor import PastInteraction

FUTURE_HORIZON = 60.0  # s, split at most this long before the end


class RecordError(ValueError):
    pass


class SplitError(RecordError):
    pass


@dataclass(frozen=True)
class RecordedInteraction:
    object: str
    action: str
    t_start: float
    t_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def to_json(self) -> dict:
        return {"object": self.object, "action": self.action, "t_start": self.t_start, "t_end": self.t_end}


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    scene: str
    rate_hz: float
    positions: np.ndarray  # (N, 2), sample k at time t0 + k / rate_hz
    interactions: tuple[RecordedInteraction, ...] = ()
    t0: float = 0.0
    name: str = ""

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] < 2 or len(pos) < 2:
            raise RecordError("positions must be an (N >= 2, 2) array")
        pos = pos[:, :2]
        if not np.all(np.isfinite(pos)):
            raise RecordError("positions must be finite")
        if not self.rate_hz > 0:
            raise RecordError("rate_hz must be > 0")
        ints = tuple(sorted(self.interactions, key=lambda i: i.t_start))
        for a in ints:
            if not a.t_end > a.t_start:
                raise RecordError(f"interaction with {a.object!r} has non-positive duration")
        for a, b in zip(ints, ints[1:]):
            if b.t_start < a.t_end:
                raise RecordError(f"interactions with {a.object!r} and {b.object!r} overlap")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "interactions", ints)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.positions)) / self.rate_hz

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def position_at(self, t) -> np.ndarray:
        times = self.times
        t = np.asarray(t, dtype=float)
        out = np.column_stack([np.interp(t, times, self.positions[:, 0]),
                               np.interp(t, times, self.positions[:, 1])])
        return out[0] if t.ndim == 0 else out

    def to_json(self) -> dict:
        doc = {"scene": self.scene, "rate_hz": self.rate_hz,
               "positions": self.positions.tolist(),
               "interactions": [i.to_json() for i in self.interactions]}
        if self.t0:
            doc["t0"] = self.t0
        if self.name:
            doc["name"] = self.name
        return doc


def record_from_json(doc: dict, name: str = "") -> TrajectoryRecord:
    try:
        ints = [RecordedInteraction(str(i["object"]), str(i.get("action", "")),
                                    float(i["t_start"]), float(i["t_end"]))
                for i in doc.get("interactions", [])]
        return TrajectoryRecord(str(doc["scene"]), float(doc["rate_hz"]),
                                np.asarray(doc["positions"], dtype=float), tuple(ints),
                                float(doc.get("t0", 0.0)), doc.get("name", name))
    except (KeyError, TypeError) as exc:
        raise RecordError(f"malformed trajectory record {name!r}: {exc}") from None


def load_records(path) -> list[TrajectoryRecord]:
    """Records from a JSON file (one record or a list) or a directory of them."""
    path = Path(path)
    if path.is_dir():
        out = []
        for f in sorted(path.glob("*.json")):
            out.extend(load_records(f))
        return out
    doc = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(doc, list):
        return [record_from_json(d, f"{path.stem}[{i}]") for i, d in enumerate(doc)]
    return [record_from_json(doc, path.stem)]


@dataclass(frozen=True, eq=False)
class Split:
    record: TrajectoryRecord
    t_split: float
    past_times: np.ndarray
    past_positions: np.ndarray
    future_times: np.ndarray
    future_positions: np.ndarray
    past_interactions: tuple[RecordedInteraction, ...] = field(default=())
    future_interactions: tuple[RecordedInteraction, ...] = field(default=())

    @property
    def current_position(self) -> np.ndarray:
        return self.record.position_at(self.t_split)

    def past_for_predictor(self) -> list[PastInteraction]:
        out = []
        for i in self.past_interactions:
            d = min(i.t_end, self.t_split) - i.t_start
            if d > 0:
                out.append(PastInteraction(i.object, i.action, d))
        return out

    def gt_positions(self, rel_times) -> np.ndarray:
        """Ground-truth positions at times relative to the split."""
        return self.record.position_at(self.t_split + np.asarray(rel_times, dtype=float))

    @property
    def future_span(self) -> float:
        return self.record.t_end - self.t_split

    def future_distance(self) -> float:
        pts = np.vstack([self.current_position[None, :], self.future_positions])
        return float(np.hypot(*np.diff(pts, axis=0).T).sum())

    @property
    def walking_at_start(self) -> bool:
        return not any(i.t_start <= self.t_split < i.t_end for i in self.record.interactions)


def split_time(record: TrajectoryRecord, horizon: float = FUTURE_HORIZON) -> float:
    """Split after the second interaction or ``horizon`` seconds before the
    end, whichever comes first."""
    times = record.times
    candidates = [record.t_end - horizon]
    if len(record.interactions) >= 2:
        candidates.append(record.interactions[1].t_end)
    elif record.t_end - times[0] < horizon:
        raise SplitError(
            f"record {record.name!r} has fewer than 2 interactions and lasts less than {horizon:g} s"
        )
    return max(float(times[0]), min(candidates))


def split_past_future(record: TrajectoryRecord, horizon: float = FUTURE_HORIZON) -> Split:
    t_split = split_time(record, horizon)
    times = record.times
    past = times <= t_split + 1e-9
    return Split(
        record, t_split, times[past], record.positions[past], times[~past], record.positions[~past],
        tuple(i for i in record.interactions if i.t_start < t_split),
        tuple(i for i in record.interactions if i.t_start >= t_split),
    )


def merge(split: Split) -> TrajectoryRecord:
    r = split.record
    return TrajectoryRecord(r.scene, r.rate_hz, np.vstack([split.past_positions, split.future_positions]),
                            split.past_interactions + split.future_interactions, r.t0, r.name)


def path_length(positions: np.ndarray) -> float:
    positions = np.asarray(positions, dtype=float)
    return float(np.hypot(*np.diff(positions, axis=0).T).sum()) if len(positions) > 1 else 0.0


def path_efficiency(positions: np.ndarray) -> float:
    total = path_length(positions)
    if total == 0:
        return math.nan
    return float(np.hypot(*(positions[-1] - positions[0]))) / total


def records_by_scene(records: Iterable[TrajectoryRecord]) -> dict[str, list[TrajectoryRecord]]:
    out: dict[str, list[TrajectoryRecord]] = {}
    for r in records:
        out.setdefault(r.scene, []).append(r)
    return out
