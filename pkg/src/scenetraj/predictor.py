"""Next-interaction predictors.

A predictor is any object with a ``predict_next(scene_text, past,
assumed_future, config)`` method returning a list of
:class:`InteractionCandidate`. Three are provided: a chat-completion client
that speaks the common ``/chat/completions`` wire protocol, a fixture
replaying canned answers, and a ground-truth oracle used by the evaluation
ablations.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from .dsg import SCENE_TEXT_VERSION, SceneGraph

log = logging.getLogger(__name__)

PROMPT_VERSION = "prompt-v1"
API_KEY_ENV = "LP2_API_KEY"
MIN_DISTANCE = 0.5  # m, clamp for inverse-distance weighting
GRANULARITIES = ("semantic", "instance")


class PredictorError(RuntimeError):
    pass


class PredictorTransportError(PredictorError):
    pass


class PredictionFormatError(PredictorError):
    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


class FixtureMissError(PredictorError):
    pass


def _positive_finite(value) -> bool:
    return (isinstance(value, (int, float)) and not isinstance(value, bool)
            and math.isfinite(value) and value > 0)


@dataclass(frozen=True)
class PastInteraction:
    object: str
    action: str
    duration: float

    def __post_init__(self):
        if not _positive_finite(self.duration):
            raise ValueError(f"interaction duration must be finite and > 0, got {self.duration!r}")
        object.__setattr__(self, "duration", float(self.duration))


@dataclass(frozen=True)
class InteractionCandidate:
    """One predicted next interaction.

    ``target`` is a semantic class when ``granularity == "semantic"`` and an
    object id (or instance label, before resolution) otherwise.
    """

    target: str
    action: str
    probability: float
    duration: float
    reasoning: str = ""
    granularity: str = "instance"

    def __post_init__(self):
        if not isinstance(self.target, str) or not self.target:
            raise ValueError("candidate target must be a non-empty string")
        if not (_positive_finite(self.probability) and self.probability <= 1):
            raise ValueError(f"candidate probability must lie in (0, 1], got {self.probability!r}")
        if not _positive_finite(self.duration):
            raise ValueError(f"candidate duration must be finite and > 0, got {self.duration!r}")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        object.__setattr__(self, "probability", float(self.probability))
        object.__setattr__(self, "duration", float(self.duration))

    def to_json(self) -> dict:
        return {"object": self.target, "action": self.action, "probability": self.probability,
                "duration_s": self.duration, "reasoning": self.reasoning}


@dataclass
class PredictorConfig:
    granularity: str = "semantic"
    width: int = 6  # W_I
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4-turbo"
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.width < 1:
            raise ValueError("width (W_I) must be >= 1")


class Predictor(Protocol):
    def predict_next(self, scene_text: str, past: Sequence[PastInteraction],
                     assumed_future: Sequence[InteractionCandidate],
                     config: PredictorConfig) -> list[InteractionCandidate]: ...


# -- prompt and response handling ---------------------------------------------

SYSTEM_PROMPT = ("You anticipate what a person in an indoor environment will do next. "
                 "You answer only with JSON.")

RESPONSE_SCHEMA = ('a JSON list; each element is an object with the keys "object" (string), '
                   '"action" (string), "probability" (number in (0, 1]), '
                   '"duration_s" (number of seconds > 0) and "reasoning" (string)')


def build_prompt(scene_text: str, past: Sequence[PastInteraction],
                 assumed_future: Sequence[InteractionCandidate], config: PredictorConfig) -> str:
    if not scene_text:
        raise ValueError("scene_text must not be empty")
    lines = [scene_text, ""]
    if past:
        lines.append("Previous interactions of the person, oldest first:")
        for i, p in enumerate(past, 1):
            lines.append(f"{i}. {p.object}: {p.action} ({p.duration:g} s)")
    else:
        lines.append("There are no previous interactions observed.")
    if assumed_future:
        lines.append("Assume the person then performs these interactions, in order:")
        for i, c in enumerate(assumed_future, 1):
            lines.append(f"{i}. {c.target}: {c.action} ({c.duration:g} s)")
    lines.append("")
    if config.granularity == "semantic":
        what = "the object class (as named in the environment description)"
    else:
        what = "the object instance label (as named in the environment description)"
    lines.append(
        f"Predict the {config.width} most likely next interactions of the person. For each, "
        f"give {what} the person interacts with, a short description of the action, the "
        "probability that this interaction happens next, the expected duration of the "
        "interaction in seconds, and a brief reasoning."
    )
    lines.append(f"Respond with {RESPONSE_SCHEMA}.")
    return "\n".join(lines)


_FENCE = re.compile(r"```(?:json|JSON)?\s*(.*?)```", re.DOTALL)


def _extract_json(raw: str):
    m = _FENCE.search(raw)
    text = m.group(1) if m else raw
    starts = [i for i in (text.find("["), text.find("{")) if i >= 0]
    if not starts:
        raise PredictionFormatError("no JSON value in response", raw)
    try:
        value, _ = json.JSONDecoder().raw_decode(text[min(starts):])
    except json.JSONDecodeError as exc:
        raise PredictionFormatError(f"malformed JSON: {exc}", raw) from None
    return value


def _candidate_items(value) -> list:
    if isinstance(value, list):
        return value
    if isinstance(value, dict):
        if "object" in value and "action" in value:
            return [value]
        for key in ("interactions", "predictions", "candidates"):
            if isinstance(value.get(key), list):
                return value[key]
        if value and all(isinstance(v, dict) for v in value.values()):
            return list(value.values())
    raise PredictionFormatError("response JSON is not a list of interactions", json.dumps(value))


def candidate_from_json(item, granularity: str) -> InteractionCandidate:
    if not isinstance(item, dict):
        raise PredictionFormatError(f"interaction entry must be an object, got {item!r}")
    for key in ("object", "action", "probability", "duration_s"):
        if key not in item:
            raise PredictionFormatError(f"interaction entry missing {key!r}: {item!r}")
    if not isinstance(item["object"], str) or not isinstance(item["action"], str):
        raise PredictionFormatError(f"'object' and 'action' must be strings: {item!r}")
    reasoning = item.get("reasoning", "")
    if not isinstance(reasoning, str):
        raise PredictionFormatError(f"'reasoning' must be a string: {item!r}")
    try:
        return InteractionCandidate(item["object"], item["action"], item["probability"],
                                    item["duration_s"], reasoning, granularity)
    except ValueError as exc:
        raise PredictionFormatError(f"invalid interaction {item!r}: {exc}") from None


def parse_response(raw: str, granularity: str = "semantic") -> list[InteractionCandidate]:
    """Parse a model answer into candidates.

    Accepts a bare JSON list, a list inside a markdown code fence, or JSON
    followed by free text. Raises :class:`PredictionFormatError` (carrying the
    raw text) on anything else.
    """
    try:
        items = _candidate_items(_extract_json(raw))
        if not items:
            raise PredictionFormatError("response contains no interactions")
        return [candidate_from_json(item, granularity) for item in items]
    except PredictionFormatError as exc:
        exc.raw = raw
        raise


def serialize_candidates(candidates: Sequence[InteractionCandidate]) -> str:
    return json.dumps([c.to_json() for c in candidates])


def truncate(candidates: Sequence[InteractionCandidate], width: int) -> list[InteractionCandidate]:
    """Keep the ``width`` most probable candidates (ties by target, action)."""
    ranked = sorted(candidates, key=lambda c: (-c.probability, c.target, c.action))
    return ranked[:width]


# -- semantic grounding ----------------------------------------------------------

def ground_semantic(candidates: Sequence[InteractionCandidate], graph: SceneGraph, source: str,
                    n_closest: int, geodesic: bool = True,
                    warnings: list[str] | None = None) -> list[InteractionCandidate]:
    """Expand class-level candidates to the ``n_closest`` instances of each class.

    The candidate probability is split across its instances in proportion to
    inverse distance from ``source`` (a place id), with distances clamped
    below at :data:`MIN_DISTANCE`.
    """
    if n_closest < 1:
        raise ValueError("n_closest (N_s) must be >= 1")
    out = []
    for cand in candidates:
        if cand.granularity != "semantic":
            raise ValueError(f"candidate {cand.target!r} is not semantic")
        nearest = graph.k_nearest_instances(cand.target, source, n_closest, geodesic=geodesic)
        if not nearest:
            msg = f"class {cand.target!r} not present in scene {graph.name!r}; candidate dropped"
            log.warning(msg)
            if warnings is not None:
                warnings.append(msg)
            continue
        inv = [1.0 / max(d, MIN_DISTANCE) for _, d in nearest]
        total = math.fsum(inv)
        for (obj, _), w in zip(nearest, inv):
            out.append(InteractionCandidate(obj, cand.action, cand.probability * (w / total),
                                            cand.duration, cand.reasoning, "instance"))
    return out


# -- fixture ---------------------------------------------------------------------------

def _step_key(target: str, action: str) -> str:
    return f"{target}:{action}"


def fixture_key(past: Sequence, assumed_future: Sequence) -> str:
    """Canonical hash of the predictor inputs that matter for replay.

    ``past`` may hold :class:`PastInteraction` objects or ``"object:action"``
    strings; ``assumed_future`` likewise holds candidates or strings.
    """
    def norm(items, attr):
        out = []
        for it in items:
            out.append(it if isinstance(it, str) else _step_key(getattr(it, attr), it.action))
        return out

    payload = {"scene_text": SCENE_TEXT_VERSION, "past": norm(past, "object"),
               "assumed_future": norm(assumed_future, "target")}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class FixturePredictor:
    """Replays stored answers keyed by :func:`fixture_key`.

    The file is a JSON object mapping keys to candidate lists (response
    schema). Entries may alternatively be written readably as
    ``{"past": [...], "assumed_future": [...], "candidates": [...]}`` inside a
    top-level ``"entries"`` list, or as a bare list of such entries.
    """

    def __init__(self, table: Mapping[str, list[dict]]):
        self._table = {k: [dict(c) for c in v] for k, v in table.items()}

    @classmethod
    def from_entries(cls, entries) -> "FixturePredictor":
        table = {}
        for e in entries:
            table[fixture_key(e.get("past", []), e.get("assumed_future", []))] = e["candidates"]
        return cls(table)

    @classmethod
    def load(cls, path) -> "FixturePredictor":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(doc, list):
            return cls.from_entries(doc)
        if isinstance(doc, dict) and isinstance(doc.get("entries"), list):
            return cls.from_entries(doc["entries"])
        if not isinstance(doc, dict):
            raise PredictionFormatError(f"fixture {path} must be a JSON object or list")
        return cls(doc)

    def predict_next(self, scene_text, past, assumed_future, config) -> list[InteractionCandidate]:
        key = fixture_key(past, assumed_future)
        if key not in self._table:
            steps = [_step_key(getattr(c, "target", ""), c.action) for c in assumed_future]
            raise FixtureMissError(f"no fixture entry for assumed future {steps}")
        cands = [candidate_from_json(item, config.granularity) for item in self._table[key]]
        if not cands:
            raise PredictionFormatError("fixture entry is empty")
        return truncate(cands, config.width)


# -- ground-truth oracle ----------------------------------------------------------------

class GroundTruthPredictor:
    """Returns the recorded future interaction at each depth with probability 1.

    ``future`` holds (object id, action, duration) triples. In semantic mode
    the object's class is returned and the tree expands it to nearby
    instances like any other class-level prediction.
    """

    def __init__(self, graph: SceneGraph, future: Sequence[tuple[str, str, float]]):
        self.graph = graph
        self.future = list(future)

    def predict_next(self, scene_text, past, assumed_future, config) -> list[InteractionCandidate]:
        depth = len(assumed_future)
        if depth >= len(self.future):
            return []
        obj, action, duration = self.future[depth]
        target = obj if config.granularity == "instance" else self.graph.nodes[obj].semantic_class
        return [InteractionCandidate(target, action, 1.0, duration, "ground truth", config.granularity)]


# -- chat-completion client ------------------------------------------------------------------

@dataclass
class ChatCompletionPredictor:
    """Predictor backed by a chat-completion HTTP endpoint.

    The API key is read from ``LP2_API_KEY``. Transport failures are retried
    with exponential backoff; an unparseable answer triggers one repair
    request that repeats the schema, after which the format error propagates.
    """

    config: PredictorConfig = field(default_factory=PredictorConfig)
    transport: object | None = None  # httpx transport override, used in tests
    backoff: float = 0.5

    def __post_init__(self):
        import httpx

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(timeout=self.config.timeout, headers=headers,
                                    transport=self.transport)
        self._slots = threading.BoundedSemaphore(self.config.max_in_flight)

    def close(self) -> None:
        self._client.close()

    def _post(self, messages: list[dict]) -> str:
        import httpx

        body = {"model": self.config.model, "messages": messages, "temperature": 0}
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._client.post(self.config.endpoint, json=body)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = PredictorTransportError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise PredictorTransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise PredictionFormatError(f"unexpected completion payload: {exc}", resp.text) from None
        raise PredictorTransportError(
            f"request failed after {self.config.max_retries + 1} attempts: {last_error}"
        )

    def predict_next(self, scene_text, past, assumed_future, config=None) -> list[InteractionCandidate]:
        config = config or self.config
        messages = [{"role": "system", "content": SYSTEM_PROMPT},
                    {"role": "user", "content": build_prompt(scene_text, past, assumed_future, config)}]
        raw = self._post(messages)
        try:
            cands = parse_response(raw, config.granularity)
        except PredictionFormatError as exc:
            log.info("repairing unparseable response: %s", exc)
            messages += [{"role": "assistant", "content": raw},
                         {"role": "user", "content": f"Your answer could not be used ({exc}). "
                                                     f"Respond only with {RESPONSE_SCHEMA}."}]
            cands = parse_response(self._post(messages), config.granularity)
        return truncate(cands, config.width)
