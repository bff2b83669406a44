"""Backends for the depth estimator and the decision-making VLM.

Each model has a live HTTP client, an offline stand-in (file replay for
depth, scripted replies for the VLM) and simple scripted baselines. All VLM
backends share one interface: ``complete(request) -> VlmResponse``.
"""

from __future__ import annotations

import base64
import enum
import os
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx
import numpy as np

from depthnav import array_store, sim
from depthnav.actions import ACTION_LINE, Action, extract_json, parse_action
from depthnav.errors import (
    ArrayStoreError,
    BackendUnreachableError,
    MalformedResponseError,
    MissingReplayFileError,
    ShapeMismatchError,
    UnrecognizedActionError,
)
from depthnav.pipeline import DepthField, DepthMatrix, Unit, encode_png

DEFAULT_TEMPERATURE = 1e-4
DEFAULT_VLM_MODEL = "qwen2.5-vl-32b"
ENV_VLM_ENDPOINT = "MDE_VLM_ENDPOINT"
ENV_VLM_API_KEY = "MDE_VLM_API_KEY"
ENV_DEPTH_ENDPOINT = "MDE_DEPTH_ENDPOINT"


# --------------------------------------------------------------------------
# VLM side


@dataclass(frozen=True, eq=False)
class Observation:
    """Privileged step state. Only the simulator's oracle reads it; it never
    goes over the wire."""

    t: int
    pose: object
    target: tuple[float, float]
    matrix: DepthMatrix | None = None


@dataclass(frozen=True, eq=False)
class VlmRequest:
    system_prompt: str
    user_prompt: str
    images: list[np.ndarray]
    temperature: float = DEFAULT_TEMPERATURE
    observation: Observation | None = None

    def __post_init__(self):
        if not self.images:
            raise ValueError("a request carries at least the RGB frame")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class VlmResponse:
    thought: str
    action_text: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    raw_text: str = ""


class Agent(Protocol):
    def complete(self, request: VlmRequest) -> VlmResponse: ...


def split_completion(text: str) -> tuple[str, str]:
    """Split a reply into (thought, action text)."""
    obj = extract_json(text)
    if obj is not None:
        thought = obj.get("thought", "")
        return (thought if isinstance(thought, str) else str(thought)), text
    # free text: everything except an "Action: ..." line is the thought
    lines = [ln for ln in text.strip().splitlines() if not ACTION_LINE.match(ln)]
    thought = "\n".join(lines).strip()
    try:
        parse_action(thought)
    except UnrecognizedActionError:
        return thought, text
    return "", text


class ScriptedVlm:
    """Deterministic mock that replays a fixed list of replies in order.

    Token usage is synthesized as UTF-8 byte length // 4 for the prompt
    (system + user text) and the reply.
    """

    def __init__(self, replies: list[str]):
        self.replies = list(replies)
        self.calls: list[VlmRequest] = []

    def complete(self, request: VlmRequest) -> VlmResponse:
        if len(self.calls) >= len(self.replies):
            raise MalformedResponseError(
                f"scripted VLM exhausted after {len(self.replies)} replies"
            )
        reply = self.replies[len(self.calls)]
        self.calls.append(request)
        if not reply.strip():
            raise MalformedResponseError("empty completion body")
        prompt_bytes = len((request.system_prompt + request.user_prompt).encode("utf-8"))
        thought, action_text = split_completion(reply)
        return VlmResponse(
            thought=thought,
            action_text=action_text,
            prompt_tokens=prompt_bytes // 4,
            completion_tokens=len(reply.encode("utf-8")) // 4,
            raw_text=reply,
        )


class FixedAgent:
    """Baseline that always answers the same action."""

    def __init__(self, action: Action = Action.STOP):
        self.action = Action(action)

    def complete(self, request: VlmRequest) -> VlmResponse:
        return VlmResponse("", self.action.value, raw_text=self.action.value)


class RandomAgent:
    """Baseline drawing uniformly over the four actions from a seeded RNG."""

    def __init__(self, seed: int | None = 0):
        self._rng = random.Random(seed)
        self._actions = list(Action)

    def complete(self, request: VlmRequest) -> VlmResponse:
        action = self._rng.choice(self._actions)
        return VlmResponse("", action.value, raw_text=action.value)


class OracleAgent:
    """Closed-loop driver for synthetic worlds.

    Reads the depth matrix and the goal bearing from the request's
    observation instead of the prompt text.
    """

    def __init__(self, stop_distance: float = 1.5, tolerance: float = 10.0):
        self.stop_distance = stop_distance
        self.tolerance = tolerance

    def complete(self, request: VlmRequest) -> VlmResponse:
        obs = request.observation
        if obs is None or obs.matrix is None:
            raise MalformedResponseError("oracle agent needs an observation with a depth matrix")
        bearing = sim.bearing_to(obs.pose, obs.target)
        action = sim.oracle_agent(obs.matrix, bearing, self.stop_distance, self.tolerance)
        thought = f"bearing {bearing:.1f} deg, center depth {obs.matrix.values[:, obs.matrix.cols // 2].min():.2f} m"
        return VlmResponse(thought, action.value, raw_text=action.value)


def random_agent(seed: int | None = 0) -> RandomAgent:
    return RandomAgent(seed)


def fixed_agent(action: Action = Action.STOP) -> FixedAgent:
    return FixedAgent(action)


def image_part(image: np.ndarray) -> dict:
    encoded = base64.b64encode(encode_png(image)).decode("ascii")
    return {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{encoded}"}}


def chat_payload(request: VlmRequest, model: str = DEFAULT_VLM_MODEL) -> dict:
    """OpenAI-style chat-completions body for one step."""
    user_content = [{"type": "text", "text": request.user_prompt}]
    user_content.extend(image_part(img) for img in request.images)
    return {
        "model": model,
        "messages": [
            {"role": "system", "content": request.system_prompt},
            {"role": "user", "content": user_content},
        ],
        "temperature": request.temperature,
    }


def parse_chat_response(body: dict) -> VlmResponse:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponseError(f"missing choices[0].message.content: {exc}") from exc
    if isinstance(content, list):
        content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
    if not isinstance(content, str) or not content.strip():
        raise MalformedResponseError("empty completion body")
    usage = body.get("usage") or {}
    try:
        prompt_tokens = int(usage["prompt_tokens"]) if "prompt_tokens" in usage else None
        completion_tokens = (
            int(usage["completion_tokens"]) if "completion_tokens" in usage else None
        )
    except (TypeError, ValueError) as exc:
        raise MalformedResponseError(f"bad usage block: {usage!r}") from exc
    thought, action_text = split_completion(content)
    return VlmResponse(thought, action_text, prompt_tokens, completion_tokens, content)


class HttpVlmClient:
    """Chat-completions client. Holds no per-episode state; safe to share."""

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        model: str = DEFAULT_VLM_MODEL,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        endpoint = endpoint or os.environ.get(ENV_VLM_ENDPOINT)
        if not endpoint:
            raise ValueError(f"no VLM endpoint given and {ENV_VLM_ENDPOINT} unset")
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_VLM_API_KEY)
        self.model = model
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def complete(self, request: VlmRequest) -> VlmResponse:
        url = f"{self.endpoint}/chat/completions"
        try:
            resp = self._client.post(url, json=chat_payload(request, self.model))
        except httpx.HTTPError as exc:
            raise BackendUnreachableError(f"{url}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnreachableError(
                f"{url}: status {resp.status_code}: {resp.text[:200]}"
            )
        try:
            body = resp.json()
        except ValueError as exc:
            raise MalformedResponseError(f"response is not JSON: {resp.text[:200]}") from exc
        return parse_chat_response(body)


# --------------------------------------------------------------------------
# depth side


class DepthBackend(str, enum.Enum):
    HTTP = "http"
    REPLAY = "replay"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class EstimatorConfig:
    backend: DepthBackend = DepthBackend.REPLAY
    endpoint: str | None = None
    replay_dir: str | None = None
    hyper_params: dict[str, str] = field(default_factory=dict)
    output_unit: Unit = Unit.METERS


class DepthEstimator(Protocol):
    unit: Unit

    def estimate(self, image: np.ndarray, frame_key: str, *, pose=None, world=None) -> DepthField: ...


def _check_shape(values: np.ndarray, image: np.ndarray) -> None:
    if values.shape != image.shape[:2]:
        raise ShapeMismatchError(
            f"depth field {values.shape} does not match image {image.shape[:2]}"
        )


def _depth_from_npz(data: bytes, source: str) -> np.ndarray:
    try:
        records = array_store.read_npz(data)
    except ArrayStoreError as exc:
        raise MalformedResponseError(f"{source}: unreadable depth archive: {exc}") from exc
    for rec in records:
        if rec.name == "depth":
            arr = rec.to_array()
            # (1, H, W) is accepted as well as (H, W)
            if arr.ndim == 3 and arr.shape[0] == 1:
                arr = arr[0]
            return arr
    raise ShapeMismatchError(f"{source}: no 'depth' entry")


class FileReplayEstimator:
    """Reads ``<dir>/<frame_key>.npz`` entry ``depth``. Never writes."""

    def __init__(self, directory, unit: Unit = Unit.METERS):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise MissingReplayFileError(f"replay directory {self.directory} does not exist")
        self.unit = Unit(unit)

    def path_for(self, frame_key: str) -> Path:
        return self.directory / f"{frame_key}.npz"

    def estimate(self, image, frame_key, *, pose=None, world=None) -> DepthField:
        path = self.path_for(frame_key)
        try:
            data = path.read_bytes()
        except FileNotFoundError as exc:
            raise MissingReplayFileError(f"no replay file {path}") from exc
        values = _depth_from_npz(data, str(path))
        _check_shape(values, image)
        return DepthField(values, self.unit)


class HttpDepthEstimator:
    """POSTs the PNG frame to ``<endpoint>/depth``; expects NPZ back."""

    def __init__(
        self,
        endpoint: str | None = None,
        hyper_params: dict[str, str] | None = None,
        unit: Unit = Unit.METERS,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        endpoint = endpoint or os.environ.get(ENV_DEPTH_ENDPOINT)
        if not endpoint:
            raise ValueError(f"no depth endpoint given and {ENV_DEPTH_ENDPOINT} unset")
        self.endpoint = endpoint.rstrip("/")
        self.hyper_params = dict(hyper_params or {})
        self.unit = Unit(unit)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def estimate(self, image, frame_key, *, pose=None, world=None) -> DepthField:
        url = f"{self.endpoint}/depth"
        try:
            resp = self._client.post(
                url,
                content=encode_png(image),
                params=self.hyper_params,
                headers={"Content-Type": "image/png"},
            )
        except httpx.HTTPError as exc:
            raise BackendUnreachableError(f"{url}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnreachableError(
                f"{url}: status {resp.status_code}: {resp.text[:200]}"
            )
        values = _depth_from_npz(resp.content, url)
        _check_shape(values, image)
        return DepthField(values, self.unit)


class SyntheticEstimator:
    """Ray-casts the episode's synthetic world at the given pose."""

    unit = Unit.METERS

    def estimate(self, image, frame_key, *, pose=None, world=None) -> DepthField:
        if pose is None or world is None:
            raise ValueError("synthetic depth needs the pose and the world")
        camera = world.camera(image.shape[0], image.shape[1])
        field_ = sim.raycast_depth(world.scene, pose, camera)
        _check_shape(field_.values, image)
        return field_


def make_estimator(cfg: EstimatorConfig) -> DepthEstimator:
    backend = DepthBackend(cfg.backend)
    if backend is DepthBackend.REPLAY:
        if not cfg.replay_dir:
            raise MissingReplayFileError("replay backend needs a directory")
        return FileReplayEstimator(cfg.replay_dir, cfg.output_unit)
    if backend is DepthBackend.HTTP:
        return HttpDepthEstimator(cfg.endpoint, cfg.hyper_params, cfg.output_unit)
    return SyntheticEstimator()


def estimate_depth(
    image: np.ndarray, cfg: EstimatorConfig, frame_key: str, *, pose=None, world=None
) -> DepthField:
    return make_estimator(cfg).estimate(image, frame_key, pose=pose, world=world)


__all__ = [
    "Action",
    "Agent",
    "DepthBackend",
    "EstimatorConfig",
    "FileReplayEstimator",
    "FixedAgent",
    "HttpDepthEstimator",
    "HttpVlmClient",
    "Observation",
    "OracleAgent",
    "RandomAgent",
    "ScriptedVlm",
    "SyntheticEstimator",
    "VlmRequest",
    "VlmResponse",
    "chat_payload",
    "estimate_depth",
    "fixed_agent",
    "make_estimator",
    "parse_action",
    "parse_chat_response",
    "random_agent",
]
