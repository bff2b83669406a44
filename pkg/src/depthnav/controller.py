"""Per-episode navigation loop.

Each step: preprocess the frame, estimate depth, build the depth
representations the mode asks for, prompt the agent, parse its action, then
check the three stopping rules (predicted STOP, sustained deviation from the
ground truth, step budget).
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from depthnav import metrics, pipeline
from depthnav.actions import Action, parse_action
from depthnav.clients import DEFAULT_TEMPERATURE, Agent, DepthEstimator, Observation, VlmRequest
from depthnav.episodes import Episode
from depthnav.errors import (
    BackendUnreachableError,
    MalformedResponseError,
    MissingArtifactForModeError,
    UnrecognizedActionError,
)
from depthnav.pipeline import DepthMap, DepthMatrix, PipelineConfig, Unit
from depthnav.sim import Kinematics, Pose, advance

MAX_ATTEMPTS = 3
CORRECTIVE_SENTENCE = (
    "Your previous reply could not be understood. Reply with one JSON object "
    '{"thought": "...", "action": "..."} whose action is exactly one of '
    "FORWARD, LEFT ROTATE, RIGHT ROTATE, STOP."
)
PLACEHOLDER_GRAY = 128


class RepresentationMode(str, enum.Enum):
    MATRIX = "matrix"
    MAP = "map"
    HYBRID = "hybrid"

    @property
    def uses_matrix(self) -> bool:
        return self is not RepresentationMode.MAP

    @property
    def uses_map(self) -> bool:
        return self is not RepresentationMode.MATRIX


class TerminalReason(str, enum.Enum):
    PREDICTED_STOP = "PredictedStop"
    DEVIATED = "Deviated"
    MAX_STEPS = "MaxSteps"
    PARSE_FAILURE = "ParseFailure"


@dataclass(frozen=True)
class DeviationPolicy:
    tau: float = 4.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    def window(self, dt: float) -> int:
        """Consecutive mismatching steps that count as a deviation."""
        # tolerance absorbs binary noise in tau / dt for non-representable dt
        return max(1, math.ceil(self.tau / dt - 1e-9))


@dataclass
class StepRecord:
    t: int
    predicted: Action | None
    gt: Action
    thought: str
    prompt_tokens: int | None
    completion_tokens: int | None
    matched: bool
    pose: Pose
    attempts: int = 1
    prompt_sha256: str = ""
    raw_text: str = ""

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "predicted": self.predicted.value if self.predicted else None,
            "gt": self.gt.value,
            "thought": self.thought,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "matched": self.matched,
            "pose": self.pose.as_list(),
            "attempts": self.attempts,
            "prompt_sha256": self.prompt_sha256,
            "raw_text": self.raw_text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> StepRecord:
        return cls(
            t=d["t"],
            predicted=Action(d["predicted"]) if d["predicted"] else None,
            gt=Action(d["gt"]),
            thought=d.get("thought", ""),
            prompt_tokens=d.get("prompt_tokens"),
            completion_tokens=d.get("completion_tokens"),
            matched=d["matched"],
            pose=Pose(*d["pose"]),
            attempts=d.get("attempts", 1),
            prompt_sha256=d.get("prompt_sha256", ""),
            raw_text=d.get("raw_text", ""),
        )


@dataclass
class Transcript:
    episode_id: str
    scene: str
    subtask_count: int
    mode: str
    target: tuple[float, float]
    records: list[StepRecord] = field(default_factory=list)
    terminal_reason: TerminalReason | None = None
    stop_index: int = -1
    stop_pose: Pose | None = None
    nav_error: float | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "scene": self.scene,
            "subtask_count": self.subtask_count,
            "mode": self.mode,
            "target": list(self.target),
            "terminal_reason": self.terminal_reason.value if self.terminal_reason else None,
            "stop_index": self.stop_index,
            "stop_pose": self.stop_pose.as_list() if self.stop_pose else None,
            "nav_error": self.nav_error,
            "error": self.error,
            "records": [r.to_dict() for r in self.records],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> Transcript:
        return cls(
            episode_id=d["episode_id"],
            scene=d["scene"],
            subtask_count=d["subtask_count"],
            mode=d["mode"],
            target=tuple(d["target"]),
            records=[StepRecord.from_dict(r) for r in d["records"]],
            terminal_reason=TerminalReason(d["terminal_reason"]) if d["terminal_reason"] else None,
            stop_index=d["stop_index"],
            stop_pose=Pose(*d["stop_pose"]) if d["stop_pose"] else None,
            nav_error=d.get("nav_error"),
            error=d.get("error"),
        )

    def save(self, directory) -> Path:
        path = Path(directory) / f"{self.episode_id}.json"
        path.write_text(self.dumps(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> Transcript:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_system_prompt() -> str:
    return resources.files("depthnav").joinpath("assets/system_prompt.txt").read_text(encoding="utf-8")


def build_prompts(
    instruction: str,
    frame: np.ndarray,
    matrix: DepthMatrix | None,
    depth_map: DepthMap | None,
    mode: RepresentationMode,
    system_prompt: str | None = None,
) -> tuple[str, str, list[np.ndarray]]:
    """System prompt, user prompt and image list for one step.

    The user prompt is the instruction, a blank line, then the serialized
    matrix when the mode includes it. Images are the frame followed by the
    depth map when the mode includes it.
    """
    mode = RepresentationMode(mode)
    if mode.uses_matrix and matrix is None:
        raise MissingArtifactForModeError(f"mode {mode.value} needs a depth matrix")
    if mode.uses_map and depth_map is None:
        raise MissingArtifactForModeError(f"mode {mode.value} needs a depth map")
    p_s = system_prompt if system_prompt is not None else load_system_prompt()
    p_u = instruction
    if mode.uses_matrix:
        p_u = f"{instruction}\n\n{pipeline.serialize_matrix(matrix)}"
    images = [frame]
    if mode.uses_map:
        images.append(depth_map.pixels)
    return p_s, p_u, images


def mismatch_streak(matches: Sequence[bool]) -> int:
    n = 0
    for m in reversed(matches):
        if m:
            break
        n += 1
    return n


def check_termination(
    matches: Sequence[bool],
    last_action: Action | None,
    policy: DeviationPolicy,
    max_steps: int,
    dt: float = 0.2,
) -> TerminalReason | None:
    """Stopping rule after step ``t' = len(matches) - 1``.

    Priority: predicted STOP, then a run of ``policy.window(dt)`` trailing
    mismatches, then the step budget.
    """
    if last_action is Action.STOP:
        return TerminalReason.PREDICTED_STOP
    if mismatch_streak(matches) >= policy.window(dt):
        return TerminalReason.DEVIATED
    if len(matches) >= max_steps:
        return TerminalReason.MAX_STEPS
    return None


def prompt_digest(p_s: str, p_u: str, images: list[np.ndarray]) -> str:
    h = hashlib.sha256()
    h.update(p_s.encode("utf-8"))
    h.update(b"\0")
    h.update(p_u.encode("utf-8"))
    for img in images:
        h.update(b"\0")
        h.update(repr(img.shape).encode())
        h.update(np.ascontiguousarray(img).tobytes())
    return h.hexdigest()


def _add(total: int | None, n: int | None) -> int | None:
    if n is None:
        return total
    return n if total is None else total + n


@dataclass
class _StepOutcome:
    action: Action | None = None
    thought: str = ""
    raw_text: str = ""
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    attempts: int = 0
    digest: str = ""
    error: str | None = None


class EpisodeRunner:
    """Runs episodes with one fixed set of components."""

    def __init__(
        self,
        depth: DepthEstimator,
        cfg: PipelineConfig | None = None,
        mode: RepresentationMode = RepresentationMode.MATRIX,
        policy: DeviationPolicy | None = None,
        temperature: float = DEFAULT_TEMPERATURE,
        system_prompt: str | None = None,
        max_attempts: int = MAX_ATTEMPTS,
    ):
        self.depth = depth
        self.cfg = cfg or PipelineConfig()
        self.mode = RepresentationMode(mode)
        self.policy = policy or DeviationPolicy()
        self.temperature = temperature
        self.system_prompt = system_prompt if system_prompt is not None else load_system_prompt()
        self.max_attempts = max_attempts

    def _frame(self, episode: Episode, t: int) -> np.ndarray:
        if episode.is_synthetic or episode.steps[t].is_synthetic:
            shape = (self.cfg.target_height, self.cfg.target_width, 3)
            return np.full(shape, PLACEHOLDER_GRAY, dtype=np.uint8)
        return pipeline.load_image(episode.frame_path(t))

    def _artifacts(self, depth_field) -> tuple[DepthMatrix | None, DepthMap | None]:
        matrix = depth_map = None
        if self.mode.uses_matrix:
            source = depth_field
            if depth_field.unit is Unit.RELATIVE:
                source = pipeline.normalize(depth_field)
            matrix = pipeline.downsample(source, self.cfg.downsample_ratio)
        if self.mode.uses_map:
            depth_map = pipeline.depth_to_map(depth_field, self.cfg.render)
        return matrix, depth_map

    def _step(self, episode: Episode, t: int, pose: Pose, agent: Agent) -> _StepOutcome:
        out = _StepOutcome()
        rgb = pipeline.preprocess_rgb(self._frame(episode, t), self.cfg)
        key = episode.frame_key(t)
        prompts = None
        matrix = None
        suffix = ""
        for attempt in range(1, self.max_attempts + 1):
            out.attempts = attempt
            try:
                if prompts is None:
                    depth_field = self.depth.estimate(rgb, key, pose=pose, world=episode.world)
                    matrix, depth_map = self._artifacts(depth_field)
                    prompts = build_prompts(
                        episode.instruction, rgb, matrix, depth_map, self.mode, self.system_prompt
                    )
                p_s, p_u, images = prompts
                if suffix:
                    p_u = f"{p_u}\n{suffix}"
                out.digest = prompt_digest(p_s, p_u, images)
                request = VlmRequest(
                    p_s,
                    p_u,
                    images,
                    self.temperature,
                    Observation(t, pose, episode.target, matrix),
                )
                resp = agent.complete(request)
                out.prompt_tokens = _add(out.prompt_tokens, resp.prompt_tokens)
                out.completion_tokens = _add(out.completion_tokens, resp.completion_tokens)
                out.thought = resp.thought
                out.raw_text = resp.raw_text or resp.action_text
                out.action = parse_action(resp.action_text)
                out.error = None
                return out
            except UnrecognizedActionError as exc:
                suffix = CORRECTIVE_SENTENCE
                out.error = f"{type(exc).__name__}: {exc}"
            except (BackendUnreachableError, MalformedResponseError) as exc:
                # transient; configuration errors propagate to the caller
                out.error = f"{type(exc).__name__}: {exc}"
        return out

    def run(self, episode: Episode, agent: Agent, kin: Kinematics | None = None) -> Transcript:
        closed_loop = episode.is_synthetic
        if closed_loop:
            kin = kin or episode.world.kinematics
            budget = episode.max_steps
        else:
            budget = min(episode.max_steps, len(episode.steps))
        transcript = Transcript(
            episode.id, episode.scene.value, episode.subtask_count, self.mode.value, episode.target
        )
        matches: list[bool] = []
        pose = episode.steps[0].pose
        t = 0
        while True:
            if not closed_loop:
                pose = episode.steps[t].pose
            gt = episode.steps[t].gt_action if t < len(episode.steps) else Action.STOP
            outcome = self._step(episode, t, pose, agent)
            matched = outcome.action is gt
            matches.append(matched)
            transcript.records.append(
                StepRecord(
                    t=t,
                    predicted=outcome.action,
                    gt=gt,
                    thought=outcome.thought,
                    prompt_tokens=outcome.prompt_tokens,
                    completion_tokens=outcome.completion_tokens,
                    matched=matched,
                    pose=pose,
                    attempts=outcome.attempts,
                    prompt_sha256=outcome.digest,
                    raw_text=outcome.raw_text,
                )
            )
            if outcome.action is None:
                reason = TerminalReason.PARSE_FAILURE
                transcript.error = outcome.error
            else:
                reason = check_termination(matches, outcome.action, self.policy, budget, episode.dt)
            if reason is not None:
                transcript.terminal_reason = reason
                transcript.stop_index = t
                transcript.stop_pose = pose
                transcript.nav_error = metrics.nav_error(pose, episode.target)
                return transcript
            if closed_loop:
                pose = advance(pose, outcome.action, episode.dt, kin)
            t += 1


def run_episode(
    episode: Episode,
    agent: Agent,
    depth: DepthEstimator,
    cfg: PipelineConfig | None = None,
    mode: RepresentationMode = RepresentationMode.MATRIX,
    policy: DeviationPolicy | None = None,
    **kwargs,
) -> Transcript:
    return EpisodeRunner(depth, cfg, mode, policy, **kwargs).run(episode, agent)


__all__ = [
    "DeviationPolicy",
    "EpisodeRunner",
    "RepresentationMode",
    "StepRecord",
    "TerminalReason",
    "Transcript",
    "build_prompts",
    "check_termination",
    "load_system_prompt",
    "run_episode",
]
