"""Benchmark episode schema and JSON-lines loader.

One episode object per line::

    {"id": "farm-001", "scene": "farm", "subtask_count": 2,
     "instruction": "...", "dt": 0.2, "max_steps": 60, "target": [x, y],
     "steps": [{"frame": "frames/farm-001/0000.png", "action": "FORWARD",
                "pose": [x, y, heading_deg]}, ...],
     "world": {...}}                       # synthetic episodes only

Frame paths are relative to the episode file. A frame value of
``"synthetic"`` marks a step with no recorded image.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

from depthnav.actions import Action
from depthnav.errors import MissingFrameError, SchemaError
from depthnav.sim import Pose, World

log = logging.getLogger(__name__)

SYNTHETIC_FRAME = "synthetic"
DEFAULT_DT = 0.2


class SceneClass(str, enum.Enum):
    FARM = "farm"
    GREENHOUSE = "greenhouse"
    FOREST = "forest"
    MOUNTAIN = "mountain"
    GARDEN = "garden"
    VILLAGE = "village"


# Reporting order.
SCENE_ORDER = tuple(SceneClass)


@dataclass(frozen=True)
class Step:
    frame_ref: str
    gt_action: Action
    pose: Pose

    @property
    def is_synthetic(self) -> bool:
        return self.frame_ref == SYNTHETIC_FRAME


@dataclass(frozen=True)
class Episode:
    id: str
    scene: SceneClass
    subtask_count: int
    instruction: str
    steps: tuple[Step, ...]
    target: tuple[float, float]
    max_steps: int
    dt: float = DEFAULT_DT
    world: World | None = None
    root: Path | None = None

    def __post_init__(self):
        if not self.steps:
            raise SchemaError("episode has no steps", field="steps")
        if self.steps[-1].gt_action is not Action.STOP:
            raise SchemaError("last ground-truth action must be STOP", field="steps")
        if self.subtask_count < 1:
            raise SchemaError("subtask_count must be >= 1", field="subtask_count")
        if self.dt <= 0:
            raise SchemaError("dt must be positive", field="dt")
        if self.max_steps < 1:
            raise SchemaError("max_steps must be >= 1", field="max_steps")

    @property
    def is_synthetic(self) -> bool:
        return self.world is not None

    def frame_path(self, t: int) -> Path:
        ref = self.steps[t].frame_ref
        return (self.root or Path(".")) / ref

    def frame_key(self, t: int) -> str:
        """Replay key: the frame path without its suffix."""
        if t >= len(self.steps) or self.steps[t].is_synthetic:
            return f"{self.id}/{t:04d}"
        return Path(self.steps[t].frame_ref).with_suffix("").as_posix()

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "scene": self.scene.value,
            "subtask_count": self.subtask_count,
            "instruction": self.instruction,
            "dt": self.dt,
            "max_steps": self.max_steps,
            "target": list(self.target),
            "steps": [
                {"frame": s.frame_ref, "action": s.gt_action.value, "pose": s.pose.as_list()}
                for s in self.steps
            ],
        }
        if self.world is not None:
            d["world"] = self.world.to_dict()
        return d


def _get(obj: dict, key: str, kind, line: int, path: str = ""):
    fullpath = f"{path}.{key}" if path else key
    if key not in obj:
        raise SchemaError("missing field", line=line, field=fullpath)
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise SchemaError(f"expected a finite number, got {value!r}", line=line, field=fullpath)
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(f"expected an integer, got {value!r}", line=line, field=fullpath)
        return value
    if not isinstance(value, kind):
        raise SchemaError(f"expected {kind.__name__}, got {value!r}", line=line, field=fullpath)
    return value


def _point(value, n: int, line: int, path: str) -> tuple[float, ...]:
    ok = (
        isinstance(value, list)
        and len(value) == n
        and all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in value)
    )
    if not ok:
        raise SchemaError(f"expected {n} finite numbers, got {value!r}", line=line, field=path)
    return tuple(float(v) for v in value)


def episode_from_dict(obj: dict, line: int = 0, root: Path | None = None) -> Episode:
    if not isinstance(obj, dict):
        raise SchemaError("episode must be a JSON object", line=line)
    ep_id = _get(obj, "id", str, line)
    scene_name = _get(obj, "scene", str, line)
    try:
        scene = SceneClass(scene_name.lower())
    except ValueError:
        raise SchemaError(f"unknown scene {scene_name!r}", line=line, field="scene") from None
    raw_steps = _get(obj, "steps", list, line)
    steps = []
    for i, raw in enumerate(raw_steps):
        path = f"steps[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError("step must be an object", line=line, field=path)
        frame = _get(raw, "frame", str, line, path)
        action_name = _get(raw, "action", str, line, path)
        try:
            action = Action(action_name.upper().replace("_", " "))
        except ValueError:
            raise SchemaError(f"unknown action {action_name!r}", line=line, field=f"{path}.action") from None
        x, y, heading = _point(raw.get("pose"), 3, line, f"{path}.pose")
        steps.append(Step(frame, action, Pose(x, y, heading)))
    world = None
    if "world" in obj:
        try:
            world = World.from_dict(_get(obj, "world", dict, line))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad world: {exc}", line=line, field="world") from None
    try:
        return Episode(
            id=ep_id,
            scene=scene,
            subtask_count=_get(obj, "subtask_count", int, line),
            instruction=_get(obj, "instruction", str, line),
            steps=tuple(steps),
            target=_point(obj.get("target"), 2, line, "target"),
            max_steps=_get(obj, "max_steps", int, line),
            dt=_get(obj, "dt", float, line) if "dt" in obj else DEFAULT_DT,
            world=world,
            root=root,
        )
    except SchemaError as exc:
        if exc.line is None:
            raise SchemaError(exc.message, line=line, field=exc.field) from None
        raise


def load_episodes(path, check_frames: bool = True) -> list[Episode]:
    path = Path(path)
    root = path.parent
    episodes = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line=lineno) from None
            ep = episode_from_dict(obj, lineno, root)
            if ep.id in seen:
                raise SchemaError(f"duplicate episode id {ep.id!r}", line=lineno, field="id")
            seen.add(ep.id)
            episodes.append(ep)
    if check_frames:
        missing = [
            s.frame_ref
            for ep in episodes
            for s in ep.steps
            if not s.is_synthetic and not (root / s.frame_ref).is_file()
        ]
        if missing:
            raise MissingFrameError(missing)
    return episodes


def dumps_episodes(episodes: list[Episode]) -> str:
    return "".join(
        json.dumps(ep.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for ep in episodes
    )


def save_episodes(path, episodes: list[Episode]) -> None:
    Path(path).write_text(dumps_episodes(episodes), encoding="utf-8")


def split_by_complexity(episodes: list[Episode]) -> tuple[list[Episode], list[Episode]]:
    """Low = two subtasks, high = three or more.

    Episodes with a single subtask are put in the low split with a warning.
    """
    low, high = [], []
    for ep in episodes:
        if ep.subtask_count >= 3:
            high.append(ep)
        else:
            if ep.subtask_count < 2:
                log.warning("episode %s has subtask_count %d; counted as low", ep.id, ep.subtask_count)
            low.append(ep)
    return low, high
