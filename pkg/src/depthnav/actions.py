"""The four-action space and the parser for model replies."""

from __future__ import annotations

import enum
import json
import re

from depthnav.errors import UnrecognizedActionError


class Action(str, enum.Enum):
    FORWARD = "FORWARD"
    LEFT_ROTATE = "LEFT ROTATE"
    RIGHT_ROTATE = "RIGHT ROTATE"
    STOP = "STOP"

    def __str__(self) -> str:
        return self.value


_FENCE = re.compile(r"^```[a-zA-Z]*\s*|\s*```$")
_STRIP = " \t\r\n.,;:!?\"'`*()[]<>"
ACTION_LINE = re.compile(r"^\s*\**action\**\s*[:=]\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)


def _strip_fences(text: str) -> str:
    text = text.strip()
    while text.startswith("```") or text.endswith("```"):
        stripped = _FENCE.sub("", text).strip()
        if stripped == text:
            break
        text = stripped
    return text


def _lookup(token: str) -> Action | None:
    key = " ".join(token.strip(_STRIP).replace("_", " ").replace("-", " ").split()).upper()
    try:
        return Action(key)
    except ValueError:
        return None


def extract_json(text: str) -> dict | None:
    """Return the JSON object in ``text`` (code fences allowed), else None."""
    body = _strip_fences(text)
    if not body.startswith("{"):
        return None
    try:
        obj = json.loads(body)
    except json.JSONDecodeError:
        return None
    return obj if isinstance(obj, dict) else None


def parse_action(action_text: str) -> Action:
    """Map model output onto the closed action vocabulary.

    Accepts a bare action name (any case, ``_`` or space separated, with
    surrounding punctuation or code fences), a JSON object with an
    ``"action"`` field, or a trailing ``Action: ...`` line.
    """
    if action_text is None:
        raise UnrecognizedActionError("")
    obj = extract_json(action_text)
    if obj is not None:
        value = obj.get("action")
        found = _lookup(value) if isinstance(value, str) else None
        if found is None:
            raise UnrecognizedActionError(action_text)
        return found
    found = _lookup(_strip_fences(action_text))
    if found is not None:
        return found
    lines = ACTION_LINE.findall(action_text)
    if lines:
        found = _lookup(lines[-1])
        if found is not None:
            return found
    raise UnrecognizedActionError(action_text)
