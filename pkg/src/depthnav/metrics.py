"""SR / NE / TU metrics and table rendering."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from depthnav.episodes import SCENE_ORDER, split_by_complexity
from depthnav.errors import CardinalityMismatchError, EmptyPoolError

SUCCESS_RADIUS = 2.0
TRIM_MIN_POOL = 20
TRIM_PERCENTILES = (5.0, 95.0)
COLUMNS = ("SR", "NE", "TU_p", "TU_c")


def nav_error(stop, target) -> float:
    """Straight-line ground-plane distance between stop position and target."""
    sx, sy = (stop.x, stop.y) if hasattr(stop, "x") else (stop[0], stop[1])
    return math.hypot(target[0] - sx, target[1] - sy)


def success(transcript) -> bool:
    reason = getattr(transcript.terminal_reason, "value", transcript.terminal_reason)
    return (
        reason == "PredictedStop"
        and transcript.nav_error is not None
        and transcript.nav_error <= SUCCESS_RADIUS
    )


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def trimmed_mean(pool: Sequence[float]) -> float:
    """Mean after dropping samples outside [P5, P95] when the pool has >= 20."""
    if len(pool) == 0:
        raise EmptyPoolError("no token samples to average")
    arr = np.asarray(pool, dtype=np.float64)
    if arr.size >= TRIM_MIN_POOL:
        lo, hi = np.percentile(arr, TRIM_PERCENTILES, method="linear")
        arr = arr[(arr >= lo) & (arr <= hi)]
    return float(arr.mean())


def token_usage(transcripts) -> tuple[int, int]:
    """(TU_p, TU_c): rounded trimmed means of per-step token counts.

    Steps whose agent reports no token usage (scripted baselines) are skipped.
    """
    prompt_pool, completion_pool = [], []
    for tr in transcripts:
        for rec in tr.records:
            if rec.prompt_tokens is not None:
                prompt_pool.append(rec.prompt_tokens)
            if rec.completion_tokens is not None:
                completion_pool.append(rec.completion_tokens)
    return (
        round_half_up(trimmed_mean(prompt_pool)),
        round_half_up(trimmed_mean(completion_pool)),
    )


@dataclass(frozen=True)
class SplitMetrics:
    name: str
    count: int
    sr: float | None
    ne: float | None
    tu_p: int | None
    tu_c: int | None


@dataclass(frozen=True)
class MetricsSummary:
    splits: tuple[SplitMetrics, ...]

    def split(self, name: str) -> SplitMetrics:
        for s in self.splits:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"splits": [asdict(s) for s in self.splits]}

    @classmethod
    def from_dict(cls, d: dict) -> MetricsSummary:
        return cls(tuple(SplitMetrics(**s) for s in d["splits"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _split_metrics(name: str, transcripts: list) -> SplitMetrics:
    n = len(transcripts)
    if n == 0:
        return SplitMetrics(name, 0, None, None, None, None)
    sr = sum(1 for tr in transcripts if success(tr)) / n
    ne = sum(tr.nav_error for tr in transcripts) / n
    try:
        tu_p, tu_c = token_usage(transcripts)
    except EmptyPoolError:
        tu_p = tu_c = None
    return SplitMetrics(name, n, sr, ne, tu_p, tu_c)


def aggregate(episodes, transcripts) -> MetricsSummary:
    """Per-split metrics: overall, low, high, then the six scenes.

    ``episodes`` may be None, in which case the scene and subtask labels
    stored in each transcript are used.
    """
    transcripts = list(transcripts)
    if episodes is not None:
        episodes = list(episodes)
        by_id = {tr.episode_id: tr for tr in transcripts}
        if len(episodes) != len(transcripts) or any(ep.id not in by_id for ep in episodes):
            raise CardinalityMismatchError(
                f"{len(episodes)} episodes vs {len(transcripts)} transcripts"
            )
        low_eps, high_eps = split_by_complexity(episodes)
        low = [by_id[ep.id] for ep in low_eps]
        high = [by_id[ep.id] for ep in high_eps]
        labelled = [(ep.scene.value, by_id[ep.id]) for ep in episodes]
    else:
        low = [tr for tr in transcripts if tr.subtask_count < 3]
        high = [tr for tr in transcripts if tr.subtask_count >= 3]
        labelled = [(tr.scene, tr) for tr in transcripts]
    for _, tr in labelled:
        if tr.nav_error is None:
            raise ValueError(f"transcript {tr.episode_id} has no nav_error")

    all_tr = [tr for _, tr in labelled]
    splits = [
        _split_metrics("overall", all_tr),
        _split_metrics("low", low),
        _split_metrics("high", high),
    ]
    for scene in SCENE_ORDER:
        splits.append(_split_metrics(scene.value, [tr for s, tr in labelled if s == scene.value]))
    return MetricsSummary(tuple(splits))


def _cells(s: SplitMetrics, thousands: bool) -> list[str]:
    fmt_tu = (lambda v: f"{v:,}") if thousands else str
    return [
        "-" if s.sr is None else f"{s.sr:.2f}",
        "-" if s.ne is None else f"{s.ne:.2f}",
        "-" if s.tu_p is None else fmt_tu(s.tu_p),
        "-" if s.tu_c is None else fmt_tu(s.tu_c),
    ]


def report(summary: MetricsSummary, fmt: str = "text") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["split", "episodes", *COLUMNS])
        for s in summary.splits:
            writer.writerow([s.name, s.count, *_cells(s, thousands=False)])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    rows = [["split", "episodes", *COLUMNS]]
    rows += [[s.name, str(s.count), *_cells(s, thousands=True)] for s in summary.splits]
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for k, row in enumerate(rows):
        head = row[0].ljust(widths[0])
        rest = [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        lines.append("  ".join([head, *rest]).rstrip())
        if k == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def sr_chart_svg(summary: MetricsSummary, width: int = 480, bar_height: int = 22) -> str:
    """Horizontal SR bar per scene as a standalone SVG document."""
    scenes = [s for s in summary.splits if s.name in {sc.value for sc in SCENE_ORDER}]
    label_w, pad = 110, 8
    plot_w = width - label_w - 60
    height = pad * 2 + bar_height * len(scenes)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">'
    ]
    for i, s in enumerate(scenes):
        y = pad + i * bar_height
        sr = s.sr or 0.0
        parts.append(f'<text x="{label_w - 6}" y="{y + 15}" text-anchor="end">{s.name}</text>')
        parts.append(
            f'<rect x="{label_w}" y="{y + 3}" width="{sr * plot_w:.1f}" '
            f'height="{bar_height - 6}" fill="#3b6fb6"/>'
        )
        text = "-" if s.sr is None else f"{s.sr:.2f}"
        parts.append(f'<text x="{label_w + sr * plot_w + 4:.1f}" y="{y + 15}">{text}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

