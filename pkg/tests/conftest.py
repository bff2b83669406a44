import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

DATA = Path(__file__).parent / "data"
CORPUS = DATA / "corpus"
GOLDEN = DATA / "golden"
FULL = DATA / "full"

settings.register_profile(
    "default", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def corpus_args():
    """CLI flags that run the 6-episode corpus at its reduced frame size."""
    return [
        "--script", str(CORPUS / "scripts.json"),
        "--replay-dir", str(CORPUS / "depth"),
        "--height", "36", "--width", "64", "--ratio", "4",
    ]


def run_corpus():
    """(episodes, transcripts) for the 6-episode corpus under its scripted replies."""
    import json

    from depthnav.clients import FileReplayEstimator, ScriptedVlm
    from depthnav.controller import EpisodeRunner
    from depthnav.episodes import load_episodes
    from depthnav.pipeline import PipelineConfig

    episodes = load_episodes(CORPUS / "episodes.jsonl")
    scripts = json.loads((CORPUS / "scripts.json").read_text(encoding="utf-8"))
    runner = EpisodeRunner(FileReplayEstimator(CORPUS / "depth"), PipelineConfig(36, 64, 4))
    return episodes, [runner.run(ep, ScriptedVlm(scripts[ep.id])) for ep in episodes]
