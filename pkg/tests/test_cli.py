import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from depthnav import array_store, cli
from depthnav.controller import Transcript

from conftest import CORPUS, FULL


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_help_shows_defaults(capsys):
    with pytest.raises(SystemExit):
        cli.main(["run", "--help"])
    out = " ".join(capsys.readouterr().out.split())
    for text in ("(default: 40)", "(default: 1)", "(default: 99)", "(default: 4)", "(default: 0.0001)"):
        assert text in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "depthnav", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout


def test_depth_from_npz(tmp_path):
    assert cli.main(["depth", str(FULL / "frame.npz"), "-o", str(tmp_path)]) == 0
    text = (tmp_path / "depth_matrix.txt").read_text(encoding="utf-8")
    assert text.startswith("Depth matrix 9x16")
    with Image.open(tmp_path / "depth_map.png") as im:
        assert im.size == (640, 360) and im.mode == "RGB"
    (rec,) = array_store.read_npz((tmp_path / "depth.npz").read_bytes())
    assert rec.dtype == "<f4" and rec.shape == (360, 640)


def test_depth_ratio_flag(tmp_path):
    assert cli.main(["depth", str(FULL / "frame.npz"), "-o", str(tmp_path), "--ratio", "20"]) == 0
    assert (tmp_path / "depth_matrix.txt").read_text(encoding="utf-8").startswith("Depth matrix 18x32")


def test_depth_from_image_replay(tmp_path, capsys):
    args = ["depth", str(FULL / "frame.png"), "-o", str(tmp_path), "--replay-dir", str(FULL)]
    assert cli.main(args) == 0
    m = (tmp_path / "depth_matrix.txt").read_text(encoding="utf-8").splitlines()
    # row 0 samples pixel (20, 20): 0.5 + 0.4 + 0.2
    assert m[1].split()[0] == "1.10"


def test_depth_missing_replay_exits_2(tmp_path, capsys):
    args = ["depth", str(FULL / "frame.png"), "-o", str(tmp_path), "--replay-dir", str(tmp_path), "--frame-key", "nope"]
    assert cli.main(args) == 2
    assert "MissingReplayFileError" in capsys.readouterr().err


def test_non_divisible_ratio_drops_remainder(tmp_path, capsys):
    assert cli.main(["depth", str(FULL / "frame.npz"), "-o", str(tmp_path), "--ratio", "7"]) == 0
    assert (tmp_path / "depth_matrix.txt").read_text(encoding="utf-8").startswith("Depth matrix 51x91")


def test_bad_ratio_is_config_error(tmp_path, capsys):
    assert cli.main(["depth", str(FULL / "frame.npz"), "-o", str(tmp_path), "--ratio", "0"]) == 2
    assert "error: ConfigError" in capsys.readouterr().err


def test_run_corpus(tmp_path, corpus_args, capsys):
    out = tmp_path / "tr"
    code = cli.main(["run", str(CORPUS / "episodes.jsonl"), "-o", str(out), *corpus_args])
    assert code == 1  # one ParseFailure in the corpus
    names = sorted(p.name for p in out.iterdir())
    assert names == sorted(f"{i}.json" for i in ("farm-1", "farm-2", "forest-1", "forest-2", "village-1", "village-2"))
    reasons = {p.stem: Transcript.load(p).terminal_reason.value for p in out.iterdir()}
    assert reasons["forest-2"] == "ParseFailure" and reasons["forest-1"] == "MaxSteps"


def test_run_then_eval_and_report(tmp_path, corpus_args, capsys):
    cli.main(["run", str(CORPUS / "episodes.jsonl"), "-o", str(tmp_path / "tr"), *corpus_args])
    code = cli.main(["eval", str(tmp_path / "tr"), "-o", str(tmp_path / "ev"),
                     "--episodes", str(CORPUS / "episodes.jsonl"), "--svg"])
    assert code == 1
    assert {p.name for p in (tmp_path / "ev").iterdir()} == {"summary.json", "report.txt", "report.csv", "sr_chart.svg"}
    capsys.readouterr()
    assert cli.main(["report", str(tmp_path / "ev" / "summary.json"), "--format", "csv"]) == 0
    out = capsys.readouterr().out
    assert out == (tmp_path / "ev" / "report.csv").read_text(encoding="utf-8")
    assert out.splitlines()[1].startswith("overall,6,0.50,1.77,569,7")


def test_workers_do_not_change_output(tmp_path, corpus_args):
    for n in ("1", "4"):
        cli.main(["run", str(CORPUS / "episodes.jsonl"), "-o", str(tmp_path / n), "--workers", n, *corpus_args])
    assert _tree(tmp_path / "1") == _tree(tmp_path / "4")


def test_empty_eval_exits_2(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert cli.main(["eval", str(tmp_path / "empty"), "-o", str(tmp_path / "ev")]) == 2
    assert "EmptyPoolError" in capsys.readouterr().err


def test_mock_without_script(tmp_path, capsys):
    args = ["run", str(CORPUS / "episodes.jsonl"), "-o", str(tmp_path), "--replay-dir", str(CORPUS / "depth")]
    assert cli.main(args) == 2
    assert "--script" in capsys.readouterr().err


def test_random_agent_is_reproducible(tmp_path, corpus_args):
    base = ["run", str(CORPUS / "episodes.jsonl"), "--agent", "random", "--seed", "3", *corpus_args]
    cli.main([*base, "-o", str(tmp_path / "a")])
    cli.main([*base, "-o", str(tmp_path / "b"), "--workers", "3"])
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


def _resolved(argv):
    return cli.resolve(cli.build_parser().parse_args(argv))


def test_config_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"ratio": 20, "tau": 2.0, "vlm_endpoint": "http://file", "model": "from-file"}))
    monkeypatch.setenv("MDE_VLM_ENDPOINT", "http://env")
    base = ["run", "e.jsonl", "-o", "o", "--config", str(cfg)]
    r = _resolved(base)
    assert r["ratio"] == 20 and r["tau"] == 2.0  # file over defaults
    assert r["vlm_endpoint"] == "http://env"  # env over file
    assert r["model"] == "from-file"
    assert r["height"] == 360  # defaults
    r = _resolved([*base, "--ratio", "40", "--vlm-endpoint", "http://flag"])
    assert r["ratio"] == 40 and r["vlm_endpoint"] == "http://flag"  # flags over everything


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"ratoi": 20}))
    assert cli.main(["run", str(CORPUS / "episodes.jsonl"), "-o", str(tmp_path), "--config", str(cfg)]) == 2
    assert "ratoi" in capsys.readouterr().err


def test_params_and_workers_validation():
    r = _resolved(["run", "e", "-o", "o", "--param", "max_depth=80", "--param", "model=small"])
    assert r["hyper_params"] == {"max_depth": "80", "model": "small"}
    with pytest.raises(cli.ConfigError):
        _resolved(["run", "e", "-o", "o", "--param", "novalue"])
    with pytest.raises(cli.ConfigError):
        _resolved(["run", "e", "-o", "o", "--workers", "0"])


def test_simulate_writes_episodes(tmp_path, capsys):
    assert cli.main(["simulate", "--count", "3", "-o", str(tmp_path), "--height", "36", "--width", "64", "--ratio", "4"]) == 0
    lines = (tmp_path / "episodes.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 3
    assert all(json.loads(line)["steps"][0]["frame"] == "synthetic" for line in lines)


def test_depth_matrix_values_match_npz(tmp_path):
    cli.main(["depth", str(FULL / "frame.npz"), "-o", str(tmp_path), "--ratio", "20"])
    field = array_store.load_entry(FULL / "frame.npz").to_array()
    rows = (tmp_path / "depth_matrix.txt").read_text(encoding="utf-8").splitlines()[1:]
    got = np.array([[float(v) for v in r.split()] for r in rows])
    assert np.allclose(got, np.round(field[10::20, 10::20], 2), atol=1e-9)
