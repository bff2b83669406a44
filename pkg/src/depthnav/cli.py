"""Command-line entry point: ``depthnav {depth,run,simulate,eval,report}``.

Settings resolve as flags > environment > ``--config`` JSON > defaults.
Exit codes: 0 success, 1 episode-level failures recorded, 2 configuration
or IO error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from depthnav import __version__, array_store, metrics, pipeline, synthetic
from depthnav.actions import Action
from depthnav.clients import (
    DEFAULT_TEMPERATURE,
    DEFAULT_VLM_MODEL,
    ENV_DEPTH_ENDPOINT,
    ENV_VLM_API_KEY,
    ENV_VLM_ENDPOINT,
    DepthBackend,
    EstimatorConfig,
    HttpVlmClient,
    OracleAgent,
    ScriptedVlm,
    fixed_agent,
    make_estimator,
    random_agent,
)
from depthnav.controller import DeviationPolicy, EpisodeRunner, RepresentationMode, TerminalReason, Transcript
from depthnav.episodes import load_episodes, save_episodes
from depthnav.errors import DepthNavError, EmptyPoolError
from depthnav.pipeline import PipelineConfig, RenderConfig, Unit

log = logging.getLogger("depthnav")

EXIT_OK, EXIT_FAILURES, EXIT_CONFIG = 0, 1, 2

DEFAULTS = {
    "height": 360,
    "width": 640,
    "ratio": 40,
    "lower": 1.0,
    "upper": 99.0,
    "tau": 4.0,
    "temperature": DEFAULT_TEMPERATURE,
    "mode": "matrix",
    "unit": "meters",
    "depth_backend": "replay",
    "replay_dir": None,
    "depth_endpoint": None,
    "hyper_params": {},
    "agent": "mock",
    "script": None,
    "fixed_action": "STOP",
    "vlm_endpoint": None,
    "api_key": None,
    "model": DEFAULT_VLM_MODEL,
    "workers": 1,
    "seed": 0,
    "stop_distance": 1.5,
}
ENV = {
    "vlm_endpoint": ENV_VLM_ENDPOINT,
    "api_key": ENV_VLM_API_KEY,
    "depth_endpoint": ENV_DEPTH_ENDPOINT,
}


class ConfigError(Exception):
    pass


def _d(name: str) -> str:
    return f"(default: {DEFAULTS[name]:g})" if isinstance(DEFAULTS[name], float) else f"(default: {DEFAULTS[name]})"


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags, environment, config file and defaults into one dict."""
    file_cfg = {}
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config {args.config} must hold a JSON object")
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for key, default in DEFAULTS.items():
        value = getattr(args, key, None)
        if value is None and key in ENV:
            value = os.environ.get(ENV[key]) or None
        if value is None:
            value = file_cfg.get(key, default)
        out[key] = value
    hp = dict(out["hyper_params"] or {})
    for item in getattr(args, "param", None) or []:
        k, sep, v = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        hp[k] = v
    out["hyper_params"] = {str(k): str(v) for k, v in hp.items()}
    if int(out["workers"]) < 1:
        raise ConfigError("--workers must be at least 1")
    return out


def _pipeline_cfg(cfg: dict) -> PipelineConfig:
    try:
        return PipelineConfig(
            int(cfg["height"]),
            int(cfg["width"]),
            int(cfg["ratio"]),
            RenderConfig(float(cfg["lower"]), float(cfg["upper"])),
        )
    except (ValueError, DepthNavError) as exc:
        raise ConfigError(str(exc)) from exc


def _estimator_cfg(cfg: dict) -> EstimatorConfig:
    return EstimatorConfig(
        backend=DepthBackend(cfg["depth_backend"]),
        endpoint=cfg["depth_endpoint"],
        replay_dir=cfg["replay_dir"],
        hyper_params=cfg["hyper_params"],
        output_unit=Unit(cfg["unit"]),
    )


# argument groups -----------------------------------------------------------

def _add_pipeline_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--height", type=int, help=f"target frame height in pixels {_d('height')}")
    g.add_argument("--width", type=int, help=f"target frame width in pixels {_d('width')}")
    g.add_argument("--ratio", type=int, help=f"downsampling ratio r for the depth matrix {_d('ratio')}")
    g.add_argument("--lower", type=float, help=f"lower clipping percentile l {_d('lower')}")
    g.add_argument("--upper", type=float, help=f"upper clipping percentile u {_d('upper')}")


def _add_depth_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("depth estimator")
    g.add_argument(
        "--depth-backend",
        choices=[b.value for b in DepthBackend],
        help=f"where depth fields come from {_d('depth_backend')}",
    )
    g.add_argument("--replay-dir", help="directory of <frame_key>.npz files for the replay backend")
    g.add_argument("--depth-endpoint", help=f"depth service base URL (env {ENV_DEPTH_ENDPOINT})")
    g.add_argument(
        "--param", action="append", metavar="KEY=VALUE", help="estimator hyper-parameter, repeatable"
    )
    g.add_argument(
        "--unit", choices=[u.value for u in Unit], help=f"declared unit of estimated depth {_d('unit')}"
    )


def _add_run_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("agent")
    g.add_argument(
        "--agent",
        choices=["mock", "random", "fixed", "oracle", "http"],
        help=f"decision backend {_d('agent')}",
    )
    g.add_argument("--script", help="mock agent replies: JSON object of episode id -> list of replies")
    g.add_argument(
        "--fixed-action",
        choices=[a.value for a in Action],
        help=f"action returned by the fixed agent {_d('fixed_action')}",
    )
    g.add_argument("--vlm-endpoint", help=f"chat-completions base URL (env {ENV_VLM_ENDPOINT})")
    g.add_argument("--api-key", help=f"bearer key for the VLM service (env {ENV_VLM_API_KEY})")
    g.add_argument("--model", help=f"model name sent to the VLM service {_d('model')}")
    g.add_argument("--temperature", type=float, help=f"sampling temperature {_d('temperature')}")
    g.add_argument(
        "--mode",
        choices=[m.value for m in RepresentationMode],
        help=f"depth representation given to the agent {_d('mode')}",
    )
    g.add_argument("--tau", type=float, help=f"deviation threshold in seconds {_d('tau')}")
    g.add_argument("--workers", type=int, help=f"episodes run in parallel {_d('workers')}")
    g.add_argument("--seed", type=int, help=f"seed for the random agent {_d('seed')}")
    g.add_argument(
        "--stop-distance", type=float, help=f"oracle agent stopping distance in meters {_d('stop_distance')}"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depthnav",
        description="Depth-augmented navigation agent harness.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("depth", parents=[common], help="turn an image or depth NPZ into matrix, map and NPZ artifacts")
    p.add_argument("input", help="RGB image (PNG/JPEG) or NPZ holding a 'depth' entry")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--frame-key", help="replay key for the image (default: input file stem)")
    p.add_argument("--config", help="JSON file of settings")
    _add_pipeline_args(p)
    _add_depth_args(p)
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("run", parents=[common], help="run episodes and write one transcript per episode")
    p.add_argument("episodes", help="episode JSONL file")
    p.add_argument("-o", "--out", required=True, help="transcript directory")
    p.add_argument("--config", help="JSON file of settings")
    _add_pipeline_args(p)
    _add_depth_args(p)
    _add_run_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", parents=[common], help="generate synthetic episodes, optionally run the oracle")
    p.add_argument("--preset", default="corridor", choices=synthetic.PRESETS, help="layout family (default: corridor)")
    p.add_argument("--count", type=int, default=10, help="number of episodes (default: 10)")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--run-oracle", action="store_true", help="also run the oracle agent and evaluate")
    p.add_argument("--config", help="JSON file of settings")
    _add_pipeline_args(p)
    _add_run_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", parents=[common], help="aggregate transcripts into a metrics summary and report")
    p.add_argument("transcripts", help="directory of transcript JSON files")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--episodes", help="episode JSONL; checks cardinality and uses its labels")
    p.add_argument("--svg", action="store_true", help="also write a per-scene SR bar chart")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="render a saved summary.json")
    p.add_argument("summary", help="summary.json written by eval")
    p.add_argument("--format", choices=["text", "csv"], default="text", help="output format (default: text)")
    p.set_defaults(func=cmd_report)
    return parser


# subcommands -----------------------------------------------------------------

def cmd_depth(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    pcfg = _pipeline_cfg(cfg)
    src = Path(args.input)
    if not src.is_file():
        raise ConfigError(f"no such input {src}")
    if src.suffix.lower() == ".npz":
        values = array_store.load_entry(src, "depth").to_array()
        if values.ndim == 3 and values.shape[0] == 1:
            values = values[0]
        depth = pipeline.DepthField(values, Unit(cfg["unit"]))
    else:
        ecfg = _estimator_cfg(cfg)
        if ecfg.backend is DepthBackend.SYNTHETIC:
            raise ConfigError("the synthetic backend needs an episode world; use 'run' or 'simulate'")
        rgb = pipeline.preprocess_rgb(pipeline.load_image(src), pcfg)
        depth = make_estimator(ecfg).estimate(rgb, args.frame_key or src.stem)

    source = pipeline.normalize(depth) if depth.unit is Unit.RELATIVE else depth
    matrix = pipeline.downsample(source, pcfg.downsample_ratio)
    depth_map = pipeline.depth_to_map(depth, pcfg.render)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    array_store.save_npz(
        out / "depth.npz", [array_store.ArrayRecord.from_array("depth", depth.values.astype("<f4"))]
    )
    (out / "depth_map.png").write_bytes(depth_map.to_png())
    (out / "depth_matrix.txt").write_text(pipeline.serialize_matrix(matrix), encoding="utf-8")
    print(f"{matrix.rows}x{matrix.cols} matrix, {depth.height}x{depth.width} map -> {out}")
    return EXIT_OK


def _load_script(path) -> dict[str, list[str]]:
    try:
        script = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read script {path}: {exc}") from exc
    if not isinstance(script, dict) or not all(
        isinstance(v, list) and all(isinstance(r, str) for r in v) for v in script.values()
    ):
        raise ConfigError(f"script {path} must map episode ids to lists of strings")
    return script


def _agent_factory(cfg: dict):
    """Returns ``episode -> agent``; stateful agents are built per episode."""
    kind = cfg["agent"]
    if kind == "mock":
        if not cfg["script"]:
            raise ConfigError("the mock agent needs --script")
        script = _load_script(cfg["script"])

        def mock(ep):
            if ep.id not in script:
                raise ConfigError(f"script has no replies for episode {ep.id}")
            return ScriptedVlm(script[ep.id])

        return mock
    if kind == "random":
        seed = int(cfg["seed"])
        # keyed by episode id so results do not depend on scheduling
        return lambda ep: random_agent(f"{seed}:{ep.id}")
    if kind == "fixed":
        action = Action(cfg["fixed_action"])
        return lambda ep: fixed_agent(action)
    if kind == "oracle":
        stop = float(cfg["stop_distance"])
        return lambda ep: OracleAgent(stop)
    if not cfg["vlm_endpoint"]:
        raise ConfigError(f"the http agent needs --vlm-endpoint or {ENV_VLM_ENDPOINT}")
    client = HttpVlmClient(cfg["vlm_endpoint"], cfg["api_key"], cfg["model"])
    return lambda ep: client


def run_all(episodes, cfg: dict, out: Path) -> list[Transcript]:
    """Run and save every episode. A hard error in one episode is re-raised
    once the others have finished, so their transcripts survive."""
    pcfg = _pipeline_cfg(cfg)
    try:
        estimator = make_estimator(_estimator_cfg(cfg))
        runner = EpisodeRunner(
            estimator,
            pcfg,
            RepresentationMode(cfg["mode"]),
            DeviationPolicy(float(cfg["tau"])),
            temperature=float(cfg["temperature"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    make_agent = _agent_factory(cfg)
    out.mkdir(parents=True, exist_ok=True)

    def one(ep):
        tr = runner.run(ep, make_agent(ep))
        tr.save(out)
        log.info("%s: %s after %d steps, NE %.2f", ep.id, tr.terminal_reason.value, tr.stop_index + 1, tr.nav_error)
        return tr

    with ThreadPoolExecutor(max_workers=int(cfg["workers"])) as pool:
        futures = [pool.submit(one, ep) for ep in episodes]
    results, first_error = [], None
    for fut in futures:
        exc = fut.exception()
        if exc is None:
            results.append(fut.result())
        elif first_error is None:
            first_error = exc
    if first_error is not None:
        raise first_error
    return results


def _failures(transcripts) -> int:
    return sum(1 for tr in transcripts if tr.terminal_reason is TerminalReason.PARSE_FAILURE or tr.error)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    episodes = load_episodes(args.episodes)
    transcripts = run_all(episodes, cfg, Path(args.out))
    bad = _failures(transcripts)
    print(f"{len(transcripts)} transcripts -> {args.out}" + (f" ({bad} with failures)" if bad else ""))
    return EXIT_FAILURES if bad else EXIT_OK


def _write_eval(summary: metrics.MetricsSummary, out: Path, svg: bool) -> str:
    out.mkdir(parents=True, exist_ok=True)
    text = metrics.report(summary, "text")
    (out / "summary.json").write_text(summary.dumps(), encoding="utf-8")
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.csv").write_text(metrics.report(summary, "csv"), encoding="utf-8")
    if svg:
        (out / "sr_chart.svg").write_text(metrics.sr_chart_svg(summary), encoding="utf-8")
    return text


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    if args.count < 1:
        raise ConfigError("--count must be at least 1")
    pcfg = _pipeline_cfg(cfg)
    episodes = synthetic.generate(args.preset, args.count, pcfg, stop_distance=float(cfg["stop_distance"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_episodes(out / "episodes.jsonl", episodes)
    print(f"{len(episodes)} {args.preset} episodes -> {out / 'episodes.jsonl'}")
    if not args.run_oracle:
        return EXIT_OK
    cfg = {**cfg, "agent": "oracle", "depth_backend": "synthetic"}
    transcripts = run_all(episodes, cfg, out / "transcripts")
    summary = metrics.aggregate(episodes, transcripts)
    sys.stdout.write(_write_eval(summary, out / "eval", svg=False))
    return EXIT_FAILURES if _failures(transcripts) else EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    tdir = Path(args.transcripts)
    if not tdir.is_dir():
        raise ConfigError(f"no such transcript directory {tdir}")
    paths = sorted(tdir.glob("*.json"))
    if not paths:
        raise EmptyPoolError(f"no transcripts in {tdir}")
    transcripts = []
    for path in paths:
        try:
            transcripts.append(Transcript.load(path))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad transcript {path}: {exc}") from exc
    episodes = load_episodes(args.episodes, check_frames=False) if args.episodes else None
    summary = metrics.aggregate(episodes, transcripts)
    sys.stdout.write(_write_eval(summary, Path(args.out), args.svg))
    return EXIT_FAILURES if _failures(transcripts) else EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        summary = metrics.MetricsSummary.from_dict(
            json.loads(Path(args.summary).read_text(encoding="utf-8"))
        )
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read summary {args.summary}: {exc}") from exc
    sys.stdout.write(metrics.report(summary, args.format))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, DepthNavError, OSError) as exc:
        name = "ConfigError" if isinstance(exc, ConfigError) else type(exc).__name__
        print(f"error: {name}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
