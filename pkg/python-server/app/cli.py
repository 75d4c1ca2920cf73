"""
Command line entry point: ``run`` benchmark trials, ``serve`` the mock policy
server, ``report`` on saved metrics.

Exit codes: 0 success, 1 runtime or environment failure, 2 usage error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.core.config import settings
from app.core.errors import DatalogError, MetricsError, ScenarioNotFound
from app.models.core_types import ImpedanceRange
from app.models.records import EpisodeResult, MetricsReport, Mode
from app.models.scenario import ScenarioSpec, load_scenario, resolve_scenarios
from app.services.datalog_service import (
    compare_report,
    compute_metrics,
    load_metrics,
    read_jsonl,
    report_table,
    write_json,
    write_jsonl,
    write_manifest,
)
from app.services.orchestrator import RateConfig, TrialJob, run_benchmark
from app.services.phase_detector import PhaseConfig
from app.services.plotting_service import render_episode_trace, render_success_chart
from app.services.policy_service import PolicyHandle, PolicyKind
from app.services.safety_monitor import SafetyConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

POLICY_KINDS = {
    "waypoint": PolicyKind.SCRIPTED_WAYPOINT,
    "noisy": PolicyKind.SCRIPTED_NOISY,
    "remote": PolicyKind.REMOTE,
}


class UsageError(ValueError):
    pass


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario: str = "all"
    mode: Literal["baseline", "adaptor", "both"] = "both"
    trials: int = Field(default=10, ge=1)
    seed: int = Field(default=0, ge=0)
    advisor: Literal["heuristic", "remote"] = "heuristic"
    output_dir: Path = Path(settings.OUTPUT_DIR)
    scenario_dir: Optional[Path] = None
    policy: Literal["waypoint", "noisy", "remote"] = "noisy"
    policy_noise: Optional[float] = Field(default=None, ge=0.0)
    policy_url: Optional[str] = None
    safety: SafetyConfig = Field(default_factory=SafetyConfig)
    rates: RateConfig = Field(default_factory=RateConfig)
    phase: PhaseConfig = Field(default_factory=PhaseConfig)
    k_min: Optional[List[float]] = None
    k_max: Optional[List[float]] = None
    workers: int = Field(default=1, ge=1)

    @property
    def modes(self) -> List[Mode]:
        if self.mode == "both":
            return [Mode.BASELINE, Mode.ADAPTOR]
        return [Mode(self.mode)]

    def impedance_range(self, spec: ScenarioSpec) -> Optional[ImpedanceRange]:
        if self.k_min is None and self.k_max is None:
            return None
        values = spec.impedance_range.model_dump()
        if self.k_min is not None:
            values["k_min"] = self.k_min
        if self.k_max is not None:
            values["k_max"] = self.k_max
        return ImpedanceRange(**values)

    def policy_handle(self, spec: ScenarioSpec) -> PolicyHandle:
        overrides: Dict[str, Any] = {"kind": POLICY_KINDS[self.policy], "seed": self.seed}
        if self.policy_noise is not None:
            overrides["noise_std"] = self.policy_noise
        if self.policy == "remote":
            from app.services.bridge_service import default_server_url

            overrides["server_url"] = self.policy_url or default_server_url()
            overrides["timeout"] = settings.BRIDGE_TIMEOUT
            overrides["retries"] = settings.BRIDGE_RETRIES
        return PolicyHandle.for_scenario(spec, **overrides)


def _vector_arg(values: Optional[List[float]]) -> Optional[List[float]]:
    if values is None:
        return None
    if len(values) == 1:
        return values * 3
    if len(values) != 3:
        raise UsageError(f"expected 1 or 3 numbers, got {len(values)}")
    return values


def _drop_none(values: Dict[str, Any]) -> Dict[str, Any]:
    return {k: v for k, v in values.items() if v is not None}


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    safety = SafetyConfig(
        **_drop_none(
            {
                "hard_threshold": args.hard_threshold,
                "soft_threshold": args.soft_threshold,
                "consecutive_limit": args.consecutive_limit,
                "metric": args.force_metric,
            }
        )
    )
    rates = RateConfig(
        **_drop_none(
            {
                "chunk_keep": args.chunk_keep,
                "action_clip": _vector_arg(args.action_clip),
                "record_decimation": 1 if args.full_rate_log else None,
            }
        )
    )
    return RunConfig(
        **_drop_none(
            {
                "scenario": args.scenario,
                "mode": args.mode,
                "trials": args.trials,
                "seed": args.seed,
                "advisor": args.advisor,
                "output_dir": args.output_dir,
                "scenario_dir": args.scenario_dir,
                "policy": args.policy,
                "policy_noise": args.policy_noise,
                "policy_url": args.policy_url,
                "k_min": _vector_arg(args.k_min),
                "k_max": _vector_arg(args.k_max),
                "workers": args.workers,
            }
        ),
        safety=safety,
        rates=rates,
    )


def _episode_path(mode: Mode, result: EpisodeResult) -> Path:
    return Path(mode.value) / "episodes" / f"{result.scenario_id}_trial{result.trial:02d}.jsonl"


def cmd_run(cfg: RunConfig) -> int:
    specs = resolve_scenarios(cfg.scenario, cfg.scenario_dir)
    if cfg.advisor == "remote" and "adaptor" in {m.value for m in cfg.modes} and not settings.ADVISOR_URL:
        logger.error("Remote advisor selected but ADVISOR_URL is not set")
        return EXIT_FAILURE

    jobs = [
        TrialJob(
            spec=spec,
            mode=mode,
            trial=trial,
            seed=cfg.seed,
            policy=cfg.policy_handle(spec),
            advisor=cfg.advisor,
            rates=cfg.rates,
            safety=cfg.safety,
            phase=cfg.phase,
            impedance_range=cfg.impedance_range(spec),
        )
        for spec in specs
        for mode in cfg.modes
        for trial in range(cfg.trials)
    ]
    logger.info(
        f"Running {len(jobs)} episodes: scenarios={[s.id for s in specs]} "
        f"modes={[m.value for m in cfg.modes]} trials={cfg.trials} seed={cfg.seed}"
    )
    results = run_benchmark(jobs, workers=cfg.workers)

    out = cfg.output_dir
    files: List[str] = []
    reports: Dict[Mode, MetricsReport] = {}
    for mode in cfg.modes:
        mode_results = [r for r in results if r.mode is mode]
        for result in mode_results:
            relative = _episode_path(mode, result)
            write_jsonl(result.records, out / relative)
            files.append(relative.as_posix())
        report = compute_metrics(mode_results, mode)
        write_json(report, out / mode.value / "metrics.json")
        files.append(f"{mode.value}/metrics.json")
        reports[mode] = report
        sys.stdout.write(report_table(report))

    if len(reports) == 2:
        table = compare_report(reports[Mode.BASELINE], reports[Mode.ADAPTOR])
        write_json(table, out / "comparison.json")
        (out / "comparison.txt").write_text(table.to_text(), encoding="utf-8")
        render_success_chart(table, out / "comparison.svg")
        files.extend(["comparison.json", "comparison.txt", "comparison.svg"])
        sys.stdout.write(table.to_text())

    write_manifest(
        out / "manifest.json",
        {
            "seed": cfg.seed,
            "trials": cfg.trials,
            "scenarios": [s.id for s in specs],
            "modes": [m.value for m in cfg.modes],
            "advisor": cfg.advisor,
            "policy": cfg.policy,
            "config": json.loads(cfg.model_dump_json(exclude={"output_dir", "scenario_dir"})),
            "outcomes": {
                f"{r.mode.value}/{r.scenario_id}/{r.trial}": r.outcome.value for r in results
            },
            "files": sorted(files),
        },
    )
    logger.info(f"Results written to {out}")
    return EXIT_OK


def parse_bind(value: str) -> Tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise UsageError(f"--bind expects host:port, got '{value}'")
    return host, int(port)


def cmd_serve(args: argparse.Namespace) -> int:
    from app.services.bridge_service import serve_mock_policy

    bind = parse_bind(args.bind or f"{settings.BRIDGE_HOST}:{settings.BRIDGE_PORT}")
    if args.policy == "remote":
        raise UsageError("the mock server runs a scripted policy; use waypoint or noisy")
    spec = load_scenario(args.scenario, args.scenario_dir)
    overrides: Dict[str, Any] = {"kind": POLICY_KINDS[args.policy], "seed": args.seed}
    if args.policy_noise is not None:
        overrides["noise_std"] = args.policy_noise
    handle = PolicyHandle.for_scenario(spec, **overrides)
    try:
        serve_mock_policy(bind, handle, log_level=(args.log_level or settings.LOG_LEVEL).lower())
    except OSError as e:
        logger.error(f"Cannot serve on {bind[0]}:{bind[1]}: {e}")
        return EXIT_FAILURE
    except KeyboardInterrupt:
        logger.info("Interrupted")
    return EXIT_OK


def _pair_reports(reports: List[MetricsReport]) -> Tuple[MetricsReport, MetricsReport]:
    by_mode = {r.mode: r for r in reports if r.mode is not None}
    if Mode.BASELINE in by_mode and Mode.ADAPTOR in by_mode:
        return by_mode[Mode.BASELINE], by_mode[Mode.ADAPTOR]
    return reports[0], reports[1]


def cmd_report(args: argparse.Namespace) -> int:
    inputs = [Path(p) for p in args.input or []]
    traces = [Path(p) for p in args.trace or []]
    if not inputs and not traces:
        raise UsageError("report needs at least one --input or --trace")
    missing = [str(p) for p in inputs + traces if not p.is_file()]
    if missing:
        logger.error(f"Missing input files: {', '.join(missing)}")
        return EXIT_USAGE
    if len(inputs) > 2:
        raise UsageError("report compares at most two metrics files")

    out = Path(args.output) if args.output else Path(settings.OUTPUT_DIR) / "report"
    reports = [load_metrics(p) for p in inputs]
    if len(reports) == 2:
        table = compare_report(*_pair_reports(reports))
        text = table.to_text()
        write_json(table, out / "comparison.json")
        if not args.no_svg:
            render_success_chart(table, out / "comparison.svg")
    elif reports:
        text = report_table(reports[0])
    else:
        text = ""
    if text:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text, encoding="utf-8")
        sys.stdout.write(text)

    if not args.no_svg:
        for path in traces:
            render_episode_trace(read_jsonl(path), out / f"{path.stem}_trace.svg", args.force_limit)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run.py", description="Compliant variable-impedance benchmark and policy bridge"
    )
    parser.add_argument("--log-level", default=None, help="debug, info, warning or error")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run benchmark trials")
    run.add_argument("--config", type=Path, help="JSON file setting any run flag")
    run.add_argument("--scenario", help="scenario id or 'all'")
    run.add_argument("--mode", choices=["baseline", "adaptor", "both"])
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--advisor", choices=["heuristic", "remote"])
    run.add_argument("--output-dir", type=Path)
    run.add_argument("--scenario-dir", type=Path)
    run.add_argument("--policy", choices=sorted(POLICY_KINDS))
    run.add_argument("--policy-noise", type=float)
    run.add_argument("--policy-url")
    run.add_argument("--hard-threshold", type=float)
    run.add_argument("--soft-threshold", type=float)
    run.add_argument("--consecutive-limit", type=int)
    run.add_argument("--force-metric", choices=["axis_max", "norm"])
    run.add_argument("--k-min", type=float, nargs="+")
    run.add_argument("--k-max", type=float, nargs="+")
    run.add_argument("--chunk-keep", type=int)
    run.add_argument("--action-clip", type=float, nargs="+")
    run.add_argument("--full-rate-log", action="store_true", default=None)
    run.add_argument("--workers", type=int)

    serve = sub.add_parser("serve", help="run the mock policy websocket server")
    serve.add_argument("--bind", help="host:port (default from BRIDGE_HOST/BRIDGE_PORT)")
    serve.add_argument("--scenario", default="push_box", help="scenario supplying the waypoints")
    serve.add_argument("--scenario-dir", type=Path)
    serve.add_argument("--policy", choices=["waypoint", "noisy"], default="noisy")
    serve.add_argument("--policy-noise", type=float)
    serve.add_argument("--seed", type=int, default=0)

    report = sub.add_parser("report", help="tables and charts from saved results")
    report.add_argument("--input", action="append", help="metrics JSON file (repeatable)")
    report.add_argument("--trace", action="append", help="episode JSONL log to plot (repeatable)")
    report.add_argument("--output", help="output directory")
    report.add_argument("--force-limit", type=float, default=30.0)
    report.add_argument("--no-svg", action="store_true")

    parser.set_defaults(_subparsers={"run": run, "serve": serve, "report": report})
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, args: argparse.Namespace, argv) -> argparse.Namespace:
    """Re-parse with the config file as defaults so explicit flags still win."""
    path = getattr(args, "config", None)
    if path is None:
        return args
    try:
        values = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config file {path}: {e}") from e
    if not isinstance(values, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    subparser = args._subparsers[args.command]
    known = {action.dest for action in subparser._actions}
    values = {key.replace("-", "_"): value for key, value in values.items()}
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"unknown keys in config file {path}: {', '.join(unknown)}")
    subparser.set_defaults(**values)
    return parser.parse_args(argv)


def _configure_logging(level: Optional[str]) -> None:
    name = (level or settings.LOG_LEVEL or "info").upper()
    logging.basicConfig(
        level=getattr(logging, name, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    _configure_logging(args.log_level)

    try:
        args = _apply_config_file(parser, args, argv)
        if args.command == "run":
            return cmd_run(run_config_from_args(args))
        if args.command == "serve":
            return cmd_serve(args)
        return cmd_report(args)
    except SystemExit as e:
        return int(e.code or 0)
    except (UsageError, ScenarioNotFound, ValidationError, MetricsError) as e:
        message = e.args[0] if isinstance(e, ScenarioNotFound) else str(e)
        logger.error(message)
        return EXIT_USAGE
    except DatalogError as e:
        logger.error(str(e))
        return EXIT_FAILURE
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return EXIT_FAILURE
