"""Command-line surface.

Subcommands: optimize (generate a patch for a scenario), evaluate (run
trials and produce the metric report), report (merge runs into comparison
tables and a distance/ASR chart), verify (recheck a run's content hashes).

Exit codes: 0 success, 2 configuration/validation error, 3 oracle failure,
4 interrupted with checkpoints retained.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import SCHEMA_VERSION
from .metrics import MetricsReport, compute_report
from .nes import NesConfig, optimize
from .objective import ObjectiveConfig, SceneObjective
from .oracle import Action, HashEmbedder, HttpEmbedder, HttpOracle, MockOracle, OracleError
from .patch import load_patch, new_random_patch
from .report import asr_distance_svg, tables_csv
from .rundir import CheckpointWriter, RunDirectory, serialize_trials, verify_run
from .scenario import ScenarioConfig, builtin_scenarios, load_frames, render_frame, run_trial
from .transforms import CameraModel

ENDPOINT_ENV_VAR = "DRIVEPATCH_ENDPOINT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ORACLE = 3
EXIT_INTERRUPTED = 4


class ConfigError(Exception):
    pass


def _load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            return tomllib.loads(text)
        except Exception as exc:
            raise ConfigError(f"cannot parse TOML config {path}: {exc}") from exc
    try:
        return json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse JSON config {path}: {exc}") from exc


def _scenario_from_dict(data: dict) -> ScenarioConfig:
    try:
        cam = data["camera"]
        camera = CameraModel(
            int(cam["image_width"]),
            int(cam["image_height"]),
            float(cam.get("horizontal_fov_deg", 90.0)),
        )
        return ScenarioConfig(
            name=data["name"],
            camera=camera,
            speed_mps=float(data["speed_mps"]),
            frame_interval_s=float(data["frame_interval_s"]),
            onset_distance_m=float(data["onset_distance_m"]),
            pass_distance_m=float(data["pass_distance_m"]),
            mount_lateral_m=float(data["mount_lateral_m"]),
            mount_height_m=float(data["mount_height_m"]),
            patch_pixels=(int(data["patch_pixels"][0]), int(data["patch_pixels"][1])),
            patch_physical_m=(
                float(data["patch_physical_m"][0]),
                float(data["patch_physical_m"][1]),
            ),
            target_action=Action(data["target_action"]),
            target_response=data["target_response"],
            critical_object=data["critical_object"],
            keywords=tuple(data["keywords"]),
            prompt=data["prompt"],
            safe_critical_response=data["safe_critical_response"],
            optimize_distance_m=float(data["optimize_distance_m"]),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid scenario config: {exc}") from exc


def _scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "name": cfg.name,
        "camera": {
            "image_width": cfg.camera.image_width,
            "image_height": cfg.camera.image_height,
            "horizontal_fov_deg": cfg.camera.horizontal_fov_deg,
        },
        "speed_mps": cfg.speed_mps,
        "frame_interval_s": cfg.frame_interval_s,
        "onset_distance_m": cfg.onset_distance_m,
        "pass_distance_m": cfg.pass_distance_m,
        "mount_lateral_m": cfg.mount_lateral_m,
        "mount_height_m": cfg.mount_height_m,
        "patch_pixels": list(cfg.patch_pixels),
        "patch_physical_m": list(cfg.patch_physical_m),
        "target_action": cfg.target_action.value,
        "target_response": cfg.target_response,
        "critical_object": cfg.critical_object,
        "keywords": list(cfg.keywords),
        "prompt": cfg.prompt,
        "safe_critical_response": cfg.safe_critical_response,
        "optimize_distance_m": cfg.optimize_distance_m,
    }


def _resolve_scenario(config: dict) -> ScenarioConfig:
    spec = config.get("scenario", "crosswalk")
    if isinstance(spec, str):
        builtins = {s.name: s for s in builtin_scenarios()}
        if spec not in builtins:
            raise ConfigError(
                f"unknown scenario '{spec}' (builtins: {', '.join(sorted(builtins))})"
            )
        scenario = builtins[spec]
    elif isinstance(spec, dict):
        scenario = _scenario_from_dict(spec)
    else:
        raise ConfigError("'scenario' must be a builtin name or an inline table")

    overrides = config.get("scenario_overrides") or {}
    if overrides:
        merged = _scenario_to_dict(scenario)
        for key, value in overrides.items():
            if key == "camera":
                merged["camera"].update(value)
            elif key not in merged:
                raise ConfigError(f"unknown scenario override field '{key}'")
            else:
                merged[key] = value
        scenario = _scenario_from_dict(merged)
    return scenario


class ResolvedConfig:
    """Fully resolved run configuration (file merged with CLI flags)."""

    def __init__(self, raw: dict, args: argparse.Namespace):
        self.scenario = _resolve_scenario(raw)
        opt = dict(raw.get("optimizer") or {})
        if getattr(args, "seed", None) is not None:
            opt["seed"] = args.seed
        if getattr(args, "parallelism", None) is not None:
            opt["parallelism"] = args.parallelism
        try:
            self.nes = NesConfig(**opt)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid optimizer config: {exc}") from exc
        obj = dict(raw.get("objective") or {})
        obj.setdefault("target_response", self.scenario.target_response)
        try:
            self.objective = ObjectiveConfig(**obj)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid objective config: {exc}") from exc
        oracle_cfg = dict(raw.get("oracle") or {})
        if getattr(args, "oracle", None):
            oracle_cfg["kind"] = args.oracle
        if getattr(args, "endpoint", None):
            oracle_cfg["endpoint"] = args.endpoint
        oracle_cfg.setdefault("kind", "mock")
        if not oracle_cfg.get("endpoint"):
            oracle_cfg["endpoint"] = os.environ.get(ENDPOINT_ENV_VAR)
        self.oracle_kind = oracle_cfg["kind"]
        self.endpoint = oracle_cfg.get("endpoint")
        self.timeout = float(oracle_cfg.get("timeout", 30.0))
        self.retries = int(oracle_cfg.get("retries", 2))
        if self.oracle_kind not in ("mock", "http"):
            raise ConfigError(f"oracle kind must be 'mock' or 'http', got '{self.oracle_kind}'")
        if self.oracle_kind == "http" and not self.endpoint:
            raise ConfigError(
                f"http oracle requires an endpoint (flag --endpoint, config, or ${ENDPOINT_ENV_VAR})"
            )
        self.trials = int(getattr(args, "trials", None) or raw.get("trials", 10))
        self.frames_manifest = raw.get("frames_manifest")

    def build_oracle(self):
        if self.oracle_kind == "mock":
            return MockOracle()
        return HttpOracle(self.endpoint, timeout=self.timeout, retries=self.retries)

    def build_embedder(self):
        if self.oracle_kind == "mock":
            return HashEmbedder(self.objective.embed_dim)
        return HttpEmbedder(
            self.endpoint, dim=None, timeout=self.timeout, retries=self.retries
        )

    def snapshot(self) -> dict:
        return {
            "scenario": _scenario_to_dict(self.scenario),
            "optimizer": {
                "population_n": self.nes.population_n,
                "sigma": self.nes.sigma,
                "alpha": self.nes.alpha,
                "iterations": self.nes.iterations,
                "early_stop_loss": self.nes.early_stop_loss,
                "plateau_window": self.nes.plateau_window,
                "seed": self.nes.seed,
                "parallelism": self.nes.parallelism,
                "checkpoint_every": self.nes.checkpoint_every,
            },
            "objective": {
                "target_response": self.objective.target_response,
                "lambda_tv": self.objective.lambda_tv,
                "k_eot": self.objective.k_eot,
                "embed_dim": self.objective.embed_dim,
            },
            "oracle": {
                "kind": self.oracle_kind,
                "endpoint": self.endpoint,
                "timeout": self.timeout,
                "retries": self.retries,
            },
            "trials": self.trials,
            "frames_manifest": self.frames_manifest,
        }


def cmd_optimize(args: argparse.Namespace) -> int:
    try:
        resolved = ResolvedConfig(_load_config_file(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    scenario = resolved.scenario
    rundir = RunDirectory(args.out)
    rundir.write_json("config.json", resolved.snapshot())

    initial = new_random_patch(
        resolved.nes.seed,
        scenario.patch_pixels[0],
        scenario.patch_pixels[1],
        scenario.patch_physical_m[0],
        scenario.patch_physical_m[1],
    )
    scene = render_frame(scenario, scenario.optimize_distance_m)
    objective = SceneObjective(
        scene, resolved.objective, resolved.build_oracle(), resolved.build_embedder()
    )
    sink = CheckpointWriter(rundir, initial)

    started = time.time()
    try:
        result = optimize(initial, objective, resolved.nes, sink)
    except KeyboardInterrupt:
        rundir.write_json("runinfo.json", {"status": "interrupted", "wall_s": time.time() - started})
        rundir.finalize_index()
        print("interrupted; checkpoints retained", file=sys.stderr)
        return EXIT_INTERRUPTED

    rundir.write_patch(
        "best.png",
        result.best_theta,
        metadata={
            "scenario": scenario.name,
            "seed": resolved.nes.seed,
            "iterations_completed": result.iterations_completed,
            "best_loss": result.best_loss,
        },
    )
    sink.write_loss_history(
        list(result.loss_history), result.candidate_evals, result.oracle_queries
    )
    rundir.write_json(
        "result.json",
        {
            "status": result.status,
            "error": result.error,
            "best_loss": result.best_loss,
            "iterations_completed": result.iterations_completed,
            "candidate_evals": result.candidate_evals,
            "oracle_queries": result.oracle_queries,
        },
    )
    rundir.write_json("runinfo.json", {"status": result.status, "wall_s": time.time() - started})
    rundir.finalize_index()
    if result.status == "aborted":
        print(f"oracle failure: {result.error}", file=sys.stderr)
        return EXIT_ORACLE
    print(f"optimize: {result.status} best_loss={result.best_loss:.6f} -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        resolved = ResolvedConfig(_load_config_file(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    scenario = resolved.scenario
    patch = None
    if not args.benign:
        if not args.patch:
            print("config error: provide --patch PATH or --benign", file=sys.stderr)
            return EXIT_CONFIG
        try:
            patch = load_patch(args.patch)
        except (OSError, ValueError, KeyError) as exc:
            print(f"config error: cannot load patch: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if (patch.width, patch.height) != scenario.patch_pixels:
            print(
                f"config error: patch is {patch.width}x{patch.height} px but scenario "
                f"'{scenario.name}' expects {scenario.patch_pixels[0]}x{scenario.patch_pixels[1]}",
                file=sys.stderr,
            )
            return EXIT_CONFIG

    external = None
    if resolved.frames_manifest:
        try:
            external = load_frames(resolved.frames_manifest)
        except (OSError, ValueError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    oracle = resolved.build_oracle()
    embedder = resolved.build_embedder()
    adv_trials = []
    benign_trials = []
    for i in range(resolved.trials):
        if patch is not None:
            adv_trials.append(
                run_trial(scenario, patch, oracle, f"adv-{i:03d}", external_frames=external)
            )
        benign_trials.append(
            run_trial(scenario, None, oracle, f"benign-{i:03d}", external_frames=external)
        )

    all_frames = [f for t in adv_trials + benign_trials for f in t.frames]
    if all_frames and all(f.query_failed for f in all_frames):
        print("oracle failure: every query failed", file=sys.stderr)
        return EXIT_ORACLE

    report = compute_report(
        scenario.name,
        adv_trials,
        benign_trials,
        scenario.keywords,
        embedder,
        seed=resolved.nes.seed,
    )
    rundir = RunDirectory(args.out)
    rundir.write_json("config.json", resolved.snapshot())
    rundir.write_json("trials.json", serialize_trials(adv_trials + benign_trials))
    rundir.write_json("metrics.json", report.to_dict())
    run_label = Path(args.out).name
    rundir.write_text("tables.csv", tables_csv({run_label: report}))
    rundir.finalize_index()
    print(
        f"evaluate: {len(adv_trials)} adversarial + {len(benign_trials)} benign trials -> {args.out}"
    )
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    reports: dict[str, MetricsReport] = {}
    series: dict[str, dict[str, float]] = {}
    for run in args.runs:
        metrics_path = Path(run) / "metrics.json"
        if not metrics_path.exists():
            print(f"config error: {metrics_path} not found", file=sys.stderr)
            return EXIT_CONFIG
        data = json.loads(metrics_path.read_text(encoding="utf-8"))
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            print(
                f"config error: {metrics_path} has schema_version {version}, "
                f"this tool expects {SCHEMA_VERSION}",
                file=sys.stderr,
            )
            return EXIT_CONFIG
        label = Path(run).name
        reports[label] = MetricsReport.from_dict(data)
        if reports[label].asr_by_bin:
            series[label] = reports[label].asr_by_bin

    out = RunDirectory(args.out)
    out.write_text("comparison.csv", tables_csv(reports))
    out.write_text("asr_by_distance.svg", asr_distance_svg(series))
    out.finalize_index()
    print(f"report: {len(reports)} run(s) -> {args.out}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    problems = verify_run(args.run)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return 1
    print("ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drivepatch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="run config (JSON or TOML)")
        p.add_argument("--out", required=True, help="run directory to write")
        p.add_argument("--oracle", choices=["mock", "http"], help="oracle backend override")
        p.add_argument("--endpoint", help="HTTP oracle endpoint override")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--parallelism", type=int, help="concurrent candidate evaluations")

    p_opt = sub.add_parser("optimize", help="generate a patch for a scenario")
    common(p_opt)
    p_opt.set_defaults(func=cmd_optimize)

    p_eval = sub.add_parser("evaluate", help="run trials and compute metrics")
    common(p_eval)
    p_eval.add_argument("--patch", help="patch PNG to evaluate")
    p_eval.add_argument("--benign", action="store_true", help="baseline-only run")
    p_eval.add_argument("--trials", type=int, help="trials per condition")
    p_eval.set_defaults(func=cmd_evaluate)

    p_rep = sub.add_parser("report", help="merge runs into comparison tables and a chart")
    p_rep.add_argument("runs", nargs="+", help="run directories to merge")
    p_rep.add_argument("--out", required=True, help="output directory")
    p_rep.set_defaults(func=cmd_report)

    p_ver = sub.add_parser("verify", help="recheck a run directory's content hashes")
    p_ver.add_argument("run", help="run directory")
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OracleError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())
