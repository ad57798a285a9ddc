"""Command-line entry point (``infocircle``).

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error,
3 transport error talking to an LLM or embedding service.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
import threading
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from infocircle.core import (
    ContentKind,
    Mechanism,
    PolicySpec,
    RelationshipKind,
    ScenarioConfig,
    SimilaritySpec,
    Topology,
    load_config,
    make_config,
    validate_config,
)
from infocircle.engine import RunLog, Simulation, replay
from infocircle.graph import export_graph
from infocircle.metrics import MetricsReport, aggregate, compute_metrics, gap_csv, reports_csv, write_report_files
from infocircle.policy import (
    ConfigurationError,
    DecisionRequest,
    decide_forced_recruit,
    make_policy,
    prompt_size,
    render_prompt,
)
from infocircle.similarity import SimilarityError, make_provider
from infocircle.store import LogFormatError, read_run_log, run_log_lines, write_run_log

log = logging.getLogger("infocircle")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_TRANSPORT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _params(pairs: Sequence[str] | None) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise UsageError(f"expected key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _csv_list(value: str | None, enum: Any) -> list[Any]:
    if value is None:
        return list(enum)
    items = [v.strip() for v in value.split(",") if v.strip()]
    try:
        return [enum(v) for v in items]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _apply_overrides(config: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    changes: dict[str, Any] = {}
    if getattr(args, "policy", None):
        changes["policy"] = PolicySpec(args.policy, _params(args.policy_param))
    elif getattr(args, "policy_param", None):
        changes["policy"] = PolicySpec(config.policy.name, {**config.policy.params, **_params(args.policy_param)})
    if getattr(args, "provider", None):
        changes["similarity"] = SimilaritySpec(args.provider, _params(args.provider_param))
    if getattr(args, "seed", None) is not None:
        changes["rng_seed"] = args.seed
    if getattr(args, "rounds", None) is not None:
        changes["rounds"] = args.rounds
    if getattr(args, "threshold", None) is not None:
        changes["similarity_threshold"] = args.threshold
    config = replace(config, **changes)
    errors = validate_config(config)
    if errors:
        raise UsageError("invalid config: " + "; ".join(errors))
    return config


def _log_path(out_dir: Path, config: ScenarioConfig, rep: int | None = None) -> Path:
    suffix = f"-rep{rep}" if rep is not None else ""
    return out_dir / f"{config.name}-seed{config.rng_seed}{suffix}.jsonl"


def execute(config: ScenarioConfig, *, max_workers: int = 1) -> RunLog:
    policy = make_policy(config.policy)
    return Simulation(config, policy, max_workers=max_workers).run()


# --- commands -----------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    source = args.config_path or args.config
    if not source:
        raise UsageError("run needs a config file or bundled scenario name")
    config = _apply_overrides(load_config(source), args)
    run_log = execute(config, max_workers=args.jobs)
    out_dir = Path(args.out_dir)
    path = write_run_log(run_log, _log_path(out_dir, config))
    report = compute_metrics(run_log, make_provider(config.similarity))
    write_report_files({config.name: report}, out_dir, stem=path.stem + ".metrics")
    print(json.dumps({"log": str(path), "metrics": report.to_dict()}, indent=2))
    return EXIT_OK


def _batch_job(config_dict: dict[str, Any], path: str) -> dict[str, Any]:
    config = ScenarioConfig.from_dict(config_dict)
    try:
        run_log = execute(config)
        write_run_log(run_log, path)
        report = compute_metrics(run_log, make_provider(config.similarity))
    except Exception as exc:  # recorded, the batch carries on
        return {"config": config_dict, "log": path, "error": f"{type(exc).__name__}: {exc}"}
    return {"config": config_dict, "log": path, "report": report.to_dict()}


def cmd_batch(args: argparse.Namespace) -> int:
    contents = _csv_list(args.contents, ContentKind)
    mechanisms = _csv_list(args.mechanisms, Mechanism)
    topologies = _csv_list(args.topologies, Topology)
    polarities = _csv_list(args.polarities or "positive,negative", RelationshipKind)
    if RelationshipKind.GENERAL in polarities:
        raise UsageError("initial polarity must be positive or negative")
    if args.reps < 1:
        raise UsageError("--reps must be ≥ 1")
    combos = list(itertools.product(contents, mechanisms, polarities, topologies))
    if not combos:
        raise UsageError("empty batch: the cross product of the selected settings is empty")

    out_dir = Path(args.out_dir)
    jobs = []
    for content, mechanism, polarity, topology in combos:
        base = make_config(content, mechanism, polarity, topology)
        for rep in range(args.reps):
            ns = argparse.Namespace(**{**vars(args), "seed": args.seed + rep})
            config = _apply_overrides(base, ns)
            jobs.append((config.to_dict(), str(out_dir / "logs" / _log_path(Path(), config, rep).name)))

    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_batch_job, *zip(*jobs)))
    else:
        results = [_batch_job(c, p) for c, p in jobs]

    by_env: dict[str, list[MetricsReport]] = {}
    per_run: dict[str, MetricsReport] = {}
    failures = []
    for res in results:
        if "error" in res:
            failures.append(res)
            continue
        config = ScenarioConfig.from_dict(res["config"])
        report = MetricsReport(**res["report"])
        by_env.setdefault(config.name, []).append(report)
        per_run[Path(res["log"]).stem] = report
    aggregated = {env: aggregate(reports) for env, reports in by_env.items()}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "aggregate.csv").write_text(reports_csv(aggregated))
    (out_dir / "gaps.csv").write_text(gap_csv(aggregated))
    (out_dir / "runs.csv").write_text(reports_csv(per_run, key="run"))
    (out_dir / "failures.json").write_text(json.dumps(failures, indent=2) + "\n")
    print(json.dumps({"runs": len(results), "failed": len(failures), "environments": len(aggregated), "out_dir": str(out_dir)}))
    return EXIT_OK if not failures else EXIT_RUNTIME


def cmd_metrics(args: argparse.Namespace) -> int:
    rows: dict[str, MetricsReport] = {}
    for name in args.logs:
        run_log = read_run_log(name)
        spec = SimilaritySpec(args.provider, _params(args.provider_param)) if args.provider else run_log.config.similarity
        rows[Path(name).stem] = compute_metrics(run_log, make_provider(spec), args.threshold)
    if args.out_dir:
        write_report_files(rows, args.out_dir)
    print(json.dumps({k: v.to_dict() for k, v in rows.items()}, indent=2))
    return EXIT_OK


def cmd_export_graph(args: argparse.Namespace) -> int:
    run_log = read_run_log(args.log)
    stem = Path(args.out) if args.out else Path(args.log).with_suffix("")
    dot, js = export_graph(run_log, stem, include_inactive=args.include_inactive)
    print(json.dumps({"dot": str(dot), "json": str(js)}))
    return EXIT_OK


class PromptMeter:
    """Wraps a policy and records the largest prompt an LLM would have received."""

    def __init__(self, policy: Any) -> None:
        self.policy = policy
        self.max_prompt = 0
        self._lock = threading.Lock()

    def __call__(self, request: DecisionRequest):
        size = prompt_size(render_prompt(request))
        with self._lock:
            self.max_prompt = max(self.max_prompt, size)
        return self.policy(request)


def stress(steps: int, content: str = "OG", *, measure_prompts: bool = True) -> dict[str, Any]:
    if steps < 1:
        raise UsageError("steps must be ≥ 1")
    config = make_config(content, Mechanism.BC, RelationshipKind.POSITIVE, Topology.WHEEL, rounds=steps,
                         policy=PolicySpec("forced_recruit"))
    policy = PromptMeter(decide_forced_recruit) if measure_prompts else decide_forced_recruit
    started = time.perf_counter()
    run_log = Simulation(config, policy).run()
    elapsed = time.perf_counter() - started
    return {
        "steps": steps,
        "agents": run_log.final_state_summary["roster_size"],
        "messages": len(run_log.of_kind("message")),
        "wall_time_s": round(elapsed, 3),
        "max_prompt_words": policy.max_prompt if measure_prompts else None,
    }


def cmd_stress(args: argparse.Namespace) -> int:
    print(json.dumps(stress(args.steps, args.content, measure_prompts=not args.no_prompts)))
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    run_log = read_run_log(args.log)
    rebuilt = replay(run_log.config, run_log.events)
    ok = rebuilt == run_log.final_state_summary
    result: dict[str, Any] = {"log": args.log, "summary_matches": ok}
    if args.rerun:
        fresh = execute(run_log.config)
        result["rerun_identical"] = list(run_log_lines(fresh)) == list(run_log_lines(run_log))
        ok = ok and result["rerun_identical"]
    print(json.dumps(result))
    return EXIT_OK if ok else EXIT_RUNTIME


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="infocircle", description="Information diffusion in asymmetric open environments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, *, run_opts: bool = True) -> None:
        p.add_argument("--provider", choices=["tf_cosine", "embedding_api"])
        p.add_argument("--provider-param", action="append", metavar="KEY=VALUE")
        p.add_argument("--threshold", type=float)
        p.add_argument("--out-dir", default="runs")
        if run_opts:
            p.add_argument("--policy", choices=["silent", "relay_top", "epidemic", "forced_recruit", "llm"])
            p.add_argument("--policy-param", action="append", metavar="KEY=VALUE")
            p.add_argument("--seed", type=int)
            p.add_argument("--rounds", type=int)
            p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("config_path", nargs="?", help="config file or bundled scenario name")
    p.add_argument("--config")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run the environment matrix")
    p.add_argument("--contents", help="comma list of OG,PP,LC,SH")
    p.add_argument("--mechanisms", help="comma list of BC,OA,BCR")
    p.add_argument("--topologies", help="comma list of wheel,circle")
    p.add_argument("--polarities", help="comma list of positive,negative")
    p.add_argument("--reps", type=int, default=3)
    common(p)
    p.set_defaults(func=cmd_batch, seed=0)

    p = sub.add_parser("metrics", help="recompute metrics from logs")
    p.add_argument("logs", nargs="+")
    common(p, run_opts=False)
    p.set_defaults(func=cmd_metrics, out_dir=None)

    p = sub.add_parser("export-graph", help="write DOT and JSON lineage graphs")
    p.add_argument("log")
    p.add_argument("--out", help="output path stem (default: next to the log)")
    p.add_argument("--include-inactive", action="store_true")
    p.set_defaults(func=cmd_export_graph)

    p = sub.add_parser("stress", help="forced-recruit growth test")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--content", default="OG", choices=[k.value for k in ContentKind])
    p.add_argument("--no-prompts", action="store_true", help="skip prompt-size measurement")
    p.set_defaults(func=cmd_stress)

    p = sub.add_parser("replay", help="check a log replays to its recorded final state")
    p.add_argument("log")
    p.add_argument("--rerun", action="store_true", help="also re-simulate and compare byte-for-byte")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimilarityError as exc:
        print(f"error: similarity provider failed: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (LogFormatError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
