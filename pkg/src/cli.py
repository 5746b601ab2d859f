"""
causescope command line.

    python -m src.cli analyze --config run.json --out out/
    python -m src.cli oracle  --config run.json --out out/
    python -m src.cli verify  --results out/results.json --truth out/oracle.json --out out/
    python -m src.cli rank    --results out/results.json --out out/ --format markdown
    python -m src.cli compare out/ranking.json other/ranking.json
    python -m src.cli prune   --config run.json --results out/results.json --n 2 4 6 8
    python -m src.cli repair  --config run.json --results out/results.json --n 3
    python -m src.cli bench   --seed 7 --features 12 --instances 100 --out bench.json
    python -m src.cli sweep   --config run.json --param patience --values 5 10 15 20 25

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import requests

from src.analysis.aggregate import ResponsibilityTable, feature_responsibility, kendall_tau
from src.analysis.apps import collect_failures, compare_repair_strategies, pruning_sweep
from src.analysis.model import MAX_SEED, Feature, load_schema
from src.analysis.search import ProblemResult, SearchStrategy
from src.config import RunConfig, build_workload, load_config
from src.db.ledger import RunLedger
from src.errors import CauseScopeError, ParseError, UsageError
from src.pipeline.benchmark import CauseProfile, generate_benchmark, write_benchmark
from src.report import (
    FORMATS,
    Report,
    Table,
    analysis_report,
    emit_report,
    load_results,
    rank_report,
)
from src.runner import run_analysis, run_oracle, summarize_verification

logger = logging.getLogger(__name__)

STRATEGIES = ("full", "no-greedy", "no-influence-pruning", "no-minimality-pruning")
SWEEP_DEFAULTS = {
    "patience": ["5", "10", "15", "20", "25"],
    "max-len": ["1", "2", "3", "4", "5"],
    "strategy": list(STRATEGIES),
}


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(message)


def _uint(value: str) -> int:
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an unsigned integer, got {value!r}")
    if not 0 <= number <= MAX_SEED:
        raise argparse.ArgumentTypeError(f"expected an unsigned 64-bit integer, got {value!r}")
    return number


def _positive(value: str) -> int:
    number = _uint(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value!r}")
    return number


def _int_list(value: str) -> list[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")


def build_parser() -> CliParser:
    common = CliParser(add_help=False)
    common.add_argument("--config", type=Path, help="Run configuration JSON")
    common.add_argument("--out", type=Path, default=Path("out"), help="Output directory")
    common.add_argument("--format", choices=FORMATS, default="json", help="Report format")
    common.add_argument("--jobs", type=_positive, default=1, help="Concurrent workers")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")

    search = CliParser(add_help=False)
    search.add_argument("--seed", type=_uint, help="Run seed (overrides config and CAUSESCOPE_SEED)")
    search.add_argument("--budget", type=_positive, help="Executions per problem (N)")
    search.add_argument("--max-len", type=_positive, help="Longest combination searched (L_max)")
    search.add_argument("--theta", type=float, help="Similarity threshold")
    search.add_argument("--patience", type=_positive, help="Consecutive misses before the next length (k)")

    parser = CliParser(prog="causescope", description="Causal importance analysis for staged pipelines")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("analyze", parents=[common, search], help="Search important feature sets")
    p.add_argument("--strategy", choices=STRATEGIES, default="full", help="Search component ablation")
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("oracle", parents=[common, search], help="Brute-force ground truth")
    p.set_defaults(handler=cmd_oracle)

    p = sub.add_parser("verify", parents=[common, search], help="Compare search results with ground truth")
    p.add_argument("--results", type=Path, help="Search results file (runs the search when omitted)")
    p.add_argument("--truth", type=Path, help="Oracle results file (runs the oracle when omitted)")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("rank", parents=[common], help="Feature responsibility table")
    p.add_argument("--results", type=Path, nargs="+", required=True, help="Result files, one per setting")
    p.add_argument("--schema", type=Path, help="Schema for feature categories")
    p.add_argument("--top-k", type=_positive, default=5)
    p.add_argument("--normalization", choices=("max", "sum"), default="max")
    p.set_defaults(handler=cmd_rank)

    p = sub.add_parser("compare", help="Kendall tau between two rankings")
    p.add_argument("first", type=Path)
    p.add_argument("second", type=Path)
    p.add_argument("--out", type=Path, help="Write compare.json here")
    p.add_argument("--verbose", "-v", action="store_true")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("prune", parents=[common, search], help="Pruning plans and their deltas")
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--n", type=_positive, nargs="+", default=[2, 4, 6, 8])
    p.set_defaults(handler=cmd_prune)

    p = sub.add_parser("repair", parents=[common, search], help="Repair strategy comparison")
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--n", type=_positive, default=3)
    p.set_defaults(handler=cmd_repair)

    p = sub.add_parser("bench", help="Generate a simulator benchmark")
    p.add_argument("--seed", type=_uint, default=0)
    p.add_argument("--features", type=_positive, default=12)
    p.add_argument("--instances", type=_positive, default=100)
    p.add_argument("--lengths", type=_int_list, default=[1, 2, 3, 4], help="Planted cause lengths, e.g. 1,2,3")
    p.add_argument("--causes", type=_int_list, default=[1, 3], help="Min,max planted causes per instance")
    p.add_argument("--edge-probability", type=float, default=0.15)
    p.add_argument("--skew", type=float, default=2.0, help="Feature popularity power-law exponent")
    p.add_argument("--fault-rate", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--out", type=Path, default=Path("benchmark.json"))
    p.add_argument("--verbose", "-v", action="store_true")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("sweep", parents=[common, search], help="Identified combinations across a parameter")
    p.add_argument("--param", choices=sorted(SWEEP_DEFAULTS), required=True)
    p.add_argument("--values", nargs="+")
    p.set_defaults(handler=cmd_sweep)

    return parser


def _config(args) -> RunConfig:
    if args.config is None:
        raise UsageError(f"{args.command} requires --config")
    config = load_config(args.config)
    return config.with_analysis(
        seed=args.seed,
        budget=args.budget,
        max_length=args.max_len,
        theta=args.theta,
        patience=args.patience,
    )


def _ledger(config: RunConfig) -> Optional[RunLedger]:
    return RunLedger(path=str(config.ledger_path)) if config.ledger_path else None


def cmd_analyze(args) -> int:
    config = _config(args)
    with build_workload(config) as workload:
        results = run_analysis(
            workload, config.analysis, SearchStrategy.named(args.strategy), args.jobs, _ledger(config)
        )
    emit_report(analysis_report(results, config.to_dict()), args.format, args.out)
    return 0


def cmd_oracle(args) -> int:
    config = _config(args)
    with build_workload(config) as workload:
        results = run_oracle(workload, config.analysis.max_length, args.jobs, _ledger(config))
    emit_report(analysis_report(results, config.to_dict(), name="oracle"), args.format, args.out)
    return 0


def cmd_verify(args) -> int:
    if args.results and args.truth:
        reported, truth = load_results(args.results), load_results(args.truth)
    else:
        config = _config(args)
        with build_workload(config) as workload:
            reported = load_results(args.results) if args.results else run_analysis(workload, jobs=args.jobs)
            truth = load_results(args.truth) if args.truth else run_oracle(workload, jobs=args.jobs)

    summary = summarize_verification(reported, truth)
    rows = tuple(
        (pid, v["precision"], v["recall"], v["minimality_violations"])
        for pid, v in summary["per_problem"].items()
    )
    logger.info(
        f"Verification: precision={summary['precision']:.4f} recall={summary['recall']:.4f} "
        f"violations={summary['minimality_violations']}"
    )
    report = Report(
        name="verification",
        payload=summary,
        tables={
            "problems": Table(("problem_id", "precision", "recall", "minimality_violations"), rows, "Per problem"),
        },
        title="Search vs. ground truth",
    )
    emit_report(report, args.format, args.out)
    return 0


def _features(args, results: Sequence[ProblemResult]) -> tuple[list[Feature], list[str]]:
    """Schema features for ranking, and the feature ids the table must cover."""
    if getattr(args, "config", None):
        with build_workload(load_config(args.config)) as workload:
            features = list(workload.features)
    elif getattr(args, "schema", None):
        features = list(load_schema(args.schema).features)
    else:
        features = list(load_schema().features)

    named = sorted({m for r in results for combo in r.important for m in combo})
    explicit = getattr(args, "config", None) or getattr(args, "schema", None)
    if explicit or set(named) <= {f.id for f in features}:
        return features, [f.id for f in features]
    logger.warning(
        f"Results name features outside the default schema; ranking only the {len(named)} features "
        f"named in the results. Pass --schema or --config to rank the full schema."
    )
    return [], named


def _table(results: Sequence[ProblemResult], ids: Sequence[str]) -> ResponsibilityTable:
    return feature_responsibility(results, ids)


def cmd_rank(args) -> int:
    settings = {str(path): load_results(path) for path in args.results}
    pooled = [r for results in settings.values() for r in results]
    features, ids = _features(args, pooled)
    table = _table(pooled, ids)
    tables = {name: _table(results, ids) for name, results in settings.items()} if len(settings) > 1 else None
    report = rank_report(table, features, args.top_k, args.normalization, tables)
    emit_report(report, args.format, args.out)
    return 0


def _load_ranking(path: Path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON in {path}: {e.msg}", line=e.lineno) from e
    if isinstance(data, list) and all(isinstance(x, str) for x in data):
        return data
    if isinstance(data, dict) and "ranking" in data:
        return {row["feature_id"]: float(row["fr"]) for row in data["ranking"]}
    if isinstance(data, dict) and "results" in data:
        return feature_responsibility(load_results(path)).fr
    if isinstance(data, dict):
        return {str(k): float(v) for k, v in data.items()}
    raise ParseError(f"{path} holds no ranking", field="ranking")


def cmd_compare(args) -> int:
    tau = kendall_tau(_load_ranking(args.first), _load_ranking(args.second))
    print(f"{tau:.6f}")
    if args.out:
        emit_report(
            Report(name="compare", payload={"first": str(args.first), "second": str(args.second), "kendall_tau": tau}),
            "json",
            args.out,
        )
    return 0


def cmd_prune(args) -> int:
    config = _config(args)
    results = load_results(args.results)
    with build_workload(config) as workload:
        table = _table(results, [f.id for f in workload.features])
        evaluations = pruning_sweep(table, workload.sut_family(), workload.problems, args.n, args.jobs)
    report = Report(
        name="pruning",
        payload={"evaluations": [e.to_dict() for e in evaluations]},
        tables={"deltas": Table.from_dicts([e.row() for e in evaluations], ("n", "delta_pass1", "delta_tokens"), "Pruning impact")},
        title="Feature pruning",
    )
    emit_report(report, args.format, args.out)
    return 0


def cmd_repair(args) -> int:
    config = _config(args)
    results = load_results(args.results)
    with build_workload(config) as workload:
        table = _table(results, [f.id for f in workload.features])
        failing = collect_failures(workload.sut_family(), workload.problems, args.jobs)
        evaluations = compare_repair_strategies(
            table, workload.sut_family(), failing, args.n, workload.features, config.analysis.seed, args.jobs
        )
    rows = [{"strategy": name, **e.to_dict()} for name, e in evaluations.items()]
    report = Report(
        name="repair",
        payload={"n": args.n, "failing_instances": len(failing), "strategies": rows},
        tables={"strategies": Table.from_dicts(rows, ("strategy", "fixed", "total", "fix_rate"), f"Repair with n={args.n}")},
        title="Repair prioritization",
    )
    emit_report(report, args.format, args.out)
    return 0


def cmd_bench(args) -> int:
    if len(args.causes) != 2:
        raise UsageError("--causes takes exactly two integers: min,max")
    profile = CauseProfile(
        length_weights={n: 1.0 for n in args.lengths},
        causes_per_instance=(args.causes[0], args.causes[1]),
        edge_probability=args.edge_probability,
        popularity_skew=args.skew,
        fault_rate=args.fault_rate,
        noise=args.noise,
    )
    instances = generate_benchmark(args.seed, args.features, args.instances, profile)
    write_benchmark(instances, args.out)
    logger.info(f"Wrote {len(instances)} instances to {args.out}")
    return 0


def cmd_sweep(args) -> int:
    config = _config(args)
    values = args.values or SWEEP_DEFAULTS[args.param]
    rows = []
    with build_workload(config) as workload:
        for i, value in enumerate(values, start=1):
            logger.info(f"[{i}/{len(values)}] {args.param}={value}")
            analysis, strategy = config.analysis, SearchStrategy()
            if args.param == "strategy":
                if value not in STRATEGIES:
                    raise UsageError(f"Unknown strategy {value!r}; expected one of {list(STRATEGIES)}")
                strategy = SearchStrategy.named(value)
            else:
                try:
                    number = int(value)
                except ValueError:
                    raise UsageError(f"--values for {args.param} must be integers, got {value!r}")
                key = "patience" if args.param == "patience" else "max_length"
                analysis = analysis.with_overrides(**{key: number})

            results = run_analysis(workload, analysis, strategy, args.jobs)
            identified = sum(len(r.important) for r in results)
            executions = sum(r.stats.get("executions_used", 0) for r in results)
            count = max(len(results), 1)
            rows.append({
                "value": value,
                "identified_combinations": identified,
                "avg_identified": identified / count,
                "avg_executions": executions / count,
            })

    columns = ("value", "identified_combinations", "avg_identified", "avg_executions")
    report = Report(
        name=f"sweep_{args.param.replace('-', '_')}",
        payload={"param": args.param, "rows": rows},
        tables={"sweep": Table.from_dicts(rows, columns, f"Identified combinations by {args.param}")},
        title=f"Sweep over {args.param}",
    )
    emit_report(report, args.format, args.out)
    return 0


def configure_logging(verbose: bool = False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, dispatch the subcommand and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"causescope: error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(getattr(args, "verbose", False))
    try:
        return args.handler(args)
    except UsageError as e:
        print(f"causescope: error: {e}", file=sys.stderr)
        return 1
    except (CauseScopeError, OSError, ValueError, KeyError, requests.exceptions.RequestException) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"causescope: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
