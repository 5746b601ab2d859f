"""
Orchestration over a whole workload: search, oracle and verification runs.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence

from src.analysis.model import AnalysisConfig, Combination, ImportantFeatureSet
from src.analysis.oracle import Verification, oracle_result, verify_result
from src.analysis.search import ProblemResult, SearchStrategy, analyze_problem
from src.config import Case, Workload
from src.db.ledger import RunLedger
from src.errors import MismatchedIdSets

logger = logging.getLogger(__name__)

PROGRESS_EVERY = 10


def worker_count(cases: Sequence[Case], jobs: int) -> int:
    """Requested jobs, capped by the smallest in-flight limit any shared adapter declares."""
    jobs = max(1, jobs)
    for case in cases:
        if case.sut.max_in_flight is not None:
            jobs = min(jobs, case.sut.max_in_flight)
    return jobs


def _run_cases(
    cases: Sequence[Case],
    fn: Callable[[Case], ProblemResult],
    jobs: int,
    ledger: Optional[RunLedger],
    run_id: Optional[int],
    label: str,
) -> list[ProblemResult]:
    results: list[ProblemResult] = []
    total = len(cases)

    def collect(result: ProblemResult):
        results.append(result)
        if ledger is not None and run_id is not None:
            ledger.record(run_id, result)
        if len(results) % PROGRESS_EVERY == 0:
            logger.info(f"Progress: {len(results)}/{total} problems {label}")

    workers = worker_count(cases, jobs)
    if workers == 1:
        for case in cases:
            collect(fn(case))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(fn, cases):
                collect(result)

    logger.info(f"Finished: {total} problems {label}")
    return sorted(results, key=lambda r: r.problem_id)


def run_analysis(
    workload: Workload,
    analysis: Optional[AnalysisConfig] = None,
    strategy: SearchStrategy = SearchStrategy(),
    jobs: int = 1,
    ledger: Optional[RunLedger] = None,
) -> list[ProblemResult]:
    """
    Search every problem of the workload.

    Args:
        workload: Problems, systems and engine
        analysis: Search parameters (default: the workload config's)
        strategy: Component switches
        jobs: Problems analyzed concurrently
        ledger: Optional run ledger to record into

    Returns:
        One result record per problem, ordered by problem id
    """
    analysis = analysis or workload.config.analysis

    def analyze(case: Case) -> ProblemResult:
        important, stats = analyze_problem(
            case.sut, case.graph, analysis, workload.engine, case.problem, workload.metric, strategy
        )
        return ProblemResult.from_search(case.problem.id, important, stats)

    if ledger is None:
        return _run_cases(workload.cases, analyze, jobs, None, None, "analyzed")
    with ledger.track("analyze", workload.config.to_dict(), analysis.seed) as run_id:
        return _run_cases(workload.cases, analyze, jobs, ledger, run_id, "analyzed")


def run_oracle(
    workload: Workload,
    max_length: Optional[int] = None,
    jobs: int = 1,
    ledger: Optional[RunLedger] = None,
) -> list[ProblemResult]:
    """Exhaustive ground truth for every problem; jobs parallelize within a combination length."""
    analysis = workload.config.analysis
    max_length = max_length or analysis.max_length

    def enumerate_case(case: Case) -> ProblemResult:
        return oracle_result(
            case.sut, case.graph, max_length, case.problem, workload.engine, analysis.seed, jobs
        )

    if ledger is None:
        return _run_cases(workload.cases, enumerate_case, 1, None, None, "enumerated")
    with ledger.track("oracle", workload.config.to_dict(), analysis.seed) as run_id:
        return _run_cases(workload.cases, enumerate_case, 1, ledger, run_id, "enumerated")


def summarize_verification(
    reported: Sequence[ProblemResult],
    truth: Sequence[ProblemResult],
) -> dict:
    """
    Per-problem and pooled comparison of reported sets against ground truth.

    Raises:
        MismatchedIdSets: the two result lists cover different problems
    """
    reported_by_id = {r.problem_id: r.important for r in reported}
    truth_by_id = {r.problem_id: r.important for r in truth}
    if set(reported_by_id) != set(truth_by_id):
        raise MismatchedIdSets(
            f"Result files cover different problems: "
            f"{sorted(set(reported_by_id) ^ set(truth_by_id))[:5]}..."
        )

    per_problem: dict[str, Verification] = {}
    found_by_length: dict[int, int] = {}
    total_by_length: dict[int, int] = {}
    violations = 0
    for problem_id in sorted(truth_by_id):
        got: ImportantFeatureSet = reported_by_id[problem_id]
        want: ImportantFeatureSet = truth_by_id[problem_id]
        verification = verify_result(got, want)
        per_problem[problem_id] = verification

        hits = got.combinations & want.combinations
        violations += verification.minimality_violations
        for combo in want:
            total_by_length[len(combo)] = total_by_length.get(len(combo), 0) + 1
            if combo in hits:
                found_by_length[len(combo)] = found_by_length.get(len(combo), 0) + 1

    pooled = verify_result(
        ImportantFeatureSet(frozenset(_tag(pid, c) for pid, s in reported_by_id.items() for c in s)),
        ImportantFeatureSet(frozenset(_tag(pid, c) for pid, s in truth_by_id.items() for c in s)),
    )
    return {
        "problems": len(truth_by_id),
        "precision": pooled.precision,
        "recall": pooled.recall,
        "minimality_violations": violations,
        "by_length_recall": {
            str(n): found_by_length.get(n, 0) / total for n, total in sorted(total_by_length.items())
        },
        "exact_matches": sum(1 for v in per_problem.values() if not v.missed and not v.spurious),
        "per_problem": {pid: v.to_dict() for pid, v in per_problem.items()},
    }


def _tag(problem_id: str, combo: Combination) -> Combination:
    """Prefix members with the problem id so combinations from different problems never coincide."""
    return Combination(tuple(f"{problem_id}/{m}" for m in combo))
