"""
Exhaustive ground truth for the search.

Runs every combination up to L_max, shortest first, and keeps the failing
ones that contain no smaller failing combination. Only usable on small,
deterministic systems such as the noise-free simulator.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from src.analysis.intervene import InterventionEngine, InterventionPlanner
from src.analysis.model import (
    CausalGraph,
    Combination,
    ImportantFeatureSet,
    Problem,
    combinations,
    insert_minimal,
)
from src.analysis.search import ProblemResult
from src.errors import NondeterministicSUT, TooManyFeatures
from src.pipeline.base import ExecutionRecord, SystemUnderTest

logger = logging.getLogger(__name__)

MAX_ORACLE_FEATURES = 15


class ExhaustiveOracle:
    """Brute-force enumeration of minimal failure-inducing combinations for one system."""

    def __init__(
        self,
        sut: SystemUnderTest,
        graph: CausalGraph,
        max_length: int,
        engine: InterventionEngine,
        seed: int = 0,
        jobs: int = 1,
    ):
        if len(graph.nodes) > MAX_ORACLE_FEATURES:
            raise TooManyFeatures(
                f"Oracle enumerates at most {MAX_ORACLE_FEATURES} features, got {len(graph.nodes)}"
            )
        if not sut.deterministic:
            raise NondeterministicSUT("Oracle needs a deterministic system under test")
        self.sut = sut
        self.graph = graph
        self.max_length = min(max_length, len(graph.nodes))
        self.engine = engine
        self.seed = seed
        self.jobs = max(1, jobs)
        if sut.max_in_flight is not None:
            self.jobs = min(self.jobs, sut.max_in_flight)
        self.executions = 0
        self._count_lock = threading.Lock()
        self.unverifiable: list[Combination] = []

    def _execute(self, problem: Problem, intervention: dict[str, str]) -> ExecutionRecord:
        with self._count_lock:
            self.executions += 1
        return self.sut.execute(problem, intervention, run_seed=self.seed)

    def _probe(self, problem: Problem, planner: InterventionPlanner):
        probes = [{}]
        if self.graph.nodes:
            probes.append(planner.plan(Combination.of(self.graph.sorted_nodes()[0])))
        for intervention in probes:
            first = self._execute(problem, intervention)
            second = self._execute(problem, intervention)
            if first.outcome != second.outcome or dict(first.observed) != dict(second.observed):
                raise NondeterministicSUT(
                    f"Identical probe runs disagree on {problem.id}: {first.outcome} vs {second.outcome}"
                )

    def _run_length(self, problem: Problem, planner: InterventionPlanner, candidates: list[Combination]):
        interventions = [planner.plan(c) for c in candidates]
        if self.jobs > 1 and len(candidates) > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                records = list(pool.map(lambda i: self._execute(problem, i), interventions))
        else:
            records = [self._execute(problem, i) for i in interventions]

        for combo, intervention, record in zip(candidates, interventions, records):
            if record.outcome.is_error:
                record = self._execute(problem, intervention)
            if record.outcome.is_error:
                logger.warning(f"Oracle could not run {combo} on {problem.id}: {record.outcome.detail}")
                self.unverifiable.append(combo)
                continue
            yield combo, record

    def enumerate(self, problem: Problem) -> ImportantFeatureSet:
        planner = InterventionPlanner(self.engine, problem, self.seed)
        # warm the per-feature replacements before any worker thread reads them
        for feature in self.graph.sorted_nodes():
            planner.replacement(feature)
        self._probe(problem, planner)

        found = ImportantFeatureSet()
        for length in range(1, self.max_length + 1):
            # safe because every minimal cause shorter than this length is already in found
            candidates = combinations(self.graph, length, found)
            if not candidates:
                break
            for combo, record in self._run_length(problem, planner, candidates):
                if record.outcome.is_fail:
                    found = insert_minimal(found, combo).result

        logger.info(
            f"Oracle {problem.id}: {len(found)} minimal causes from {self.executions} executions"
        )
        return found


def enumerate_minimal_causes(
    sut: SystemUnderTest,
    graph: CausalGraph,
    max_length: int,
    problem: Problem,
    engine: InterventionEngine,
    seed: int = 0,
    jobs: int = 1,
) -> ImportantFeatureSet:
    """
    Exact antichain of minimal failure-inducing combinations of length <= max_length.

    Raises:
        TooManyFeatures: more than 15 features
        NondeterministicSUT: the system declares itself nondeterministic or
            two identical probe runs disagree
    """
    return ExhaustiveOracle(sut, graph, max_length, engine, seed, jobs).enumerate(problem)


def oracle_result(
    sut: SystemUnderTest,
    graph: CausalGraph,
    max_length: int,
    problem: Problem,
    engine: InterventionEngine,
    seed: int = 0,
    jobs: int = 1,
) -> ProblemResult:
    oracle = ExhaustiveOracle(sut, graph, max_length, engine, seed, jobs)
    found = oracle.enumerate(problem)
    return ProblemResult(
        problem_id=problem.id,
        important=found,
        unverifiable=tuple(oracle.unverifiable),
        stats={"executions_used": oracle.executions},
        source="oracle",
    )


@dataclass(frozen=True)
class Verification:
    precision: float
    recall: float
    minimality_violations: int
    by_length_recall: dict[int, float] = field(default_factory=dict)
    missed: tuple[Combination, ...] = ()
    spurious: tuple[Combination, ...] = ()

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "minimality_violations": self.minimality_violations,
            "by_length_recall": {str(k): v for k, v in sorted(self.by_length_recall.items())},
            "missed": [c.to_list() for c in self.missed],
            "spurious": [c.to_list() for c in self.spurious],
        }


def _ratio(hits: int, total: int, other_total: int) -> float:
    if total == 0:
        return 1.0 if other_total == 0 else 0.0
    return hits / total


def verify_result(reported: ImportantFeatureSet, truth: ImportantFeatureSet) -> Verification:
    """
    Compare a reported set against ground truth.

    Precision and recall are 1 when both sides are empty and 0 when only the
    denominator's side is empty. A minimality violation is a reported set
    with a strict subset in truth.
    """
    hits = reported.combinations & truth.combinations
    violations = sum(
        1 for r in reported.combinations if any(t.is_strict_subset(r) for t in truth.combinations)
    )

    by_length: dict[int, float] = {}
    for length in sorted({len(t) for t in truth.combinations}):
        at_length = [t for t in truth.combinations if len(t) == length]
        by_length[length] = sum(1 for t in at_length if t in hits) / len(at_length)

    return Verification(
        precision=_ratio(len(hits), len(reported), len(truth)),
        recall=_ratio(len(hits), len(truth), len(reported)),
        minimality_violations=violations,
        by_length_recall=by_length,
        missed=tuple(sorted(truth.combinations - hits, key=Combination.sort_key)),
        spurious=tuple(sorted(reported.combinations - hits, key=Combination.sort_key)),
    )
