"""
Budgeted greedy search for the important feature set of one problem.

Phase 1 intervenes on every feature alone. Phase 2 walks combination lengths
2..L_max in ascending order; within a length it repeatedly runs the candidate
with the largest collective influence set, prunes supersets of known causes
and same-length subsets of observed influence sets, and moves on after
`patience` consecutive interventions that discover nothing. Every run of the
system under test, minimality checks included, is charged to the budget.
"""

import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional, Sequence

from src.analysis.influence import (
    InfluenceCache,
    SimilarityMetric,
    collective_influence,
    influence_set,
    jaccard,
)
from src.analysis.intervene import InterventionEngine, InterventionPlanner
from src.analysis.model import (
    AnalysisConfig,
    CausalGraph,
    Combination,
    ImportantFeatureSet,
    Problem,
    combinations,
    insert_minimal,
)
from src.errors import BaselineFails, BudgetTooSmall, EmptyCandidates, InvariantViolation
from src.pipeline.base import ExecutionRecord, OutcomeKind, SystemUnderTest

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchStrategy:
    """Switches for ablating the search's components. All on by default."""
    greedy: bool = True
    influence_pruning: bool = True
    minimality_pruning: bool = True

    @classmethod
    def named(cls, name: str) -> "SearchStrategy":
        variants = {
            "full": cls(),
            "no-greedy": cls(greedy=False),
            "no-influence-pruning": cls(influence_pruning=False),
            "no-minimality-pruning": cls(minimality_pruning=False),
        }
        try:
            return variants[name]
        except KeyError:
            raise ValueError(f"Unknown search strategy {name!r}; expected one of {sorted(variants)}")


@dataclass
class SearchStats:
    executions_used: int = 0
    pruned_by_minimality: int = 0
    pruned_by_influence: int = 0
    early_stops: int = 0
    combos_tested_per_length: dict[int, int] = field(default_factory=dict)
    minimality_executions: int = 0
    exec_errors: int = 0
    dropped: int = 0
    budget_exhausted: bool = False
    early_stopped_lengths: list[int] = field(default_factory=list)
    influence_pruned: list[Combination] = field(default_factory=list)
    unverifiable: list[Combination] = field(default_factory=list)

    def tested(self, length: int):
        self.combos_tested_per_length[length] = self.combos_tested_per_length.get(length, 0) + 1

    def to_dict(self) -> dict:
        return {
            "executions_used": self.executions_used,
            "pruned_by_minimality": self.pruned_by_minimality,
            "pruned_by_influence": self.pruned_by_influence,
            "early_stops": self.early_stops,
            "early_stopped_lengths": list(self.early_stopped_lengths),
            "combos_tested_per_length": {
                str(k): v for k, v in sorted(self.combos_tested_per_length.items())
            },
            "minimality_executions": self.minimality_executions,
            "exec_errors": self.exec_errors,
            "dropped": self.dropped,
            "budget_exhausted": self.budget_exhausted,
        }


class BudgetTracker:
    """Counts executions against the per-problem limit N."""

    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    @property
    def remaining(self) -> int:
        return self.limit - self.used

    def can_afford(self, cost: int = 1) -> bool:
        return self.used + cost <= self.limit

    def charge(self, cost: int = 1):
        if not self.can_afford(cost):
            raise RuntimeError(f"Budget overrun: {self.used} + {cost} > {self.limit}")
        self.used += cost


class MinimalityVerdict(str, Enum):
    MINIMAL = "minimal"
    NOT_MINIMAL = "not_minimal"
    UNVERIFIABLE = "unverifiable"


def candidate_key(combo: Combination, cache: InfluenceCache) -> tuple:
    """Sort key: larger member-excluded Ê(S) first, then canonical order."""
    return -len(collective_influence(combo, cache)), combo.members


def select_candidate(candidates: Iterable[Combination], cache: InfluenceCache) -> Combination:
    """The candidate with the largest member-excluded Ê(S); ties go to canonical order."""
    candidates = list(candidates)
    if not candidates:
        raise EmptyCandidates("No candidates left to select from")
    return min(candidates, key=lambda c: candidate_key(c, cache))


def greedy_order(candidates: Iterable[Combination], cache: InfluenceCache) -> list[Combination]:
    """
    Candidates in the order repeated select_candidate() calls would pick them.

    Ê only reads cached entries of shorter combinations, which do not change
    while one length is explored, so the keys are fixed for the whole length.
    """
    keys = {c: candidate_key(c, cache) for c in candidates}
    return sorted(keys, key=keys.__getitem__)


def check_minimal(
    combo: Combination,
    result_cache: Mapping[Combination, OutcomeKind],
    run: Callable[[Combination], Optional[ExecutionRecord]],
    budget: BudgetTracker,
    cost: int = 1,
) -> MinimalityVerdict:
    """
    Decide whether a failing combination is minimal.

    Every (|S|-1)-subset must be known or shown not to fail. A cached failing
    subset settles it at once; uncached subsets are run through `run`, which
    charges the budget. Running out of budget (or hitting repeated execution
    errors) leaves the verdict UNVERIFIABLE.
    """
    if len(combo) == 1:
        return MinimalityVerdict.MINIMAL

    subsets = list(combo.subsets_of_length(len(combo) - 1))
    if any(result_cache.get(s) is OutcomeKind.FAIL for s in subsets):
        return MinimalityVerdict.NOT_MINIMAL

    for subset in subsets:
        if subset in result_cache:
            continue
        record = None
        for _attempt in range(2):
            if not budget.can_afford(cost):
                logger.warning(f"Budget exhausted while checking minimality of {combo}")
                return MinimalityVerdict.UNVERIFIABLE
            record = run(subset)
            if record is not None and not record.outcome.is_error:
                break
        if record is None or record.outcome.is_error:
            logger.warning(f"Could not run subset {subset} of {combo}; minimality unverifiable")
            return MinimalityVerdict.UNVERIFIABLE
        if record.outcome.is_fail:
            return MinimalityVerdict.NOT_MINIMAL
    return MinimalityVerdict.MINIMAL


class CausalSearch:
    """Search state for one problem. Use analyze_problem() unless you need the internals."""

    def __init__(
        self,
        sut: SystemUnderTest,
        graph: CausalGraph,
        config: AnalysisConfig,
        engine: InterventionEngine,
        problem: Problem,
        metric: Optional[SimilarityMetric] = None,
        strategy: SearchStrategy = SearchStrategy(),
    ):
        self.sut = sut
        self.graph = graph
        self.config = config
        self.problem = problem
        self.metric = metric or jaccard
        self.strategy = strategy
        self.planner = InterventionPlanner(engine, problem, config.seed)

        self.budget = BudgetTracker(config.budget)
        self.stats = SearchStats()
        self.important = ImportantFeatureSet()
        self.cache = InfluenceCache()
        self.results: dict[Combination, OutcomeKind] = {}
        self.baseline: Optional[ExecutionRecord] = None

    @property
    def cost(self) -> int:
        return self.sut.cost

    def analyze(self) -> tuple[ImportantFeatureSet, SearchStats]:
        nodes = self.graph.sorted_nodes()
        if len(nodes) * self.cost > self.config.budget:
            raise BudgetTooSmall(
                f"Budget {self.config.budget} cannot cover the {len(nodes)}-feature single scan"
            )
        missing = sorted(self.graph.nodes - set(self.problem.baseline))
        if missing:
            raise InvariantViolation(f"Problem {self.problem.id} has no baseline value for {missing}")
        empty = sorted(f for f in self.graph.nodes if not self.problem.baseline[f])
        if empty:
            raise InvariantViolation(f"Problem {self.problem.id} has an empty baseline value for {empty}")

        self.baseline = self.sut.execute(self.problem, {}, run_seed=self.config.seed)
        if not self.baseline.outcome.is_pass:
            raise BaselineFails(
                f"Problem {self.problem.id} does not pass without intervention ({self.baseline.outcome})"
            )

        self._scan_singletons(nodes)

        max_length = min(self.config.max_length, len(nodes))
        for length in range(2, max_length + 1):
            if not self.budget.can_afford(self.cost):
                self.stats.budget_exhausted = True
                break
            if not self._explore_length(length):
                break

        logger.info(
            f"{self.problem.id}: {len(self.important)} important combinations, "
            f"{self.stats.executions_used}/{self.config.budget} executions"
        )
        return self.important, self.stats

    def _execute(self, combo: Combination) -> Optional[ExecutionRecord]:
        if not self.budget.can_afford(self.cost):
            return None
        record = self.sut.execute(self.problem, self.planner.plan(combo), run_seed=self.config.seed)
        self.budget.charge(self.cost)
        self.stats.executions_used = self.budget.used
        if record.outcome.is_error:
            self.stats.exec_errors += 1
            logger.warning(f"{self.problem.id}: execution error on {combo}: {record.outcome.detail}")
        else:
            self.results[combo] = record.outcome.kind
        return record

    def _record_pass(self, combo: Combination, record: ExecutionRecord) -> frozenset[str]:
        influenced = influence_set(
            self.baseline, record, combo, self.config.theta, self.metric, features=self.graph.nodes
        )
        return self.cache.put(combo, influenced)

    def _scan_singletons(self, nodes: Sequence[str]):
        queue = deque(Combination.of(f) for f in nodes)
        retried: set[Combination] = set()
        while queue:
            combo = queue.popleft()
            record = self._execute(combo)
            if record is None:
                self.stats.budget_exhausted = True
                logger.warning(f"{self.problem.id}: budget exhausted during the single-feature scan")
                return
            self.stats.tested(1)
            if record.outcome.is_error:
                self._requeue(combo, queue, retried)
            elif record.outcome.is_fail:
                self._insert(combo)
            else:
                self._record_pass(combo, record)

    def _insert(self, combo: Combination) -> bool:
        inserted = insert_minimal(self.important, combo)
        if inserted.accepted:
            self.important = inserted.result
            logger.debug(f"{self.problem.id}: {combo} is important")
        return inserted.accepted

    def _requeue(self, combo: Combination, queue: deque, retried: set[Combination]) -> bool:
        """
        Queue combo for one more try at the back of the queue, after every
        candidate not yet run. False when it already had its retry.
        """
        if combo in retried:
            self.stats.dropped += 1
            logger.warning(f"{self.problem.id}: dropping {combo} after a repeated execution error")
            return False
        retried.add(combo)
        queue.append(combo)
        return True

    def _candidates(self, length: int) -> list[Combination]:
        total = math.comb(len(self.graph.nodes), length)
        if self.strategy.minimality_pruning:
            candidates = combinations(self.graph, length, self.important)
            self.stats.pruned_by_minimality += total - len(candidates)
        else:
            candidates = combinations(self.graph, length)
        if not self.strategy.greedy:
            return candidates
        return greedy_order(candidates, self.cache)

    def _explore_length(self, length: int) -> bool:
        """Explore one length. Returns False when the budget is gone."""
        order = deque(self._candidates(length))
        alive = set(order)
        retried: set[Combination] = set()
        misses = 0

        while order and misses < self.config.patience:
            combo = order.popleft()
            if combo not in alive:
                continue
            if not self.budget.can_afford(self.cost):
                self.stats.budget_exhausted = True
                return False
            alive.discard(combo)

            record = self._execute(combo)
            self.stats.tested(length)
            if record.outcome.is_error:
                if self._requeue(combo, order, retried):
                    alive.add(combo)
                continue

            if record.outcome.is_fail:
                verdict = check_minimal(combo, self.results, self._minimality_run, self.budget, self.cost)
                if verdict is MinimalityVerdict.UNVERIFIABLE:
                    self.stats.unverifiable.append(combo)
                    self.stats.budget_exhausted = not self.budget.can_afford(self.cost)
                    if self.stats.budget_exhausted:
                        return False
                    misses += 1
                elif verdict is MinimalityVerdict.MINIMAL and self._insert(combo):
                    misses = 0
                else:
                    misses += 1
                continue

            influenced = self._record_pass(combo, record)
            if self.strategy.influence_pruning and len(influenced) >= length:
                for members in itertools.combinations(sorted(influenced), length):
                    pruned = Combination(members)
                    if pruned in alive:
                        alive.discard(pruned)
                        self.stats.pruned_by_influence += 1
                        self.stats.influence_pruned.append(pruned)
            misses += 1

        if misses >= self.config.patience and any(c in alive for c in order):
            self.stats.early_stops += 1
            self.stats.early_stopped_lengths.append(length)
            logger.debug(f"{self.problem.id}: early stop at length {length}")
        return True

    def _minimality_run(self, combo: Combination) -> Optional[ExecutionRecord]:
        record = self._execute(combo)
        if record is not None:
            self.stats.minimality_executions += 1
        return record


def analyze_problem(
    sut: SystemUnderTest,
    graph: CausalGraph,
    config: AnalysisConfig,
    engine: InterventionEngine,
    problem: Problem,
    metric: Optional[SimilarityMetric] = None,
    strategy: SearchStrategy = SearchStrategy(),
) -> tuple[ImportantFeatureSet, SearchStats]:
    """
    Find the important feature set of one problem.

    Args:
        sut: System under test
        graph: Causal graph over the problem's features
        config: Budget, max length, theta, patience and seed
        engine: Intervention engine producing replacement values
        problem: A problem the system solves without intervention
        metric: Similarity metric for influence sets (default Jaccard)
        strategy: Component switches for ablations

    Returns:
        (important feature set, search statistics); unverifiable candidates
        are listed in stats.unverifiable

    Raises:
        BaselineFails: the clean run does not pass
        BudgetTooSmall: the budget cannot cover one run per feature
        InvariantViolation: a feature's baseline value is missing or empty
    """
    return CausalSearch(sut, graph, config, engine, problem, metric, strategy).analyze()


@dataclass(frozen=True)
class ProblemResult:
    """Per-problem result record shared by the search, the oracle and the reports."""
    problem_id: str
    important: ImportantFeatureSet
    unverifiable: tuple[Combination, ...] = ()
    stats: Mapping = field(default_factory=dict)
    source: str = "analyze"

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "important_sets": self.important.to_lists(),
            "unverifiable": [c.to_list() for c in sorted(self.unverifiable, key=Combination.sort_key)],
            "stats": dict(self.stats),
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ProblemResult":
        return cls(
            problem_id=str(data["problem_id"]),
            important=ImportantFeatureSet.from_lists(data.get("important_sets", [])),
            unverifiable=tuple(Combination(tuple(c)) for c in data.get("unverifiable", [])),
            stats=dict(data.get("stats", {})),
            source=data.get("source", "analyze"),
        )

    @classmethod
    def from_search(cls, problem_id: str, important: ImportantFeatureSet, stats: SearchStats) -> "ProblemResult":
        return cls(
            problem_id=problem_id,
            important=important,
            unverifiable=tuple(stats.unverifiable),
            stats=stats.to_dict(),
            source="analyze",
        )
