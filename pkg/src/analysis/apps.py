"""
Downstream uses of a responsibility table: feature pruning plans with their
pass-rate and token deltas, and repair prioritization with fix-rate evaluation.

Both evaluations replay each problem with its own faults (the errors the
pipeline makes in deployment). Pruning disables low-responsibility features;
repair restores the prioritized features to their baseline values.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional, Sequence, TypeVar, Union

import numpy as np

from src.analysis.aggregate import ResponsibilityTable
from src.analysis.model import Feature, Problem, stable_seed, stage_order
from src.errors import MissingContext, NOutOfRange, ZeroBaseline
from src.pipeline.base import ExecutionRecord, SystemUnderTest

logger = logging.getLogger(__name__)

DEFAULT_PRUNING_LEVELS = (2, 4, 6, 8)

SutFamily = Union[SystemUnderTest, Mapping[str, SystemUnderTest]]

T = TypeVar("T")
R = TypeVar("R")


def _sut_for(family: SutFamily, problem: Problem) -> SystemUnderTest:
    if isinstance(family, SystemUnderTest):
        return family
    try:
        return family[problem.id]
    except KeyError:
        raise KeyError(f"No system under test registered for problem {problem.id}")


def _map(fn: Callable[[T], R], items: Sequence[T], jobs: int) -> list[R]:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class PruningPlan:
    disabled: tuple[str, ...]
    n: int

    def to_dict(self) -> dict:
        return {"n": self.n, "disabled": list(self.disabled)}


def pruning_plan(table: ResponsibilityTable, n: int) -> PruningPlan:
    """Disable the n lowest-FR features (the tail of the ranking, lowest first)."""
    count = len(table.ranking)
    if not 1 <= n < count:
        raise NOutOfRange(f"Pruning level n={n} must lie in 1..{count - 1}")
    return PruningPlan(disabled=tuple(reversed(table.ranking))[:n], n=n)


@dataclass(frozen=True)
class PruningEvaluation:
    n: int
    disabled: tuple[str, ...]
    pass1_original: float
    pass1_pruned: float
    tokens_original: int
    tokens_pruned: int

    @property
    def delta_pass1(self) -> float:
        return (self.pass1_pruned - self.pass1_original) / self.pass1_original

    @property
    def delta_tokens(self) -> float:
        return (self.tokens_original - self.tokens_pruned) / self.tokens_original

    def row(self) -> dict:
        return {"n": self.n, "delta_pass1": self.delta_pass1, "delta_tokens": self.delta_tokens}

    def to_dict(self) -> dict:
        return {
            **self.row(),
            "disabled": list(self.disabled),
            "pass1_original": self.pass1_original,
            "pass1_pruned": self.pass1_pruned,
            "tokens_original": self.tokens_original,
            "tokens_pruned": self.tokens_pruned,
        }


def _deployment_run(family: SutFamily, problem: Problem, disabled: Iterable[str] = ()) -> ExecutionRecord:
    return _sut_for(family, problem).execute(problem, dict(problem.faults), disabled=disabled)


def evaluate_pruning(
    sut_family: SutFamily,
    problems: Sequence[Problem],
    plan: PruningPlan,
    jobs: int = 1,
) -> PruningEvaluation:
    """
    Run every problem once as deployed and once with the plan's features disabled.

    Args:
        sut_family: One system for all problems, or {problem id: system}
        problems: Problems to run; their faults are applied in both runs
        plan: Features to disable
        jobs: Worker threads across problems

    Returns:
        PruningEvaluation with delta_pass1 = (pruned - original) / original
        and delta_tokens = (original - pruned) / original

    Raises:
        ZeroBaseline: no problem passes originally, or the original runs produce no tokens
    """
    problems = list(problems)
    original = _map(lambda p: _deployment_run(sut_family, p), problems, jobs)
    pruned = _map(lambda p: _deployment_run(sut_family, p, plan.disabled), problems, jobs)

    total = len(problems)
    pass_original = sum(1 for r in original if r.outcome.is_pass) / total if total else 0.0
    pass_pruned = sum(1 for r in pruned if r.outcome.is_pass) / total if total else 0.0
    tokens_original = sum(r.tokens for r in original)
    tokens_pruned = sum(r.tokens for r in pruned)

    if pass_original == 0:
        raise ZeroBaseline("Original Pass@1 is 0; relative change is undefined")
    if tokens_original == 0:
        raise ZeroBaseline("Original runs produced no tokens; relative change is undefined")

    evaluation = PruningEvaluation(
        n=plan.n,
        disabled=plan.disabled,
        pass1_original=pass_original,
        pass1_pruned=pass_pruned,
        tokens_original=tokens_original,
        tokens_pruned=tokens_pruned,
    )
    logger.info(
        f"Pruning n={plan.n}: dPass@1={evaluation.delta_pass1:+.2%}, dTokens={evaluation.delta_tokens:.2%}"
    )
    return evaluation


def pruning_sweep(
    table: ResponsibilityTable,
    sut_family: SutFamily,
    problems: Sequence[Problem],
    levels: Iterable[int] = DEFAULT_PRUNING_LEVELS,
    jobs: int = 1,
) -> list[PruningEvaluation]:
    """Evaluate one pruning plan per level; levels not below the feature count are skipped."""
    evaluations = []
    for n in levels:
        if n >= len(table.ranking):
            logger.warning(f"Skipping pruning level n={n}: only {len(table.ranking)} features")
            continue
        evaluations.append(evaluate_pruning(sut_family, problems, pruning_plan(table, n), jobs))
    return evaluations


class RepairStrategy(str, Enum):
    CAUSALITY_GUIDED = "causality-guided"
    RANDOM_SELECT = "random-select"
    TEMPORAL_FIRST = "temporal-first"
    LENGTH_BASED = "length-based"


@dataclass(frozen=True)
class FailingInstance:
    """A deployed run that failed: the problem, the faults applied, and the failing record."""
    problem: Problem
    intervention: Mapping[str, str]
    record: ExecutionRecord

    def observed_lengths(self) -> dict[str, int]:
        return {fid: len(text.split()) for fid, text in self.record.observed.items()}


def repair_priorities(
    table: ResponsibilityTable,
    strategy: RepairStrategy,
    n: int,
    failure_context: Optional[Union[FailingInstance, Mapping[str, int]]] = None,
    features: Optional[Iterable[Feature]] = None,
    seed: int = 0,
) -> list[str]:
    """
    The n features a strategy would fix first.

    Args:
        table: Responsibility table over the schema
        strategy: Which prioritization to apply
        n: How many features to pick
        failure_context: Failing instance or {feature id: observed token length},
            needed by LENGTH_BASED
        features: Schema features, needed by TEMPORAL_FIRST
        seed: Sampling seed for RANDOM_SELECT

    Raises:
        NOutOfRange: n outside 1..feature count
        MissingContext: LENGTH_BASED without lengths, TEMPORAL_FIRST without features
    """
    ids = sorted(table.ranking)
    if not 1 <= n <= len(ids):
        raise NOutOfRange(f"n={n} must lie in 1..{len(ids)}")
    strategy = RepairStrategy(strategy)

    if strategy is RepairStrategy.CAUSALITY_GUIDED:
        return table.top(n)

    if strategy is RepairStrategy.RANDOM_SELECT:
        rng = np.random.default_rng(seed)
        return [ids[int(i)] for i in rng.choice(len(ids), size=n, replace=False)]

    if strategy is RepairStrategy.TEMPORAL_FIRST:
        if features is None:
            raise MissingContext("temporal-first needs the schema features for stage order")
        return [f.id for f in stage_order(f for f in features if f.id in table.fr)][:n]

    if failure_context is None:
        raise MissingContext("length-based needs the observed output lengths of the failing run")
    if isinstance(failure_context, FailingInstance):
        lengths = failure_context.observed_lengths()
    else:
        lengths = dict(failure_context)
    if not lengths:
        raise MissingContext("length-based needs at least one observed output length")
    return sorted(ids, key=lambda f: (-lengths.get(f, 0), f))[:n]


def collect_failures(
    sut_family: SutFamily,
    problems: Sequence[Problem],
    jobs: int = 1,
) -> list[FailingInstance]:
    """Run each problem that carries faults and keep the runs that fail."""
    faulty = [p for p in problems if p.faults]
    records = _map(lambda p: _deployment_run(sut_family, p), faulty, jobs)
    failing = [
        FailingInstance(problem=p, intervention=dict(p.faults), record=r)
        for p, r in zip(faulty, records)
        if r.outcome.is_fail
    ]
    logger.info(f"Collected {len(failing)} failing instances from {len(faulty)} faulty problems")
    return failing


@dataclass(frozen=True)
class RepairEvaluation:
    fixed: int
    total: int

    @property
    def fix_rate(self) -> float:
        return self.fixed / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {"fixed": self.fixed, "total": self.total, "fix_rate": self.fix_rate}


Priorities = Union[Sequence[str], Callable[[FailingInstance], Sequence[str]]]


def evaluate_repair(
    sut_family: SutFamily,
    failing_instances: Sequence[FailingInstance],
    priorities: Priorities,
    jobs: int = 1,
) -> RepairEvaluation:
    """
    Restore the prioritized features and re-run each failing instance.

    An instance counts as fixed when the re-run passes. `priorities` is either
    one list for every instance or a function of the instance.
    """
    def repaired(instance: FailingInstance) -> bool:
        chosen = priorities(instance) if callable(priorities) else priorities
        record = _sut_for(sut_family, instance.problem).execute(
            instance.problem, instance.intervention, pinned=chosen
        )
        return record.outcome.is_pass

    outcomes = _map(repaired, list(failing_instances), jobs)
    return RepairEvaluation(fixed=sum(outcomes), total=len(outcomes))


def compare_repair_strategies(
    table: ResponsibilityTable,
    sut_family: SutFamily,
    failing_instances: Sequence[FailingInstance],
    n: int,
    features: Iterable[Feature],
    seed: int = 0,
    jobs: int = 1,
) -> dict[str, RepairEvaluation]:
    """Fix rate of every strategy on the same failing instances, each fixing n features."""
    features = list(features)
    evaluations = {}
    for strategy in RepairStrategy:
        def choose(instance: FailingInstance, strategy=strategy) -> list[str]:
            return repair_priorities(
                table,
                strategy,
                n,
                failure_context=instance,
                features=features,
                seed=stable_seed("random-select", seed, instance.problem.id),
            )

        evaluations[strategy.value] = evaluate_repair(sut_family, failing_instances, choose, jobs)
        logger.info(f"Repair {strategy.value}: fix rate {evaluations[strategy.value].fix_rate:.1%}")
    return evaluations
