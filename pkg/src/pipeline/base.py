"""
System-under-test contract: outcomes, execution records, and the SUT base class.

A SUT runs one problem with a set of feature interventions and reports the
outcome, the final value of every feature, and the tokens produced.
"""

import logging
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional

from src.analysis.model import Problem

logger = logging.getLogger(__name__)


class OutcomeKind(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    ERROR = "error"


@dataclass(frozen=True)
class Outcome:
    """Pass, Fail, or ExecError(detail). ExecError is never evidence of causation."""
    kind: OutcomeKind
    detail: str = ""

    @classmethod
    def passed(cls) -> "Outcome":
        return cls(OutcomeKind.PASS)

    @classmethod
    def failed(cls) -> "Outcome":
        return cls(OutcomeKind.FAIL)

    @classmethod
    def error(cls, detail: str) -> "Outcome":
        return cls(OutcomeKind.ERROR, detail)

    @property
    def is_pass(self) -> bool:
        return self.kind is OutcomeKind.PASS

    @property
    def is_fail(self) -> bool:
        return self.kind is OutcomeKind.FAIL

    @property
    def is_error(self) -> bool:
        return self.kind is OutcomeKind.ERROR

    def __str__(self) -> str:
        return f"ExecError({self.detail})" if self.is_error else self.kind.value.capitalize()


@dataclass(frozen=True)
class ExecutionRecord:
    """One pipeline run."""
    problem_id: str
    intervention: Mapping[str, str]
    outcome: Outcome
    observed: Mapping[str, str] = field(default_factory=dict)
    tokens: int = 0

    def value(self, feature_id: str) -> str:
        """Final value of a feature; a feature the run did not produce reads as empty text."""
        return self.observed.get(feature_id, "")

    def to_dict(self) -> dict:
        data = {
            "problem_id": self.problem_id,
            "intervention": dict(sorted(self.intervention.items())),
            "outcome": self.outcome.kind.value,
            "observed": dict(sorted(self.observed.items())),
            "tokens": self.tokens,
        }
        if self.outcome.is_error:
            data["error_detail"] = self.outcome.detail
        return data


def error_record(problem: Problem, intervention: Mapping[str, str], detail: str) -> ExecutionRecord:
    return ExecutionRecord(
        problem_id=problem.id,
        intervention=dict(intervention),
        outcome=Outcome.error(detail),
    )


class SystemUnderTest(ABC):
    """
    Base class for anything that can run a problem under intervention.

    Subclasses implement _run(). execute() adds majority voting over
    repeat_count runs for adapters that declare themselves nondeterministic.
    Each execute() call costs `cost` budget units.
    """

    deterministic: bool = True
    repeat_count: int = 1
    max_in_flight: Optional[int] = None

    @property
    def cost(self) -> int:
        return self.repeat_count

    def execute(
        self,
        problem: Problem,
        intervention: Mapping[str, str],
        run_seed: int = 0,
        disabled: Iterable[str] = (),
        pinned: Iterable[str] = (),
    ) -> ExecutionRecord:
        disabled = frozenset(disabled)
        pinned = frozenset(pinned)
        if self.repeat_count <= 1:
            return self._run(problem, intervention, run_seed, disabled, pinned)

        records = [
            self._run(problem, intervention, run_seed, disabled, pinned)
            for _ in range(self.repeat_count)
        ]
        return _majority(problem, intervention, records)

    @abstractmethod
    def _run(
        self,
        problem: Problem,
        intervention: Mapping[str, str],
        run_seed: int,
        disabled: frozenset[str],
        pinned: frozenset[str],
    ) -> ExecutionRecord:
        ...

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def _majority(
    problem: Problem,
    intervention: Mapping[str, str],
    records: list[ExecutionRecord],
) -> ExecutionRecord:
    """Majority Pass/Fail over repeated runs; a tie or all-error yields ExecError."""
    votes = Counter(r.outcome.kind for r in records if not r.outcome.is_error)
    passes = votes.get(OutcomeKind.PASS, 0)
    fails = votes.get(OutcomeKind.FAIL, 0)
    if passes == fails:
        logger.warning(
            f"No majority for {problem.id} over {len(records)} runs "
            f"({passes} pass, {fails} fail)"
        )
        return error_record(problem, intervention, f"no majority over {len(records)} runs")
    winner = OutcomeKind.PASS if passes > fails else OutcomeKind.FAIL
    return next(r for r in records if r.outcome.kind is winner)


def execute(
    sut: SystemUnderTest,
    problem: Problem,
    intervention: Mapping[str, str],
    run_seed: int = 0,
    disabled: Iterable[str] = (),
    pinned: Iterable[str] = (),
) -> ExecutionRecord:
    """Run problem on sut with the given interventions. Charges sut.cost budget units to the caller."""
    return sut.execute(problem, intervention, run_seed=run_seed, disabled=disabled, pinned=pinned)
