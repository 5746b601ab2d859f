"""
Deterministic simulated pipeline with planted causes.

Corruption spreads from intervened features along a transitively closed
influence map; each propagation can be suppressed (self-correction) with
probability corruption_noise under a generator seeded from the run. The
run fails when the corrupted set covers a planted cause.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from src.analysis.model import CausalGraph, Problem, stable_seed, validate_graph
from src.errors import (
    NotAntichain,
    NotTransitivelyClosed,
    ParseError,
    PredicateReferencesUnknownFeature,
    SimSpecError,
    UnknownFeature,
)
from src.pipeline.base import ExecutionRecord, Outcome, SystemUnderTest

logger = logging.getLogger(__name__)


def sentinel(feature_id: str, run_seed: int) -> str:
    return f"corrupted:{feature_id}:{run_seed}"


@dataclass(frozen=True)
class SimPipelineSpec:
    features: tuple[str, ...]
    influence: Mapping[str, frozenset[str]] = field(default_factory=dict)
    planted_causes: tuple[frozenset[str], ...] = ()
    token_weights: Mapping[str, int] = field(default_factory=dict)
    corruption_noise: float = 0.0
    seed: int = 0

    def graph(self) -> CausalGraph:
        edges = [(src, dst) for src, targets in self.influence.items() for dst in targets]
        return validate_graph(self.features, edges)

    def to_dict(self) -> dict:
        return {
            "features": sorted(self.features),
            "influence": {f: sorted(self.influence.get(f, ())) for f in sorted(self.features)},
            "planted_causes": sorted(sorted(c) for c in self.planted_causes),
            "token_weights": {f: int(self.token_weights.get(f, 0)) for f in sorted(self.features)},
            "corruption_noise": self.corruption_noise,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SimPipelineSpec":
        return cls(
            features=tuple(str(f) for f in data["features"]),
            influence={
                str(src): frozenset(str(d) for d in targets)
                for src, targets in data.get("influence", {}).items()
            },
            planted_causes=tuple(frozenset(str(f) for f in c) for c in data.get("planted_causes", [])),
            token_weights={str(k): int(v) for k, v in data.get("token_weights", {}).items()},
            corruption_noise=float(data.get("corruption_noise", 0.0)),
            seed=int(data.get("seed", 0)),
        )


def load_sim_spec(path: Path) -> SimPipelineSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ParseError(f"Cannot read simulator spec {path}: {e}", field="sut.spec") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON in simulator spec {path}: {e.msg}", line=e.lineno) from e
    try:
        return SimPipelineSpec.from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"Malformed simulator spec {path}: {e}", field="sut.spec") from e


class SimulatedPipeline(SystemUnderTest):
    """Pure SUT: identical (intervention, run seed) pairs always yield identical records."""

    max_in_flight = None

    def __init__(self, spec: SimPipelineSpec):
        self.spec = spec
        self.feature_ids = tuple(sorted(spec.features))
        self.influence = {f: frozenset(spec.influence.get(f, ())) for f in self.feature_ids}
        self.planted_causes = tuple(sorted((frozenset(c) for c in spec.planted_causes), key=sorted))
        self.deterministic = spec.corruption_noise == 0

    def closure(
        self,
        sources: Iterable[str],
        disabled: frozenset[str] = frozenset(),
        pinned: frozenset[str] = frozenset(),
    ) -> frozenset[str]:
        """Corrupted set with no self-correction: sources plus everything they influence."""
        blocked = disabled | pinned
        active = set(sources) - blocked
        corrupted = set(active)
        for src in active:
            corrupted |= self.influence[src] - blocked
        return frozenset(corrupted)

    def fails(self, corrupted: Iterable[str]) -> bool:
        corrupted = frozenset(corrupted)
        return any(cause <= corrupted for cause in self.planted_causes)

    def _corrupt(
        self,
        problem: Problem,
        sources: frozenset[str],
        run_seed: int,
        disabled: frozenset[str],
        pinned: frozenset[str],
    ) -> frozenset[str]:
        noise = self.spec.corruption_noise
        if noise == 0:
            return self.closure(sources, disabled, pinned)

        rng = np.random.default_rng(stable_seed(
            self.spec.seed, run_seed, problem.id,
            ",".join(sorted(sources)), ",".join(sorted(disabled)), ",".join(sorted(pinned)),
        ))
        blocked = disabled | pinned
        active = sorted(sources - blocked)
        corrupted = set(active)
        for src in active:
            for dst in sorted(self.influence[src] - blocked):
                if rng.random() < noise:
                    continue
                corrupted.add(dst)
        return frozenset(corrupted)

    def _run(
        self,
        problem: Problem,
        intervention: Mapping[str, str],
        run_seed: int,
        disabled: frozenset[str],
        pinned: frozenset[str],
    ) -> ExecutionRecord:
        unknown = sorted(set(intervention) - set(self.feature_ids))
        if unknown:
            raise UnknownFeature(f"Intervention on unknown features {unknown} for {problem.id}")

        corrupted = self._corrupt(problem, frozenset(intervention), run_seed, disabled, pinned)
        outcome = Outcome.failed() if self.fails(corrupted) else Outcome.passed()

        observed = {}
        for f in self.feature_ids:
            if f in disabled:
                observed[f] = ""
            elif f in corrupted:
                observed[f] = sentinel(f, run_seed)
            else:
                observed[f] = problem.baseline.get(f, "")

        tokens = sum(int(self.spec.token_weights.get(f, 0)) for f in self.feature_ids if f not in disabled)
        return ExecutionRecord(
            problem_id=problem.id,
            intervention=dict(intervention),
            outcome=outcome,
            observed=observed,
            tokens=tokens,
        )


def build_sim(spec: SimPipelineSpec) -> SimulatedPipeline:
    """
    Validate a simulator spec and return the SUT.

    Raises:
        NotTransitivelyClosed: f -> g and g -> h without f -> h
        PredicateReferencesUnknownFeature: a planted cause names a feature outside the schema
        NotAntichain: one planted cause contains another
        SimSpecError: other malformed input (unknown influence ids, self-influence, noise range)
    """
    ids = set(spec.features)
    if len(ids) != len(spec.features):
        raise SimSpecError("Duplicate feature ids in simulator spec")
    if not 0.0 <= spec.corruption_noise <= 1.0:
        raise SimSpecError(f"corruption_noise must lie in [0, 1], got {spec.corruption_noise}")

    for src, targets in spec.influence.items():
        unknown = sorted(({src} | set(targets)) - ids)
        if unknown:
            raise SimSpecError(f"Influence map references unknown features {unknown}")
        if src in targets:
            raise SimSpecError(f"Feature {src} influences itself")

    for src in sorted(spec.influence):
        targets = spec.influence[src]
        for mid in sorted(targets):
            missing = sorted(set(spec.influence.get(mid, ())) - set(targets))
            if missing:
                raise NotTransitivelyClosed(
                    f"{src} -> {mid} and {mid} -> {missing[0]} but not {src} -> {missing[0]}"
                )

    for cause in spec.planted_causes:
        if not cause:
            raise SimSpecError("Planted causes must be non-empty")
        unknown = sorted(set(cause) - ids)
        if unknown:
            raise PredicateReferencesUnknownFeature(f"Planted cause {sorted(cause)} references {unknown}")

    causes = [frozenset(c) for c in spec.planted_causes]
    for i, a in enumerate(causes):
        for j, b in enumerate(causes):
            if i != j and a <= b:
                raise NotAntichain(f"Planted cause {sorted(a)} is contained in {sorted(b)}")

    spec.graph()
    logger.debug(
        f"Built simulator: {len(ids)} features, {len(causes)} planted causes, "
        f"noise={spec.corruption_noise}"
    )
    return SimulatedPipeline(spec)
