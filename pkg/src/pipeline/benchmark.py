"""
Seeded generator of simulator benchmarks with known ground truth.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import networkx as nx
import numpy as np

from src.analysis.model import Category, Feature, Problem, stable_seed
from src.errors import LengthOutOfRange, ParseError, TooManyFeatures
from src.pipeline.simulator import SimPipelineSpec

logger = logging.getLogger(__name__)

MAX_FEATURES = 15
MAX_CAUSE_LENGTH = 5

_VOCABULARY = (
    "parse", "input", "return", "list", "string", "integer", "sorted", "unique",
    "index", "window", "prefix", "suffix", "count", "frequency", "map", "filter",
    "boundary", "empty", "negative", "overflow", "module", "function", "class",
    "helper", "test", "assert", "output", "format", "spaces", "digits", "matrix",
    "graph", "node", "edge", "path", "recursion", "iteration", "cache", "greedy",
    "dynamic", "binary", "search", "queue", "stack", "heap", "tuple", "dictionary",
)


class BenchmarkInstance(NamedTuple):
    spec: SimPipelineSpec
    problem: Problem


@dataclass(frozen=True)
class CauseProfile:
    """
    Shape of the planted ground truth.

    length_weights: relative frequency of each planted-cause length
    causes_per_instance: inclusive (min, max) number of planted causes
    edge_probability: chance of a forward influence edge between two stages
    popularity_skew: exponent of the power law that makes some features recur
        across instances (0 = uniform membership)
    fault_rate: fraction of problems that carry a planted cause as their own fault
    noise: corruption_noise of every generated simulator
    """
    length_weights: Mapping[int, float] = field(default_factory=lambda: {1: 1.0, 2: 1.0, 3: 1.0, 4: 1.0})
    causes_per_instance: tuple[int, int] = (1, 3)
    edge_probability: float = 0.15
    popularity_skew: float = 2.0
    fault_rate: float = 0.0
    noise: float = 0.0

    @classmethod
    def for_lengths(cls, lengths: Sequence[int], **kwargs) -> "CauseProfile":
        return cls(length_weights={int(n): 1.0 for n in lengths}, **kwargs)

    def to_dict(self) -> dict:
        return {
            "length_weights": {str(k): v for k, v in sorted(self.length_weights.items())},
            "causes_per_instance": list(self.causes_per_instance),
            "edge_probability": self.edge_probability,
            "popularity_skew": self.popularity_skew,
            "fault_rate": self.fault_rate,
            "noise": self.noise,
        }


def feature_ids(feature_count: int) -> list[str]:
    return [f"F{i:02d}" for i in range(feature_count)]


def benchmark_features(spec: SimPipelineSpec) -> list[Feature]:
    """Schema features for a generated simulator: stage = id order, categories in four stage bands."""
    ids = sorted(spec.features)
    categories = list(Category)
    features = []
    for i, fid in enumerate(ids):
        band = min(i * len(categories) // max(len(ids), 1), len(categories) - 1)
        features.append(Feature(
            id=fid,
            category=categories[band],
            description=f"simulated feature {fid}",
            stage_index=i,
            token_weight=int(spec.token_weights.get(fid, 0)),
        ))
    return features


def _antichain_compatible(candidate: frozenset[str], causes: list[frozenset[str]]) -> bool:
    return not any(candidate <= c or c <= candidate for c in causes)


def generate_benchmark(
    seed: int,
    feature_count: int,
    instance_count: int,
    cause_profile: CauseProfile = CauseProfile(),
) -> list[BenchmarkInstance]:
    """
    Generate reproducible simulator instances with planted causes.

    Args:
        seed: Benchmark seed; identical seeds give identical benchmarks
        feature_count: Features per pipeline (at most 15 to keep the oracle tractable)
        instance_count: Number of (spec, problem) pairs
        cause_profile: Distribution of planted causes

    Returns:
        List of BenchmarkInstance(spec, problem)
    """
    if feature_count > MAX_FEATURES:
        raise TooManyFeatures(f"{feature_count} features exceeds the oracle limit of {MAX_FEATURES}")
    if feature_count < 1:
        raise ValueError("feature_count must be positive")

    lengths = sorted(int(n) for n in cause_profile.length_weights)
    limit = min(MAX_CAUSE_LENGTH, feature_count)
    if not lengths or lengths[0] < 1 or lengths[-1] > limit:
        raise LengthOutOfRange(f"Planted-cause lengths {lengths} must lie in 1..{limit}")

    rng = np.random.default_rng(seed)
    ids = feature_ids(feature_count)

    popularity_rank = rng.permutation(feature_count)
    popularity = 1.0 / (popularity_rank + 1.0) ** cause_profile.popularity_skew
    popularity = popularity / popularity.sum()
    token_weights = {fid: int(w) for fid, w in zip(ids, rng.integers(20, 200, size=feature_count))}

    length_p = np.array([cause_profile.length_weights[n] for n in lengths], dtype=float)
    length_p = length_p / length_p.sum()
    lo, hi = cause_profile.causes_per_instance

    instances = []
    for j in range(instance_count):
        dag = nx.DiGraph()
        dag.add_nodes_from(ids)
        for a in range(feature_count):
            for b in range(a + 1, feature_count):
                if rng.random() < cause_profile.edge_probability:
                    dag.add_edge(ids[a], ids[b])
        reach = nx.transitive_closure_dag(dag)
        influence = {fid: frozenset(reach.successors(fid)) for fid in ids}

        wanted = int(rng.integers(lo, hi + 1))
        causes: list[frozenset[str]] = []
        for _ in range(50):
            if len(causes) >= wanted:
                break
            length = int(rng.choice(lengths, p=length_p))
            members = rng.choice(feature_count, size=length, replace=False, p=popularity)
            candidate = frozenset(ids[int(m)] for m in members)
            if _antichain_compatible(candidate, causes):
                causes.append(candidate)

        problem_id = f"p{j:04d}"
        baseline = {}
        for fid in ids:
            words = rng.choice(_VOCABULARY, size=max(2, token_weights[fid] // 10))
            baseline[fid] = " ".join(str(w) for w in words)

        faults = {}
        if rng.random() < cause_profile.fault_rate:
            fault_cause = sorted(causes[int(rng.integers(len(causes)))])
            faults = {fid: f"fault:{fid}:{problem_id}" for fid in fault_cause}

        spec = SimPipelineSpec(
            features=tuple(ids),
            influence=influence,
            planted_causes=tuple(sorted(causes, key=sorted)),
            token_weights=token_weights,
            corruption_noise=cause_profile.noise,
            seed=stable_seed(seed, j),
        )
        problem = Problem(
            id=problem_id,
            specification=f"simulated problem {problem_id}",
            baseline=baseline,
            faults=faults,
        )
        instances.append(BenchmarkInstance(spec, problem))

    logger.info(f"Generated benchmark: {instance_count} instances, {feature_count} features, seed={seed}")
    return instances


def write_benchmark(instances: Sequence[BenchmarkInstance], path: Path) -> None:
    payload = [
        {"spec": inst.spec.to_dict(), "problem": inst.problem.to_dict()}
        for inst in instances
    ]
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_benchmark(path: Path) -> list[BenchmarkInstance]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ParseError(f"Cannot read benchmark {path}: {e}", field="sut.path") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON in benchmark {path}: {e.msg}", line=e.lineno) from e
    try:
        return [
            BenchmarkInstance(SimPipelineSpec.from_dict(item["spec"]), Problem.from_dict(item["problem"]))
            for item in payload
        ]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"Malformed benchmark entry in {path}: {e}", field="sut.path") from e
