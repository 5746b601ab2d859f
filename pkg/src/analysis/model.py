"""
Domain types: features, causal graphs, combinations, important feature sets,
analysis configuration and problems.

Every type here is immutable. Iteration orders derive from the canonical
ascending-by-id ordering so that analyses are reproducible.
"""

import hashlib
import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

import networkx as nx

from src.errors import (
    CycleDetected,
    InvariantViolation,
    LengthOutOfRange,
    ParseError,
    UnknownEndpoint,
)

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
DEFAULT_SCHEMA_PATH = DATA_DIR / "metagpt_schema.json"

DEFAULT_BUDGET = 100
DEFAULT_MAX_LENGTH = 5
DEFAULT_THETA = 0.5
DEFAULT_PATIENCE = 10

MAX_SEED = 2**64 - 1


class Category(str, Enum):
    SPECIFICATION = "Specification"
    ANALYSIS = "Analysis"
    DESIGN = "Design"
    DEPENDENCY = "Dependency"


@dataclass(frozen=True)
class Feature:
    """One semantic field of a pipeline's intermediate output."""
    id: str
    category: Category
    description: str = ""
    stage_index: int = 0
    token_weight: int = 0

    def __post_init__(self):
        if not self.id:
            raise ValueError("Feature id must be non-empty")
        if self.stage_index < 0:
            raise ValueError(f"Feature {self.id}: stage_index must be non-negative")
        if self.token_weight < 0:
            raise ValueError(f"Feature {self.id}: token_weight must be non-negative")
        if not isinstance(self.category, Category):
            object.__setattr__(self, "category", Category(self.category))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "category": self.category.value,
            "description": self.description,
            "stage_index": self.stage_index,
            "token_weight": self.token_weight,
        }


def stage_order(features: Iterable[Feature]) -> list[Feature]:
    """Features ordered by pipeline position, ties broken by id."""
    return sorted(features, key=lambda f: (f.stage_index, f.id))


@dataclass(frozen=True)
class CausalGraph:
    """Validated DAG over feature ids. Build it with validate_graph()."""
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]
    order: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.nodes)

    def sorted_nodes(self) -> list[str]:
        return sorted(self.nodes)

    def descendants(self, node: str) -> frozenset[str]:
        return frozenset(nx.descendants(self._digraph(), node))

    def _digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges)
        return g


def validate_graph(nodes: Iterable[str], edges: Iterable[tuple[str, str]]) -> CausalGraph:
    """
    Validate a feature graph and cache its topological order.

    Raises:
        UnknownEndpoint: an edge references a node that is not declared
        CycleDetected: the graph has a cycle (self-loops included)
    """
    node_set = frozenset(nodes)
    edge_set = frozenset((str(src), str(dst)) for src, dst in edges)

    for src, dst in sorted(edge_set):
        for endpoint in (src, dst):
            if endpoint not in node_set:
                raise UnknownEndpoint((src, dst), endpoint)

    g = nx.DiGraph()
    g.add_nodes_from(node_set)
    g.add_edges_from(edge_set)

    if not nx.is_directed_acyclic_graph(g):
        cycle_edges = nx.find_cycle(g)
        cycle = [src for src, _ in cycle_edges] + [cycle_edges[0][0]]
        raise CycleDetected(cycle)

    order = tuple(nx.lexicographical_topological_sort(g))
    return CausalGraph(nodes=node_set, edges=edge_set, order=order)


@dataclass(frozen=True, order=True)
class Combination:
    """A set of feature ids, stored in canonical ascending order."""
    members: tuple[str, ...]

    def __post_init__(self):
        canonical = tuple(sorted(self.members))
        if len(set(canonical)) != len(canonical):
            raise ValueError(f"Combination has duplicate members: {list(self.members)}")
        if not canonical:
            raise ValueError("Combination must have at least one member")
        object.__setattr__(self, "members", canonical)

    @classmethod
    def of(cls, *ids: str) -> "Combination":
        return cls(tuple(ids))

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[str]:
        return iter(self.members)

    def __contains__(self, feature_id: object) -> bool:
        return feature_id in self.members

    def as_set(self) -> frozenset[str]:
        return frozenset(self.members)

    def issubset(self, other: "Combination") -> bool:
        return self.as_set() <= other.as_set()

    def is_strict_subset(self, other: "Combination") -> bool:
        return self.as_set() < other.as_set()

    def strict_subsets(self) -> Iterator["Combination"]:
        """Non-empty strict subsets, shortest first, canonical order within a length."""
        for size in range(1, len(self.members)):
            for members in itertools.combinations(self.members, size):
                yield Combination(members)

    def subsets_of_length(self, size: int) -> Iterator["Combination"]:
        for members in itertools.combinations(self.members, size):
            yield Combination(members)

    def sort_key(self) -> tuple[int, tuple[str, ...]]:
        return (len(self.members), self.members)

    def to_list(self) -> list[str]:
        return list(self.members)

    def __str__(self) -> str:
        return "{" + ",".join(self.members) + "}"


def combinations(
    graph: CausalGraph,
    length: int,
    excluded_supersets: Iterable[Combination] = (),
) -> list[Combination]:
    """
    Every length-subset of the graph's nodes that contains none of the
    excluded combinations, in lexicographic canonical order.
    """
    if length < 1 or length > len(graph.nodes):
        raise LengthOutOfRange(
            f"Combination length {length} outside 1..{len(graph.nodes)}"
        )
    excluded = [c.as_set() for c in excluded_supersets if len(c) <= length]
    result = []
    for members in itertools.combinations(graph.sorted_nodes(), length):
        member_set = frozenset(members)
        if any(e <= member_set for e in excluded):
            continue
        result.append(Combination(members))
    return result


@dataclass(frozen=True)
class ImportantFeatureSet:
    """Antichain of minimal failure-inducing combinations for one problem."""
    combinations: frozenset[Combination] = frozenset()

    def __iter__(self) -> Iterator[Combination]:
        return iter(self.ordered())

    def __len__(self) -> int:
        return len(self.combinations)

    def __contains__(self, combo: object) -> bool:
        return combo in self.combinations

    def ordered(self) -> list[Combination]:
        return sorted(self.combinations, key=Combination.sort_key)

    def has_subset_of(self, combo: Combination) -> bool:
        return any(c.issubset(combo) for c in self.combinations)

    def is_antichain(self) -> bool:
        items = self.ordered()
        return not any(
            a.issubset(b) for a, b in itertools.permutations(items, 2)
        )

    def to_lists(self) -> list[list[str]]:
        return [c.to_list() for c in self.ordered()]

    @classmethod
    def from_lists(cls, sets: Iterable[Iterable[str]]) -> "ImportantFeatureSet":
        result = cls()
        for members in sets:
            result = insert_minimal(result, Combination(tuple(members))).result
        return result


@dataclass(frozen=True)
class InsertResult:
    result: ImportantFeatureSet
    accepted: bool
    evicted: tuple[Combination, ...] = ()


def insert_minimal(current: ImportantFeatureSet, combo: Combination) -> InsertResult:
    """
    Insert combo keeping the antichain: rejected when a subset (or combo itself)
    is already present, otherwise strict supersets of combo are evicted.
    """
    if current.has_subset_of(combo):
        return InsertResult(result=current, accepted=False)
    evicted = tuple(sorted(
        (c for c in current.combinations if combo.is_strict_subset(c)),
        key=Combination.sort_key,
    ))
    kept = current.combinations.difference(evicted)
    return InsertResult(
        result=ImportantFeatureSet(kept | {combo}),
        accepted=True,
        evicted=evicted,
    )


@dataclass(frozen=True)
class AnalysisConfig:
    """Search parameters: budget N, maximum length L_max, similarity threshold theta, patience k."""
    budget: int = DEFAULT_BUDGET
    max_length: int = DEFAULT_MAX_LENGTH
    theta: float = DEFAULT_THETA
    patience: int = DEFAULT_PATIENCE
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.budget, int) or self.budget < 1:
            raise InvariantViolation(f"budget must be a positive integer, got {self.budget!r}")
        if not isinstance(self.max_length, int) or self.max_length < 1:
            raise InvariantViolation(f"max_length must be a positive integer, got {self.max_length!r}")
        if not 0.0 < float(self.theta) < 1.0:
            raise InvariantViolation(f"theta must lie in (0, 1), got {self.theta!r}")
        if not isinstance(self.patience, int) or self.patience < 1:
            raise InvariantViolation(f"patience must be a positive integer, got {self.patience!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed <= MAX_SEED:
            raise InvariantViolation(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")

    def with_overrides(self, **overrides) -> "AnalysisConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "max_length": self.max_length,
            "theta": self.theta,
            "patience": self.patience,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Problem:
    """
    A problem the pipeline solves in its original run.

    baseline holds the final value of every feature in that passing run.
    faults holds the errors the pipeline makes on its own when the problem is
    run in deployment (empty for a clean problem); only the pruning and repair
    evaluations use it.
    """
    id: str
    specification: str = ""
    baseline: Mapping[str, str] = field(default_factory=dict)
    faults: Mapping[str, str] = field(default_factory=dict)

    def covers(self, graph: CausalGraph) -> bool:
        return graph.nodes <= set(self.baseline)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "specification": self.specification,
            "baseline": dict(sorted(self.baseline.items())),
            "faults": dict(sorted(self.faults.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Problem":
        return cls(
            id=str(data["id"]),
            specification=data.get("specification", ""),
            baseline={str(k): str(v) for k, v in data.get("baseline", {}).items()},
            faults={str(k): str(v) for k, v in data.get("faults", {}).items()},
        )


@dataclass(frozen=True)
class Schema:
    """Authored feature schema: the features plus the causal graph over them."""
    features: tuple[Feature, ...]
    graph: CausalGraph

    def feature(self, feature_id: str) -> Feature:
        for f in self.features:
            if f.id == feature_id:
                return f
        raise KeyError(feature_id)

    def ids(self) -> list[str]:
        return sorted(f.id for f in self.features)

    def to_dict(self) -> dict:
        return {
            "features": [f.to_dict() for f in stage_order(self.features)],
            "edges": [list(e) for e in sorted(self.graph.edges)],
        }


def build_schema(features: Iterable[Feature], edges: Iterable[tuple[str, str]]) -> Schema:
    features = tuple(stage_order(features))
    ids = [f.id for f in features]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise InvariantViolation(f"Duplicate feature ids in schema: {dupes}")
    return Schema(features=features, graph=validate_graph(ids, edges))


def load_schema(path: Optional[Path] = None) -> Schema:
    """
    Load a schema file: {"features": [...], "edges": [["src", "dst"], ...]}.

    Args:
        path: Schema file (default: the bundled MetaGPT-derived schema)

    Raises:
        ParseError: missing file, invalid JSON, or malformed feature entries
    """
    path = Path(path) if path else DEFAULT_SCHEMA_PATH
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"Cannot read schema file {path}: {e}", field="schema") from e
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON in schema {path}: {e.msg}", line=e.lineno) from e

    features = []
    for i, entry in enumerate(data.get("features", [])):
        try:
            features.append(Feature(
                id=str(entry["id"]),
                category=Category(entry["category"]),
                description=entry.get("description", ""),
                stage_index=int(entry.get("stage_index", i)),
                token_weight=int(entry.get("token_weight", 0)),
            ))
        except (KeyError, ValueError, TypeError) as e:
            raise ParseError(f"Malformed feature entry: {e}", field=f"features[{i}]") from e

    edges = [(str(src), str(dst)) for src, dst in data.get("edges", [])]
    schema = build_schema(features, edges)
    logger.debug(f"Loaded schema {path.name}: {len(schema.features)} features, {len(edges)} edges")
    return schema


def stable_seed(*parts: object) -> int:
    """64-bit seed derived from arbitrary parts, stable across processes and platforms."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
