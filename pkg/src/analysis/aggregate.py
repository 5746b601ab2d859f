"""
Feature responsibility and the statistics reported over it.

FR(f) sums, over every problem and every important combination containing f,
the squared degree of responsibility (1/|S|)^2.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import stats

from src.analysis.model import (
    Category,
    Combination,
    Feature,
    ImportantFeatureSet,
)
from src.errors import MismatchedIdSets, NotAMember, TooFewFeatures, UnknownFeature

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("max", "sum")

Results = Union[Mapping[str, ImportantFeatureSet], Iterable]


def _important_sets(results: Results) -> list[ImportantFeatureSet]:
    """Accepts {problem id: set}, or an iterable of sets or per-problem result records."""
    if isinstance(results, Mapping):
        items = [results[k] for k in sorted(results)]
    else:
        items = list(results)
    return [getattr(item, "important", item) for item in items]


def degree_of_responsibility(combo: Combination, feature: str) -> float:
    """1/(1+|W|) with contingency W = S minus f, i.e. 1/|S|."""
    if feature not in combo:
        raise NotAMember(f"{feature} is not a member of {combo}")
    return 1.0 / len(combo)


@dataclass(frozen=True)
class ResponsibilityTable:
    fr: dict[str, float]
    ranking: tuple[str, ...]
    by_length_contribution: dict[int, float] = field(default_factory=dict)

    @property
    def normalized_fr(self) -> dict[str, float]:
        return normalize(self.fr, "max")

    @property
    def total(self) -> float:
        return math.fsum(self.fr.values())

    def top(self, k: int) -> list[str]:
        return list(self.ranking[:k])

    def rows(self) -> list[dict]:
        """Export rows: feature_id, fr, normalized_fr, rank."""
        normalized = self.normalized_fr
        return [
            {
                "feature_id": fid,
                "fr": self.fr[fid],
                "normalized_fr": normalized[fid],
                "rank": i + 1,
            }
            for i, fid in enumerate(self.ranking)
        ]

    def to_dict(self) -> dict:
        return {
            "features": self.rows(),
            "by_length_contribution": {str(k): v for k, v in sorted(self.by_length_contribution.items())},
        }


def rank_features(fr: Mapping[str, float]) -> tuple[str, ...]:
    """Descending FR, ties broken lexicographically."""
    return tuple(sorted(fr, key=lambda f: (-fr[f], f)))


def normalize(fr: Mapping[str, float], normalization: str = "max") -> dict[str, float]:
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"Unknown normalization {normalization!r}; expected one of {NORMALIZATIONS}")
    values = list(fr.values())
    scale = (max(values) if normalization == "max" else math.fsum(values)) if values else 0.0
    if scale <= 0:
        return {f: 0.0 for f in fr}
    return {f: v / scale for f, v in fr.items()}


def feature_responsibility(
    results: Results,
    features: Optional[Iterable[str]] = None,
) -> ResponsibilityTable:
    """
    Aggregate per-problem important sets into a responsibility table.

    Args:
        results: Important sets per problem
        features: Schema feature ids; defaults to every feature named in results

    Raises:
        UnknownFeature: a combination names a feature outside `features`
    """
    sets = _important_sets(results)
    fr: dict[str, float] = defaultdict(float)
    if features is not None:
        for fid in features:
            fr[fid] = 0.0

    for important in sets:
        for combo in important:
            weight = degree_of_responsibility(combo, combo.members[0]) ** 2
            for fid in combo:
                if features is not None and fid not in fr:
                    raise UnknownFeature(f"Result names {fid}, which is not in the schema")
                fr[fid] += weight

    fr = dict(sorted(fr.items()))
    return ResponsibilityTable(
        fr=fr,
        ranking=rank_features(fr),
        by_length_contribution=length_contribution(sets),
    )


def length_contribution(results: Results) -> dict[int, float]:
    """
    Percent of total FR mass contributed by combinations of each length.

    Only lengths that occur in some important set are listed; no results
    give an empty mapping.
    """
    mass: dict[int, float] = defaultdict(float)
    for important in _important_sets(results):
        for combo in important:
            # a combination of length l adds l * (1/l)^2 = 1/l to the total
            mass[len(combo)] += 1.0 / len(combo)

    total = math.fsum(mass.values())
    return {length: 100.0 * mass[length] / total for length in sorted(mass)}


def _scores(ranking: Union[Sequence[str], Mapping[str, float]]) -> dict[str, float]:
    """Higher score = better rank. Ordered lists score by negated position; mappings are scores as given."""
    if isinstance(ranking, Mapping):
        return {str(k): float(v) for k, v in ranking.items()}
    ids = list(ranking)
    if len(set(ids)) != len(ids):
        raise MismatchedIdSets(f"Ranking lists a feature twice: {ids}")
    return {fid: -float(i) for i, fid in enumerate(ids)}


def kendall_tau(
    rank_a: Union[Sequence[str], Mapping[str, float]],
    rank_b: Union[Sequence[str], Mapping[str, float]],
) -> float:
    """
    Tie-aware Kendall tau-b between two rankings of the same features.

    A ranking is either an ordered list of ids (best first) or a mapping of
    id to score (higher is better; equal scores are ties). A ranking with every
    item tied carries no order and correlates 0 with anything.
    """
    a = _scores(rank_a)
    b = _scores(rank_b)
    if set(a) != set(b):
        raise MismatchedIdSets(
            f"Rankings cover different features: only in first {sorted(set(a) - set(b))}, "
            f"only in second {sorted(set(b) - set(a))}"
        )
    ids = sorted(a)
    if len(ids) < 2:
        return 1.0
    tau, _ = stats.kendalltau([a[f] for f in ids], [b[f] for f in ids], variant="b")
    if tau is None or math.isnan(tau):
        return 0.0
    return float(tau)


def fr_std(table: ResponsibilityTable, normalization: str = "max") -> float:
    """Population standard deviation of normalized FR; lower means more uniform importance."""
    if len(table.fr) < 2:
        raise TooFewFeatures(f"Standard deviation needs at least 2 features, got {len(table.fr)}")
    values = list(normalize(table.fr, normalization).values())
    return float(np.std(values))


def topk_appearance(
    tables: Union[Mapping[str, ResponsibilityTable], Iterable[ResponsibilityTable]],
    k: int,
) -> dict[str, int]:
    """Per feature, the number of settings whose ranking puts it in the top k."""
    tables = [tables[key] for key in sorted(tables)] if isinstance(tables, Mapping) else list(tables)
    counts: dict[str, int] = {}
    for table in tables:
        for fid in table.ranking:
            counts.setdefault(fid, 0)
        for fid in table.top(k):
            counts[fid] += 1
    return dict(sorted(counts.items(), key=lambda item: (-item[1], item[0])))


def category_responsibility(table: ResponsibilityTable, features: Iterable[Feature]) -> dict[str, float]:
    """FR summed per feature category; every category is listed."""
    totals = {c.value: 0.0 for c in Category}
    for feature in features:
        totals[feature.category.value] += table.fr.get(feature.id, 0.0)
    return totals
