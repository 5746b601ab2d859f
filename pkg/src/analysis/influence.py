"""
Similarity metrics and influence sets.

E(S) is the set of features outside S whose final value drifted below the
similarity threshold when S was intervened. The collective influence set
Ê(S) estimates it without a run, as the union of cached E over S's strict
subsets.
"""

import difflib
import logging
from typing import Callable, Iterable, Iterator, Mapping, Optional, Union

import requests

from src.analysis.model import Combination
from src.errors import ConfigError, OutcomeNotPass, RemoteUnavailable
from src.pipeline.base import ExecutionRecord
from src.pipeline.http_client import JsonHttpClient

logger = logging.getLogger(__name__)

SimilarityMetric = Callable[[str, str], float]


def jaccard(a: str, b: str) -> float:
    """Jaccard index over lowercased whitespace tokens; two empty texts are identical."""
    tokens_a = set(a.lower().split())
    tokens_b = set(b.lower().split())
    if not tokens_a and not tokens_b:
        return 1.0
    return len(tokens_a & tokens_b) / len(tokens_a | tokens_b)


def edit_ratio(a: str, b: str) -> float:
    """difflib ratio, evaluated in a fixed argument order so it stays symmetric."""
    if not a and not b:
        return 1.0
    first, second = sorted((a, b))
    return difflib.SequenceMatcher(None, first, second, autojunk=False).ratio()


class RemoteEmbeddingMetric:
    """Asks an HTTP service for a score: POST {"a", "b"} -> {"score"}."""

    def __init__(self, url: str, timeout: float = 30.0, max_in_flight: int = 4):
        self.client = JsonHttpClient(url, timeout=timeout, max_in_flight=max_in_flight)

    def __call__(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        # sorted pair keeps the score symmetric whatever the service does
        first, second = sorted((a, b))
        try:
            payload = self.client.post({"a": first, "b": second})
        except (requests.exceptions.RequestException, ValueError) as e:
            raise RemoteUnavailable(f"Similarity service failed: {e}") from e
        try:
            score = float(payload["score"])
        except (KeyError, TypeError, ValueError) as e:
            raise RemoteUnavailable(f"Similarity service returned no numeric score: {payload}") from e
        return min(1.0, max(0.0, score))


METRICS: dict[str, SimilarityMetric] = {
    "jaccard": jaccard,
    "edit-ratio": edit_ratio,
}


def get_metric(name: Union[str, Mapping, None] = None) -> SimilarityMetric:
    """
    Resolve a metric from its config form.

    Args:
        name: "jaccard" (default), "edit-ratio", or
            {"name": "remote-embedding", "url": ..., "timeout": ...}
    """
    if name is None:
        return jaccard
    if isinstance(name, Mapping):
        kind = name.get("name")
        if kind == "remote-embedding":
            if not name.get("url"):
                raise ConfigError("remote-embedding similarity requires a url")
            return RemoteEmbeddingMetric(name["url"], timeout=float(name.get("timeout", 30.0)))
        name = kind
    if name == "remote-embedding":
        raise ConfigError("remote-embedding similarity requires {'name': 'remote-embedding', 'url': ...}")
    try:
        return METRICS[name]
    except KeyError:
        raise ConfigError(f"Unknown similarity metric {name!r}; expected one of {sorted(METRICS)} or remote-embedding")


def similarity(a: str, b: str, metric: Optional[SimilarityMetric] = None) -> float:
    return (metric or jaccard)(a, b)


def influence_set(
    baseline: ExecutionRecord,
    intervened: ExecutionRecord,
    combo: Combination,
    theta: float,
    metric: Optional[SimilarityMetric] = None,
    features: Optional[Iterable[str]] = None,
) -> frozenset[str]:
    """
    E(S): features outside combo whose value moved below theta.

    Args:
        baseline: The clean run
        intervened: The run with combo intervened; must have passed
        combo: The intervened combination S
        theta: Similarity threshold (strict inequality)
        metric: Similarity metric (default Jaccard)
        features: Feature ids to compare (default: every feature either run observed)

    Raises:
        OutcomeNotPass: intervened did not pass
    """
    if not intervened.outcome.is_pass:
        raise OutcomeNotPass(f"Influence set needs a passing run, got {intervened.outcome} for {combo}")
    metric = metric or jaccard
    ids = set(features) if features is not None else set(baseline.observed) | set(intervened.observed)
    influenced = set()
    for fid in sorted(ids - combo.as_set()):
        original = baseline.value(fid)
        observed = intervened.observed.get(fid)
        if observed is None or (observed == "" and original != ""):
            influenced.add(fid)
        elif metric(original, observed) < theta:
            influenced.add(fid)
    return frozenset(influenced)


class InfluenceCache:
    """
    E(S) for combinations that ran without failure.

    Entries never contain members of their key. Only the owning search loop
    writes to it.
    """

    def __init__(self):
        self._entries: dict[Combination, frozenset[str]] = {}

    def put(self, combo: Combination, influenced: Iterable[str]) -> frozenset[str]:
        value = frozenset(influenced) - combo.as_set()
        self._entries[combo] = value
        return value

    def get(self, combo: Combination) -> Optional[frozenset[str]]:
        return self._entries.get(combo)

    def __contains__(self, combo: object) -> bool:
        return combo in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[Combination]:
        return iter(sorted(self._entries, key=Combination.sort_key))

    def items(self):
        return [(c, self._entries[c]) for c in self]

    @classmethod
    def from_mapping(cls, entries: Mapping[Combination, Iterable[str]]) -> "InfluenceCache":
        cache = cls()
        for combo, influenced in entries.items():
            cache.put(combo, influenced)
        return cache


def collective_influence(combo: Combination, cache: InfluenceCache) -> frozenset[str]:
    """
    Ê(S): union of cached E(S') over strict subsets S' of S, without S's own members.

    Subsets missing from the cache contribute nothing.
    """
    union: set[str] = set()
    for subset in combo.strict_subsets():
        influenced = cache.get(subset)
        if influenced:
            union |= influenced
    return frozenset(union - combo.as_set())
