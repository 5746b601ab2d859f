import pytest

from src.analysis.influence import (
    InfluenceCache,
    RemoteEmbeddingMetric,
    collective_influence,
    edit_ratio,
    get_metric,
    influence_set,
    jaccard,
    similarity,
)
from src.analysis.model import Combination
from src.errors import ConfigError, OutcomeNotPass
from src.pipeline.base import ExecutionRecord, Outcome, execute

from tests.conftest import combos


class TestSimilarity:
    def test_identity(self):
        assert similarity("abc def", "abc def") == 1.0

    def test_disjoint(self):
        assert similarity("abc", "xyz") == 0.0

    def test_partial_overlap(self):
        assert similarity("sort the list", "sort the array") == 0.5

    def test_case_insensitive(self):
        assert jaccard("Sort THE list", "sort the LIST") == 1.0

    def test_both_empty(self):
        assert jaccard("", "") == 1.0
        assert edit_ratio("", "") == 1.0

    def test_symmetric(self):
        pairs = [("abc de", "abd ce"), ("kitten", "sitting"), ("one two", "two")]
        for a, b in pairs:
            assert jaccard(a, b) == jaccard(b, a)
            assert edit_ratio(a, b) == edit_ratio(b, a)


class TestGetMetric:
    def test_names(self):
        assert get_metric() is jaccard
        assert get_metric("jaccard") is jaccard
        assert get_metric("edit-ratio") is edit_ratio

    def test_remote(self):
        metric = get_metric({"name": "remote-embedding", "url": "http://score"})
        assert isinstance(metric, RemoteEmbeddingMetric)

    def test_remote_needs_url(self):
        with pytest.raises(ConfigError):
            get_metric({"name": "remote-embedding"})
        with pytest.raises(ConfigError):
            get_metric("remote-embedding")

    def test_unknown(self):
        with pytest.raises(ConfigError):
            get_metric("cosine")


class FakeClient:
    def __init__(self, score):
        self.score = score
        self.url = "http://score"
        self.requests = []

    def post(self, payload):
        self.requests.append(payload)
        return {"score": self.score}


def test_remote_metric_clamps_and_orders_pair():
    metric = RemoteEmbeddingMetric("http://score")
    metric.client = FakeClient(1.7)
    assert metric("zeta", "alpha") == 1.0
    assert metric.client.requests == [{"a": "alpha", "b": "zeta"}]
    assert metric("same", "same") == 1.0
    assert len(metric.client.requests) == 1


def record(observed, outcome=None):
    return ExecutionRecord("p1", {}, outcome or Outcome.passed(), observed)


class TestInfluenceSet:
    def test_identical_values(self):
        base = record({"A": "x y", "B": "z"})
        assert influence_set(base, base, Combination.of("A"), 0.5) == frozenset()

    def test_excludes_intervened_members(self):
        base = record({"A": "x", "B": "y"})
        changed = record({"A": "new", "B": "other"})
        assert influence_set(base, changed, Combination.of("A"), 0.5) == {"B"}

    def test_missing_value_counts_as_influenced(self):
        base = record({"A": "x", "B": "y", "C": "z"})
        changed = record({"A": "new", "B": ""})
        assert influence_set(base, changed, Combination.of("A"), 0.5, features="ABC") == {"B", "C"}

    def test_requires_passing_run(self):
        base = record({"A": "x"})
        with pytest.raises(OutcomeNotPass):
            influence_set(base, record({"A": "y"}, Outcome.failed()), Combination.of("A"), 0.5)

    def test_unchanged_feature_in_simulator(self, f1, problem4):
        base = execute(f1, problem4, {})
        run = execute(f1, problem4, {"C": "something else"})
        assert influence_set(base, run, Combination.of("C"), 0.5) == frozenset()

    def test_propagated_features_in_simulator(self, f3, problem5):
        base = execute(f3, problem5, {})
        run = execute(f3, problem5, {"A": "new a", "B": "new b"})
        assert run.outcome.is_pass
        assert influence_set(base, run, Combination.of("A", "B"), 0.5) == {"C", "D"}


class TestCollectiveInfluence:
    def test_no_cached_subsets(self):
        assert collective_influence(Combination.of("A", "B"), InfluenceCache()) == frozenset()

    def test_union_without_members(self):
        a, b = combos("A", "B")
        cache = InfluenceCache.from_mapping({b: {"C", "D"}, a: {"B"}})
        assert collective_influence(Combination.of("A", "B"), cache) == {"C", "D"}

    def test_idempotent_union(self):
        a, c = combos("A", "C")
        cache = InfluenceCache.from_mapping({a: {"B"}, c: {"B"}})
        assert collective_influence(Combination.of("A", "C"), cache) == {"B"}

    def test_monotone_in_cache(self):
        cache = InfluenceCache()
        target = Combination.of("A", "B", "C")
        sizes = []
        for combo, influenced in [(Combination.of("A"), {"D"}), (Combination.of("B", "C"), {"E"}),
                                  (Combination.of("C"), {"D", "F"})]:
            cache.put(combo, influenced)
            sizes.append(len(collective_influence(target, cache)))
        assert sizes == sorted(sizes)

    def test_cache_drops_members_of_key(self):
        cache = InfluenceCache()
        assert cache.put(Combination.of("A"), {"A", "B"}) == {"B"}
        assert Combination.of("A") in cache
        assert len(cache) == 1
