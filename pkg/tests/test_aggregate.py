import itertools
import math
import random

import pytest

from src.analysis.aggregate import (
    ResponsibilityTable,
    category_responsibility,
    degree_of_responsibility,
    feature_responsibility,
    fr_std,
    kendall_tau,
    length_contribution,
    normalize,
    rank_features,
    topk_appearance,
)
from src.analysis.model import Category, Combination, Feature
from src.analysis.search import ProblemResult
from src.errors import MismatchedIdSets, NotAMember, TooFewFeatures, UnknownFeature

from tests.conftest import important


def pair_count_tau(a, b):
    """Tau-a by counting pairs; equals tau-b when neither ranking has ties."""
    position_a = {f: i for i, f in enumerate(a)}
    position_b = {f: i for i, f in enumerate(b)}
    concordant = discordant = 0
    for x, y in itertools.combinations(a, 2):
        sign = (position_a[x] - position_a[y]) * (position_b[x] - position_b[y])
        if sign > 0:
            concordant += 1
        else:
            discordant += 1
    return (concordant - discordant) / (concordant + discordant)


class TestDegreeOfResponsibility:
    def test_inverse_size(self):
        assert degree_of_responsibility(Combination.of("A", "B", "C"), "B") == pytest.approx(1 / 3)

    def test_not_a_member(self):
        with pytest.raises(NotAMember):
            degree_of_responsibility(Combination.of("A"), "B")

    def test_members_sum_to_one(self):
        for size in range(1, 8):
            combo = Combination(tuple(f"F{i}" for i in range(size)))
            total = math.fsum(degree_of_responsibility(combo, f) for f in combo)
            assert abs(total - 1.0) < 1e-12


class TestFeatureResponsibility:
    def test_closed_form(self, fr_results):
        table = feature_responsibility(fr_results)
        assert abs(table.fr["A"] - 2.0) < 1e-9
        assert abs(table.fr["B"] - 0.25) < 1e-9
        assert abs(table.fr["C"] - 0.25) < 1e-9
        assert table.ranking == ("A", "B", "C")

    def test_accepts_result_records(self, fr_results):
        records = [ProblemResult(pid, s) for pid, s in fr_results.items()]
        assert feature_responsibility(records).fr == feature_responsibility(fr_results).fr

    def test_schema_features_default_to_zero(self, fr_results):
        table = feature_responsibility(fr_results, features=["A", "B", "C", "D"])
        assert table.fr["D"] == 0.0
        assert table.ranking[-1] == "D"

    def test_unknown_feature(self, fr_results):
        with pytest.raises(UnknownFeature):
            feature_responsibility(fr_results, features=["A", "B"])

    def test_empty_results(self):
        table = feature_responsibility({}, features=["A", "B"])
        assert table.fr == {"A": 0.0, "B": 0.0}
        assert table.by_length_contribution == {}

    def test_rows(self, fr_results):
        rows = feature_responsibility(fr_results).rows()
        assert rows[0] == {"feature_id": "A", "fr": 2.0, "normalized_fr": 1.0, "rank": 1}
        assert rows[1]["normalized_fr"] == pytest.approx(0.125)


class TestLengthContribution:
    def test_percentages(self, fr_results):
        shares = length_contribution(fr_results)
        # singletons add 1 each, the pair adds 1/2
        assert shares[1] == pytest.approx(100 * 2 / 2.5)
        assert shares[2] == pytest.approx(100 * 0.5 / 2.5)
        assert set(shares) == {1, 2}
        assert sum(shares.values()) == pytest.approx(100.0)

    def test_only_singletons(self):
        assert length_contribution([important(["A"]), important(["B"], ["C"])]) == {1: 100.0}

    def test_only_observed_lengths_are_listed(self):
        assert length_contribution([important(["A", "B", "C"])]) == {3: 100.0}


class TestRanking:
    def test_ties_broken_by_id(self):
        assert rank_features({"B": 1.0, "A": 1.0, "C": 2.0}) == ("C", "A", "B")

    def test_normalize(self):
        assert normalize({"A": 2.0, "B": 1.0}, "max") == {"A": 1.0, "B": 0.5}
        assert normalize({"A": 3.0, "B": 1.0}, "sum") == {"A": 0.75, "B": 0.25}
        assert normalize({"A": 0.0}, "max") == {"A": 0.0}
        with pytest.raises(ValueError):
            normalize({"A": 1.0}, "median")


class TestKendallTau:
    def test_identical(self):
        assert kendall_tau(["A", "B", "C"], ["A", "B", "C"]) == pytest.approx(1.0)

    def test_reversal(self):
        assert kendall_tau(["A", "B", "C", "D"], ["D", "C", "B", "A"]) == pytest.approx(-1.0)

    def test_matches_pair_counting(self):
        rng = random.Random(11)
        for _ in range(1000):
            n = rng.randint(2, 8)
            ids = [f"F{i}" for i in range(n)]
            a = rng.sample(ids, n)
            b = rng.sample(ids, n)
            assert abs(kendall_tau(a, b) - pair_count_tau(a, b)) < 1e-12

    def test_score_mappings_with_ties(self):
        tau = kendall_tau({"A": 2.0, "B": 1.0, "C": 1.0}, {"A": 3.0, "B": 2.0, "C": 1.0})
        assert tau == pytest.approx(2 / math.sqrt(6))

    def test_all_tied_is_zero(self):
        assert kendall_tau({"A": 1.0, "B": 1.0}, {"A": 2.0, "B": 1.0}) == 0.0

    def test_single_feature(self):
        assert kendall_tau(["A"], ["A"]) == 1.0

    def test_mismatched_ids(self):
        with pytest.raises(MismatchedIdSets):
            kendall_tau(["A", "B"], ["A", "C"])

    def test_duplicate_in_list(self):
        with pytest.raises(MismatchedIdSets):
            kendall_tau(["A", "A"], ["A", "A"])


class TestStatistics:
    def test_fr_std_uniform_is_zero(self):
        table = ResponsibilityTable(fr={"A": 1.0, "B": 1.0}, ranking=("A", "B"))
        assert fr_std(table) == 0.0

    def test_fr_std_population(self):
        table = ResponsibilityTable(fr={"A": 2.0, "B": 0.0}, ranking=("A", "B"))
        assert fr_std(table, "max") == pytest.approx(0.5)

    def test_fr_std_needs_two_features(self):
        with pytest.raises(TooFewFeatures):
            fr_std(ResponsibilityTable(fr={"A": 1.0}, ranking=("A",)))

    def test_topk_appearance(self):
        first = ResponsibilityTable(fr={"A": 2.0, "B": 1.0, "C": 0.0}, ranking=("A", "B", "C"))
        second = ResponsibilityTable(fr={"A": 0.0, "B": 1.0, "C": 2.0}, ranking=("C", "B", "A"))
        assert topk_appearance({"one": first, "two": second}, 2) == {"B": 2, "A": 1, "C": 1}

    def test_category_responsibility(self, fr_results):
        table = feature_responsibility(fr_results)
        features = [
            Feature("A", Category.SPECIFICATION),
            Feature("B", Category.DESIGN),
            Feature("C", Category.DESIGN),
        ]
        totals = category_responsibility(table, features)
        assert totals == {"Specification": 2.0, "Analysis": 0.0, "Design": 0.5, "Dependency": 0.0}
