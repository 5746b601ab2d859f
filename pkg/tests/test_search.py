import pytest

from src.analysis.influence import InfluenceCache
from src.analysis.model import AnalysisConfig, Combination, ImportantFeatureSet, Problem, validate_graph
from src.analysis.search import (
    BudgetTracker,
    MinimalityVerdict,
    ProblemResult,
    SearchStrategy,
    analyze_problem,
    check_minimal,
    greedy_order,
    select_candidate,
)
from src.errors import BaselineFails, BudgetTooSmall, EmptyCandidates, InvariantViolation
from src.pipeline.base import ExecutionRecord, Outcome, OutcomeKind, SystemUnderTest, error_record

from tests.conftest import combos, important, make_problem


def analyze(sut, problem, engine, config=AnalysisConfig(), strategy=SearchStrategy()):
    return analyze_problem(sut, sut.spec.graph(), config, engine, problem, strategy=strategy)


class ErroringSut(SystemUnderTest):
    """Wraps a simulator and reports ExecError for the listed intervention sets."""

    def __init__(self, inner, error_on, repeat_count=1):
        self.inner = inner
        self.spec = inner.spec
        self.error_on = {frozenset(s) for s in error_on}
        self.repeat_count = repeat_count

    def _run(self, problem, intervention, run_seed, disabled, pinned):
        if frozenset(intervention) in self.error_on:
            return error_record(problem, intervention, "crashed")
        return self.inner._run(problem, intervention, run_seed, disabled, pinned)


class CountingSut(SystemUnderTest):
    def __init__(self, inner):
        self.inner = inner
        self.spec = inner.spec
        self.runs = 0

    def _run(self, problem, intervention, run_seed, disabled, pinned):
        self.runs += 1
        return self.inner._run(problem, intervention, run_seed, disabled, pinned)


class AlwaysFails(SystemUnderTest):
    def _run(self, problem, intervention, run_seed, disabled, pinned):
        return ExecutionRecord(problem.id, dict(intervention), Outcome.failed())


class TestAnalyzeProblem:
    def test_independent_features(self, f2, problem4, engine):
        found, stats = analyze(f2, problem4, engine)
        assert found == important(["A"], ["B", "C"])
        assert stats.executions_used <= 100

    def test_all_causes_found_in_single_scan(self, f1, problem4, engine):
        found, stats = analyze(f1, problem4, engine)
        assert found == important(["A"], ["B"], ["D"])
        assert stats.executions_used == 4
        assert stats.combos_tested_per_length == {1: 4}
        assert stats.pruned_by_minimality == 6 + 4 + 1

    def test_influence_pruning_trace(self, f3, problem5, engine):
        found, stats = analyze(f3, problem5, engine)
        assert found == important(["A", "E"], ["D", "E"])
        assert Combination.of("C", "D") in stats.influence_pruned
        assert set(stats.influence_pruned) == set(combos("CD", "BD", "BC"))
        assert stats.pruned_by_influence == 3
        assert stats.combos_tested_per_length[2] == 7
        assert stats.executions_used == 5 + 7 + 5 + 1

    def test_without_influence_pruning_runs_more(self, f3, problem5, engine):
        found, stats = analyze(f3, problem5, engine, strategy=SearchStrategy.named("no-influence-pruning"))
        assert found == important(["A", "E"], ["D", "E"])
        assert stats.pruned_by_influence == 0
        assert stats.combos_tested_per_length[2] == 10

    @pytest.mark.parametrize("name", ["full", "no-greedy", "no-influence-pruning", "no-minimality-pruning"])
    def test_every_strategy_finds_the_same_causes(self, f3, problem5, engine, name):
        found, _ = analyze(f3, problem5, engine, strategy=SearchStrategy.named(name))
        assert found == important(["A", "E"], ["D", "E"])
        assert found.is_antichain()

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            SearchStrategy.named("random")

    def test_deterministic(self, f3, problem5, engine):
        first = analyze(f3, problem5, engine)
        second = analyze(f3, problem5, engine)
        assert first[0] == second[0]
        assert first[1].to_dict() == second[1].to_dict()

    def test_budget_stops_after_exact_fit(self, f2, problem4, engine):
        found, stats = analyze(f2, problem4, engine, AnalysisConfig(budget=5))
        assert found == important(["A"], ["B", "C"])
        assert stats.executions_used == 5
        assert stats.budget_exhausted

    def test_budget_covers_only_single_scan(self, f2, problem4, engine):
        found, stats = analyze(f2, problem4, engine, AnalysisConfig(budget=4))
        assert found == important(["A"])
        assert stats.executions_used == 4
        assert stats.budget_exhausted

    def test_budget_too_small(self, f2, problem4, engine):
        with pytest.raises(BudgetTooSmall):
            analyze(f2, problem4, engine, AnalysisConfig(budget=3))

    def test_repeat_count_is_charged(self, f2, problem4, engine):
        sut = ErroringSut(f2, [], repeat_count=3)
        with pytest.raises(BudgetTooSmall):
            analyze(sut, problem4, engine, AnalysisConfig(budget=11))
        found, stats = analyze(sut, problem4, engine, AnalysisConfig(budget=13))
        assert stats.executions_used == 12
        assert found == important(["A"])

    def test_baseline_fails(self, problem4, engine):
        graph = validate_graph("ABCD", [])
        with pytest.raises(BaselineFails):
            analyze_problem(AlwaysFails(), graph, AnalysisConfig(), engine, problem4)

    def test_missing_baseline_value(self, f2, engine):
        problem = make_problem("ABC")
        with pytest.raises(InvariantViolation):
            analyze(f2, problem, engine)

    def test_empty_baseline_value_rejected_before_any_run(self, f2, engine):
        problem = make_problem("ABCD")
        problem = Problem(problem.id, problem.specification, {**problem.baseline, "C": ""})
        sut = CountingSut(f2)
        with pytest.raises(InvariantViolation, match=r"\['C'\]"):
            analyze(sut, problem, engine)
        assert sut.runs == 0

    def test_early_stop(self, f2, problem4, engine):
        found, stats = analyze(f2, problem4, engine, AnalysisConfig(patience=1))
        assert found == important(["A"], ["B", "C"])
        assert stats.early_stops == 1
        assert stats.early_stopped_lengths == [2]

    def test_exec_errors_are_retried_then_dropped(self, f2, problem4, engine):
        sut = ErroringSut(f2, [{"C"}])
        found, stats = analyze(sut, problem4, engine)
        assert found == important(["A"])
        assert stats.exec_errors == 4
        assert stats.dropped == 1
        assert stats.unverifiable == [Combination.of("B", "C")]
        assert stats.minimality_executions == 2

    def test_max_length_clamped_to_feature_count(self, f2, problem4, engine):
        found, _ = analyze(f2, problem4, engine, AnalysisConfig(max_length=9))
        assert found == important(["A"], ["B", "C"])

    def test_max_length_one_only_scans_singletons(self, f2, problem4, engine):
        found, stats = analyze(f2, problem4, engine, AnalysisConfig(max_length=1))
        assert found == important(["A"])
        assert stats.executions_used == 4


class TestSelectCandidate:
    def test_largest_collective_influence(self):
        cache = InfluenceCache.from_mapping({Combination.of("A"): {"B", "C"}})
        candidates = [Combination(p) for p in ["AB", "AC", "AD", "BC", "BD", "CD"]]
        assert select_candidate(candidates, cache) == Combination.of("A", "D")

    def test_empty_cache_takes_lexicographic_first(self):
        candidates = combos("CD", "AB", "BD")
        assert select_candidate(candidates, InfluenceCache()) == Combination.of("A", "B")

    def test_single_candidate(self):
        assert select_candidate(combos("BD"), InfluenceCache()) == Combination.of("B", "D")

    def test_empty(self):
        with pytest.raises(EmptyCandidates):
            select_candidate([], InfluenceCache())

    def test_greedy_order_repeats_selection(self):
        cache = InfluenceCache.from_mapping({Combination.of("A"): {"B", "C"}, Combination.of("D"): {"B"}})
        candidates = [Combination(p) for p in ["AB", "AC", "AD", "BC", "BD", "CD"]]
        order = greedy_order(candidates, cache)
        remaining = list(candidates)
        for picked in order:
            assert picked == select_candidate(remaining, cache)
            remaining.remove(picked)
        assert order[0] == Combination.of("A", "D")


class TestCheckMinimal:
    def never_run(self, combo):
        raise AssertionError(f"unexpected execution of {combo}")

    def test_cached_passing_subsets(self):
        results = {Combination.of("B"): OutcomeKind.PASS, Combination.of("C"): OutcomeKind.PASS}
        budget = BudgetTracker(10)
        verdict = check_minimal(Combination.of("B", "C"), results, self.never_run, budget)
        assert verdict is MinimalityVerdict.MINIMAL
        assert budget.used == 0

    def test_cached_failing_subset(self):
        results = {Combination.of("A"): OutcomeKind.FAIL}
        verdict = check_minimal(Combination.of("A", "B"), results, self.never_run, BudgetTracker(10))
        assert verdict is MinimalityVerdict.NOT_MINIMAL

    def test_singleton_is_minimal(self):
        assert check_minimal(Combination.of("A"), {}, self.never_run, BudgetTracker(0)) is MinimalityVerdict.MINIMAL

    def test_no_budget_left(self):
        budget = BudgetTracker(1)
        budget.charge()
        verdict = check_minimal(Combination.of("A", "B"), {}, self.never_run, budget)
        assert verdict is MinimalityVerdict.UNVERIFIABLE

    def test_uncached_failing_subset(self):
        budget = BudgetTracker(10)

        def run(combo):
            budget.charge()
            outcome = Outcome.failed() if combo == Combination.of("B") else Outcome.passed()
            return ExecutionRecord("p1", {}, outcome)

        verdict = check_minimal(Combination.of("A", "B"), {}, run, budget)
        assert verdict is MinimalityVerdict.NOT_MINIMAL
        assert budget.used == 2

    def test_repeated_errors(self):
        calls = []

        def run(combo):
            calls.append(combo)
            return ExecutionRecord("p1", {}, Outcome.error("boom"))

        verdict = check_minimal(Combination.of("A", "B"), {Combination.of("A"): OutcomeKind.PASS}, run, BudgetTracker(10))
        assert verdict is MinimalityVerdict.UNVERIFIABLE
        assert calls == [Combination.of("B")] * 2


class TestBudgetTracker:
    def test_charge_and_remaining(self):
        budget = BudgetTracker(3)
        budget.charge(2)
        assert budget.remaining == 1
        assert not budget.can_afford(2)

    def test_overrun(self):
        with pytest.raises(RuntimeError):
            BudgetTracker(1).charge(2)


class TestProblemResult:
    def test_record_fields(self, f2, problem4, engine):
        found, stats = analyze(f2, problem4, engine)
        data = ProblemResult.from_search(problem4.id, found, stats).to_dict()
        assert set(data) == {"problem_id", "important_sets", "unverifiable", "stats", "source"}
        assert data["important_sets"] == [["A"], ["B", "C"]]
        assert data["stats"]["executions_used"] == stats.executions_used

    def test_from_dict(self):
        data = {"problem_id": "p9", "important_sets": [["B", "A"]], "unverifiable": [["C", "D"]], "stats": {}}
        result = ProblemResult.from_dict(data)
        assert result.important == ImportantFeatureSet.from_lists([["A", "B"]])
        assert result.unverifiable == (Combination.of("C", "D"),)
        assert result.source == "analyze"
