import itertools

import pytest

from src.errors import (
    NotAntichain,
    NotTransitivelyClosed,
    PredicateReferencesUnknownFeature,
    SimSpecError,
    UnknownFeature,
)
from src.pipeline.base import ExecutionRecord, Outcome, OutcomeKind, SystemUnderTest, execute
from src.pipeline.simulator import SimPipelineSpec, build_sim, sentinel

from tests.conftest import make_problem, make_spec


def run(sut, problem, features, **kwargs):
    return execute(sut, problem, {f: f"replacement for {f}" for f in features}, **kwargs)


class TestExecute:
    def test_unaffected_feature_passes(self, f1, problem4):
        record = run(f1, problem4, "C")
        assert record.outcome.is_pass
        assert record.observed["C"] == sentinel("C", 0)
        assert {f for f, v in record.observed.items() if v.startswith("corrupted:")} == {"C"}

    def test_propagation_reaches_planted_cause(self, f1, problem4):
        record = run(f1, problem4, "B")
        assert record.outcome.is_fail
        assert record.observed["D"] == sentinel("D", 0)
        assert record.observed["A"] == problem4.baseline["A"]

    def test_empty_intervention_passes(self, f1, problem4):
        record = execute(f1, problem4, {})
        assert record.outcome == Outcome.passed()
        assert record.observed == dict(problem4.baseline)

    def test_tokens_sum_produced_features(self, problem4):
        sim = build_sim(make_spec("ABCD", weights={"A": 1, "B": 2, "C": 3, "D": 4}))
        assert execute(sim, problem4, {}).tokens == 10
        assert execute(sim, problem4, {}, disabled=["B", "D"]).tokens == 4

    def test_disabled_feature_is_absent(self, f1, problem4):
        record = run(f1, problem4, "B", disabled=["D"])
        assert record.outcome.is_pass
        assert record.observed["D"] == ""

    def test_pinned_feature_keeps_baseline(self, f1, problem4):
        record = run(f1, problem4, "A", pinned=["D"])
        assert record.outcome.is_pass
        assert record.observed["D"] == problem4.baseline["D"]
        assert record.observed["B"] == sentinel("B", 0)

    def test_sentinel_carries_run_seed(self, f1, problem4):
        record = run(f1, problem4, "C", run_seed=42)
        assert record.observed["C"] == "corrupted:C:42"

    def test_unknown_feature(self, f1, problem4):
        with pytest.raises(UnknownFeature):
            run(f1, problem4, "Z")

    def test_reproducible_across_repeats(self, f1, problem4):
        first = run(f1, problem4, "AC")
        for _ in range(100):
            assert run(f1, problem4, "AC") == first

    def test_monotone_at_zero_noise(self, f1, problem4):
        ids = "ABCD"
        subsets = [s for n in range(1, 5) for s in itertools.combinations(ids, n)]
        failing = {s for s in subsets if run(f1, problem4, s).outcome.is_fail}
        for small in failing:
            for large in subsets:
                if set(small) <= set(large):
                    assert large in failing

    def test_corruption_closed_under_influence(self, f1, problem4):
        for n in range(1, 5):
            for sources in itertools.combinations("ABCD", n):
                corrupted = f1.closure(sources)
                for size in range(1, len(corrupted - set(sources)) + 1):
                    for subset in itertools.combinations(sorted(corrupted - set(sources)), size):
                        assert f1.closure(subset) <= corrupted


class TestNoise:
    def test_noise_makes_simulator_nondeterministic(self):
        sim = build_sim(make_spec("ABC", {"A": "BC"}, ["C"], noise=0.5))
        assert not sim.deterministic

    def test_noisy_runs_are_seed_stable(self):
        sim = build_sim(make_spec("ABCDE", {"A": "BCDE"}, ["E"], noise=0.5, seed=3))
        problem = make_problem("ABCDE")
        first = run(sim, problem, "A", run_seed=1)
        assert run(sim, problem, "A", run_seed=1) == first

    def test_full_noise_suppresses_propagation(self):
        sim = build_sim(make_spec("AB", {"A": "B"}, ["B"], noise=1.0))
        assert run(sim, make_problem("AB"), "A").outcome.is_pass


class TestBuildSim:
    def test_not_transitively_closed(self):
        with pytest.raises(NotTransitivelyClosed):
            build_sim(make_spec("ABC", {"A": "B", "B": "C"}))

    def test_not_antichain(self):
        with pytest.raises(NotAntichain):
            build_sim(make_spec("AB", {}, ["A", "AB"]))

    def test_cause_with_unknown_feature(self):
        with pytest.raises(PredicateReferencesUnknownFeature):
            build_sim(make_spec("AB", {}, ["Z"]))

    def test_noise_out_of_range(self):
        with pytest.raises(SimSpecError):
            build_sim(make_spec("AB", noise=1.5))

    def test_self_influence(self):
        with pytest.raises(SimSpecError):
            build_sim(make_spec("AB", {"A": "A"}))

    def test_spec_round_trip(self, f1_spec):
        assert build_sim(SimPipelineSpec.from_dict(f1_spec.to_dict())).closure("A") == {"A", "B", "D"}


class FlakySut(SystemUnderTest):
    """Returns the queued outcomes in order."""

    def __init__(self, kinds, repeat_count=3):
        self.kinds = list(kinds)
        self.repeat_count = repeat_count

    def _run(self, problem, intervention, run_seed, disabled, pinned):
        kind = self.kinds.pop(0)
        outcome = Outcome.error("boom") if kind is OutcomeKind.ERROR else Outcome(kind)
        return ExecutionRecord(problem.id, dict(intervention), outcome)


class TestMajority:
    def test_majority_fail(self, problem4):
        sut = FlakySut([OutcomeKind.FAIL, OutcomeKind.PASS, OutcomeKind.FAIL])
        assert execute(sut, problem4, {}).outcome.is_fail
        assert sut.cost == 3

    def test_tie_is_an_error(self, problem4):
        sut = FlakySut([OutcomeKind.FAIL, OutcomeKind.PASS, OutcomeKind.ERROR])
        assert execute(sut, problem4, {}).outcome.is_error

    def test_errors_do_not_vote(self, problem4):
        sut = FlakySut([OutcomeKind.ERROR, OutcomeKind.ERROR, OutcomeKind.PASS])
        assert execute(sut, problem4, {}).outcome.is_pass
