import pytest

from src.errors import LengthOutOfRange, ParseError, TooManyFeatures
from src.pipeline.benchmark import (
    CauseProfile,
    benchmark_features,
    generate_benchmark,
    load_benchmark,
    write_benchmark,
)
from src.pipeline.simulator import build_sim


def test_identical_seed_gives_identical_benchmark():
    profile = CauseProfile.for_lengths([1, 2, 3, 4])
    first = generate_benchmark(7, 12, 100, profile)
    second = generate_benchmark(7, 12, 100, profile)
    assert len(first) == 100
    assert [i.spec.to_dict() for i in first] == [i.spec.to_dict() for i in second]
    assert [i.problem for i in first] == [i.problem for i in second]


def test_different_seed_differs(benchmark_factory):
    first = benchmark_factory(seed=1)
    second = benchmark_factory(seed=2)
    assert [i.spec.to_dict() for i in first] != [i.spec.to_dict() for i in second]


def test_every_instance_builds(benchmark_factory):
    for instance in benchmark_factory(features=12, instances=30, lengths=(1, 2, 3, 4)):
        sim = build_sim(instance.spec)
        assert instance.problem.covers(instance.spec.graph())
        assert execute_clean(sim, instance.problem)
        assert all(1 <= len(c) <= 4 for c in instance.spec.planted_causes)


def execute_clean(sim, problem) -> bool:
    return sim.execute(problem, {}).outcome.is_pass


def test_planted_causes_form_an_antichain(benchmark_factory):
    for instance in benchmark_factory(instances=50):
        causes = list(instance.spec.planted_causes)
        assert causes
        for a in causes:
            for b in causes:
                assert a is b or not a <= b


def test_influence_is_transitively_closed(benchmark_factory):
    for instance in benchmark_factory(features=10, edge_probability=0.4):
        influence = instance.spec.influence
        for src, targets in influence.items():
            for mid in targets:
                assert influence[mid] <= targets


def test_too_many_features():
    with pytest.raises(TooManyFeatures):
        generate_benchmark(7, 20, 10)


def test_cause_length_longer_than_features():
    with pytest.raises(LengthOutOfRange):
        generate_benchmark(7, 3, 10, CauseProfile.for_lengths([4]))


def test_fault_rate_one_gives_every_problem_a_planted_fault(benchmark_factory):
    for instance in benchmark_factory(fault_rate=1.0):
        assert frozenset(instance.problem.faults) in instance.spec.planted_causes
        assert build_sim(instance.spec).execute(instance.problem, instance.problem.faults).outcome.is_fail


def test_fault_rate_zero_gives_clean_problems(benchmark_factory):
    assert all(not i.problem.faults for i in benchmark_factory())


def test_write_then_load(tmp_path, benchmark_factory):
    instances = benchmark_factory(instances=3)
    path = tmp_path / "bench.json"
    write_benchmark(instances, path)
    loaded = load_benchmark(path)
    assert [i.problem for i in loaded] == [i.problem for i in instances]
    assert [i.spec.to_dict() for i in loaded] == [i.spec.to_dict() for i in instances]


def test_load_malformed(tmp_path):
    path = tmp_path / "bench.json"
    path.write_text('[{"spec": {}}]', encoding="utf-8")
    with pytest.raises(ParseError):
        load_benchmark(path)


def test_benchmark_features_cover_every_category(benchmark_factory):
    features = benchmark_features(benchmark_factory(features=12)[0].spec)
    assert [f.stage_index for f in features] == list(range(12))
    assert len({f.category for f in features}) == 4
