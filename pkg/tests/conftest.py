import json

import pytest

from src.analysis.intervene import TemplateEngine
from src.analysis.model import AnalysisConfig, Combination, ImportantFeatureSet, Problem
from src.pipeline.benchmark import CauseProfile, generate_benchmark
from src.pipeline.simulator import SimPipelineSpec, build_sim

BASELINE_WORDS = {
    "A": "collect requirement statement",
    "B": "analyse input boundaries",
    "C": "choose data layout",
    "D": "declare file list",
    "E": "enumerate shared helpers",
}

# effectively unbounded search parameters for oracle comparisons
UNBOUNDED = 10**9


def make_problem(features, problem_id="p1", faults=None) -> Problem:
    return Problem(
        id=problem_id,
        specification=f"fixture problem {problem_id}",
        baseline={f: BASELINE_WORDS.get(f, f"value of {f}") for f in features},
        faults=faults or {},
    )


def make_spec(features, influence=None, causes=(), weights=None, noise=0.0, seed=0) -> SimPipelineSpec:
    return SimPipelineSpec(
        features=tuple(features),
        influence={k: frozenset(v) for k, v in (influence or {}).items()},
        planted_causes=tuple(frozenset(c) for c in causes),
        token_weights=weights or {f: 10 for f in features},
        corruption_noise=noise,
        seed=seed,
    )


def important(*sets) -> ImportantFeatureSet:
    return ImportantFeatureSet.from_lists(sets)


@pytest.fixture
def f1_spec():
    """A->{B,D}, B->{D}; planted {A,C} and {D}."""
    return make_spec("ABCD", {"A": "BD", "B": "D"}, ["AC", "D"])


@pytest.fixture
def f2_spec():
    """No influence; planted {A} and {B,C}."""
    return make_spec("ABCD", {}, ["A", "BC"])


@pytest.fixture
def f3_spec():
    """A->{B,C,D}; planted {D,E}."""
    return make_spec("ABCDE", {"A": "BCD"}, ["DE"])


@pytest.fixture
def f1(f1_spec):
    return build_sim(f1_spec)


@pytest.fixture
def f2(f2_spec):
    return build_sim(f2_spec)


@pytest.fixture
def f3(f3_spec):
    return build_sim(f3_spec)


@pytest.fixture
def problem4():
    return make_problem("ABCD")


@pytest.fixture
def problem5():
    return make_problem("ABCDE")


@pytest.fixture
def engine():
    return TemplateEngine()


@pytest.fixture
def config():
    return AnalysisConfig()


@pytest.fixture
def unbounded():
    return AnalysisConfig(budget=UNBOUNDED, max_length=5, patience=UNBOUNDED)


@pytest.fixture
def fr_results():
    """p1 {{A}}, p2 {{A},{B,C}} over features A, B, C."""
    return {
        "p1": important(["A"]),
        "p2": important(["A"], ["B", "C"]),
    }


@pytest.fixture
def benchmark_factory():
    def factory(seed=7, features=8, instances=10, lengths=(1, 2, 3), **profile):
        return generate_benchmark(seed, features, instances, CauseProfile.for_lengths(lengths, **profile))
    return factory


@pytest.fixture
def sim_files(tmp_path, f2_spec):
    """Config, simulator spec and problems on disk for the F2 fixture."""
    spec_path = tmp_path / "sim.json"
    spec_path.write_text(json.dumps(f2_spec.to_dict()), encoding="utf-8")
    problems_path = tmp_path / "problems.json"
    problems = [make_problem("ABCD", f"p{i}").to_dict() for i in range(1, 4)]
    problems_path.write_text(json.dumps(problems), encoding="utf-8")
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps({
        "problems": "problems.json",
        "sut": {"kind": "sim", "spec": "sim.json"},
        "analysis": {"budget": 50, "seed": 3},
    }), encoding="utf-8")
    return config_path


def combos(*sets) -> list[Combination]:
    return [Combination(tuple(s)) for s in sets]
